//! Exact contraction of a factor network by row or column sweeps.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{Endpoint, FactorNetwork};
use crate::tensor::{contract_pair, DenseTensor, ScalarMode};

/// Order in which the grid is swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Scheme {
    /// Rows from the most significant product bit upwards, each row right to left.
    BottomUp,
    /// Columns from `p_0` rightwards, each column top to bottom.
    LeftRight,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::BottomUp, Scheme::LeftRight];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::BottomUp => "bottom-up",
            Scheme::LeftRight => "left-right",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bottom-up" => Ok(Scheme::BottomUp),
            "left-right" => Ok(Scheme::LeftRight),
            other => Err(Error::Input(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Limits applied while contracting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContractionConfig {
    /// Largest intermediate tensor allowed, in elements.
    pub memory_limit: u128,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        ContractionConfig { memory_limit: 1 << 31 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionStats {
    pub scheme: Scheme,
    pub max_intermediate_elems: usize,
    pub pairwise_contractions: usize,
    /// Seconds spent contracting.
    pub elapsed: f64,
    /// Boundary size after each completed row or column.
    pub boundary_elems: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OmegaValue {
    pub value: i64,
    /// Readout bit, if the network has one.
    pub k: Option<usize>,
}

/// A tensor whose axes are labelled by network edge ids.
#[derive(Debug, Clone)]
pub(crate) struct Labeled {
    pub tensor: DenseTensor,
    pub edges: Vec<usize>,
}

/// Site indices grouped into rows (bottom-up) or columns (left-right), in
/// absorption order.
pub fn sweep_groups(net: &FactorNetwork, scheme: Scheme) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..net.sites.len()).collect();
    let key = |s: usize| {
        let site = &net.sites[s];
        match scheme {
            Scheme::BottomUp => (usize::MAX - site.row, usize::MAX - site.col),
            Scheme::LeftRight => (site.col, site.row),
        }
    };
    order.sort_by_key(|&s| key(s));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for s in order {
        match groups.last_mut() {
            Some(g) if key(g[0]).0 == key(s).0 => g.push(s),
            _ => groups.push(vec![s]),
        }
    }
    groups
}

/// Site tensors with every boundary vector already contracted in.
pub(crate) fn fold_boundary(net: &FactorNetwork, mode: ScalarMode, contractions: &mut usize) -> Result<Vec<Labeled>> {
    let mut out = Vec::with_capacity(net.sites.len());
    for site in &net.sites {
        let mut tensor = match mode {
            ScalarMode::ExactInt => (*site.tensor).clone(),
            ScalarMode::Float => site.tensor.to_float(),
        };
        let mut edges: Vec<usize> = site.axes.iter().map(|a| a.edge).collect();
        let mut a = 0;
        while a < edges.len() {
            let edge = &net.edges[edges[a]];
            let boundary = edge.ends.iter().find_map(|e| match e {
                Endpoint::Boundary(b) => Some(*b),
                _ => None,
            });
            match boundary {
                Some(b) => {
                    let v = &net.boundary[b].vector;
                    let v = match mode {
                        ScalarMode::ExactInt => v.clone(),
                        ScalarMode::Float => v.to_float(),
                    };
                    tensor = contract_pair(&tensor, &v, &[(a, 0)])?;
                    edges.remove(a);
                    *contractions += 1;
                }
                None => a += 1,
            }
        }
        out.push(Labeled { tensor, edges });
    }
    Ok(out)
}

/// Contracts `b` into `acc` over all shared edges. The result keeps the free
/// edges of `acc` followed by those of `b`.
pub(crate) fn absorb(acc: &Labeled, b: &Labeled, limit: u128) -> Result<Labeled> {
    let mut pairs = Vec::new();
    for (i, e) in acc.edges.iter().enumerate() {
        if let Some(j) = b.edges.iter().position(|f| f == e) {
            pairs.push((i, j));
        }
    }
    let free_a = acc
        .edges
        .iter()
        .enumerate()
        .filter(|(i, _)| !pairs.iter().any(|p| p.0 == *i));
    let free_b = b
        .edges
        .iter()
        .enumerate()
        .filter(|(j, _)| !pairs.iter().any(|p| p.1 == *j));
    let mut needed: u128 = 1;
    let mut edges = Vec::new();
    for (i, &e) in free_a {
        needed *= acc.tensor.dims()[i] as u128;
        edges.push(e);
    }
    for (j, &e) in free_b {
        needed *= b.tensor.dims()[j] as u128;
        edges.push(e);
    }
    if needed > limit {
        return Err(Error::Resource { needed, limit });
    }
    let tensor = contract_pair(&acc.tensor, &b.tensor, &pairs)?;
    Ok(Labeled { tensor, edges })
}

/// Contracts the whole network with the given sweep and returns the scalar.
pub fn contract_exact(
    net: &FactorNetwork,
    scheme: Scheme,
    config: &ContractionConfig,
) -> Result<(OmegaValue, ContractionStats)> {
    let start = Instant::now();
    let mut stats = ContractionStats {
        scheme,
        max_intermediate_elems: 1,
        pairwise_contractions: 0,
        elapsed: 0.0,
        boundary_elems: Vec::new(),
    };
    let sites = fold_boundary(net, ScalarMode::ExactInt, &mut stats.pairwise_contractions)?;
    let mut acc: Option<Labeled> = None;
    for group in sweep_groups(net, scheme) {
        for s in group {
            let next = match &acc {
                None => sites[s].clone(),
                Some(a) => {
                    stats.pairwise_contractions += 1;
                    absorb(a, &sites[s], config.memory_limit)?
                }
            };
            stats.max_intermediate_elems = stats.max_intermediate_elems.max(next.tensor.len());
            acc = Some(next);
        }
        stats.boundary_elems.push(acc.as_ref().map_or(1, |a| a.tensor.len()));
    }
    let acc = acc.ok_or_else(|| Error::Contraction("network has no sites".into()))?;
    let value = acc
        .tensor
        .scalar_value_exact()
        .ok_or_else(|| Error::Contraction(format!("{} edges left open after the sweep", acc.edges.len())))?;
    stats.elapsed = start.elapsed().as_secs_f64();
    Ok((
        OmegaValue {
            value,
            k: net.target_bit,
        },
        stats,
    ))
}

pub fn contract_bottom_up(net: &FactorNetwork) -> Result<(OmegaValue, ContractionStats)> {
    contract_exact(net, Scheme::BottomUp, &ContractionConfig::default())
}

pub fn contract_left_right(net: &FactorNetwork) -> Result<(OmegaValue, ContractionStats)> {
    contract_exact(net, Scheme::LeftRight, &ContractionConfig::default())
}
