//! Approximate contraction with the sweep boundary held as a tensor train.
//!
//! Every open edge of the boundary is one physical leg of the train. Legs
//! are kept sorted by their position across the sweep (columns for the
//! bottom-up sweep, rows for the left-right sweep), so a cell only touches a
//! short contiguous stretch of cores. Absorbing a cell merges that stretch,
//! contracts the cell in, and splits the block back into cores by SVD.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{fold_boundary, sweep_groups, Labeled, Scheme};
use crate::network::{Endpoint, FactorNetwork};
use crate::tensor::{contract_pair, matmul_f64, qr, svd_sorted, DenseTensor, ScalarMode};

/// Chain of `left x physical x right` cores. An empty chain is a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain {
    cores: Vec<DenseTensor>,
    scale: f64,
    chi_cap: Option<usize>,
}

impl TensorTrain {
    pub fn scalar(value: f64) -> Self {
        TensorTrain {
            cores: Vec::new(),
            scale: value,
            chi_cap: None,
        }
    }

    pub fn from_cores(cores: Vec<DenseTensor>) -> Result<Self> {
        for (i, c) in cores.iter().enumerate() {
            if c.rank() != 3 || c.mode() != ScalarMode::Float {
                return Err(Error::Input(format!(
                    "core {i} must be a rank-3 float tensor, got {}",
                    c.shape()
                )));
            }
            if i > 0 && cores[i - 1].dims()[2] != c.dims()[0] {
                return Err(Error::Input(format!("bond mismatch between cores {} and {i}", i - 1)));
            }
        }
        if let (Some(first), Some(last)) = (cores.first(), cores.last()) {
            if first.dims()[0] != 1 || last.dims()[2] != 1 {
                return Err(Error::Input("end bonds must have dimension 1".into()));
            }
        }
        Ok(TensorTrain {
            cores,
            scale: 1.0,
            chi_cap: None,
        })
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn chi_cap(&self) -> Option<usize> {
        self.chi_cap
    }

    /// Internal bond dimensions, one per adjacent pair of cores.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.cores.iter().skip(1).map(|c| c.dims()[0]).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn physical_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[1]).collect()
    }

    /// The represented tensor, one axis per core.
    pub fn to_dense(&self) -> DenseTensor {
        let mut rows = 1usize;
        let mut data = vec![self.scale];
        let mut bond = 1usize;
        for c in &self.cores {
            let (l, p, r) = (c.dims()[0], c.dims()[1], c.dims()[2]);
            debug_assert_eq!(l, bond);
            data = matmul_f64(&data, c.float_data().unwrap(), rows, l, p * r);
            rows *= p;
            bond = r;
        }
        DenseTensor::from_float(self.physical_dims(), data).expect("consistent dims")
    }

    /// Orthogonalizes left to right, then truncates every bond to at most
    /// `chi` right to left. Returns the discarded weight (sum of squared
    /// dropped singular values).
    pub fn round(&mut self, chi: usize) -> f64 {
        let chi = chi.max(1);
        self.chi_cap = Some(chi);
        let len = self.cores.len();
        if len < 2 {
            return 0.0;
        }
        for i in 0..len - 1 {
            let (l, p, r) = dims3(&self.cores[i]);
            let (q, rr, k) = qr(l * p, r, self.cores[i].float_data().unwrap());
            self.cores[i] = core(l, p, k, q);
            let (_, p2, r2) = dims3(&self.cores[i + 1]);
            let next = matmul_f64(&rr, self.cores[i + 1].float_data().unwrap(), k, r, p2 * r2);
            self.cores[i + 1] = core(k, p2, r2, next);
        }
        let mut discarded = 0.0;
        for i in (1..len).rev() {
            let (l, p, r) = dims3(&self.cores[i]);
            let svd = svd_sorted(l, p * r, self.cores[i].float_data().unwrap());
            let keep = svd.numerical_rank().max(1).min(chi);
            discarded += svd.s[keep..].iter().map(|x| x * x).sum::<f64>();
            let (u, s, vt) = svd.truncate(keep);
            self.cores[i] = core(keep, p, r, vt);
            let us: Vec<f64> = u
                .chunks_exact(keep)
                .flat_map(|row| row.iter().zip(&s).map(|(a, b)| a * b))
                .collect();
            let (l0, p0, _) = dims3(&self.cores[i - 1]);
            let prev = matmul_f64(self.cores[i - 1].float_data().unwrap(), &us, l0 * p0, l, keep);
            self.cores[i - 1] = core(l0, p0, keep, prev);
        }
        discarded
    }
}

/// Rounded copy of `tt` with every bond at most `chi`.
pub fn tt_round(tt: &TensorTrain, chi: usize) -> TensorTrain {
    let mut out = tt.clone();
    out.round(chi);
    out
}

fn dims3(c: &DenseTensor) -> (usize, usize, usize) {
    (c.dims()[0], c.dims()[1], c.dims()[2])
}

fn core(l: usize, p: usize, r: usize, data: Vec<f64>) -> DenseTensor {
    DenseTensor::from_float(vec![l, p, r], data).expect("core dims match data")
}

/// Splits `[left, dims..., right]` into one core per physical axis by
/// sequential SVD, keeping numerical rank and at most `cap` per bond.
fn split_block(
    data: Vec<f64>,
    left: usize,
    dims: &[usize],
    right: usize,
    cap: Option<usize>,
    discarded: &mut f64,
) -> Vec<DenseTensor> {
    let mut cores = Vec::with_capacity(dims.len());
    let mut rest = data;
    let mut l = left;
    for &d in &dims[..dims.len() - 1] {
        let rows = l * d;
        let cols = rest.len() / rows;
        let svd = svd_sorted(rows, cols, &rest);
        let mut keep = svd.numerical_rank().max(1);
        if let Some(c) = cap {
            keep = keep.min(c);
        }
        *discarded += svd.s[keep..].iter().map(|x| x * x).sum::<f64>();
        let (u, s, vt) = svd.truncate(keep);
        cores.push(core(l, d, keep, u));
        rest = vt
            .chunks_exact(cols)
            .zip(&s)
            .flat_map(|(row, &sv)| row.iter().map(move |x| x * sv))
            .collect();
        l = keep;
    }
    cores.push(core(l, dims[dims.len() - 1], right, rest));
    cores
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApproxConfig {
    /// Round after every cell instead of after every row or column.
    pub round_per_site: bool,
    /// Largest block allowed, in elements.
    pub memory_limit: u128,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            round_per_site: false,
            memory_limit: 1 << 31,
        }
    }
}

/// Moving boundary of a sweep: a tensor train plus the network edge carried
/// by each of its legs.
#[derive(Debug, Clone)]
pub struct SweepBoundary {
    tt: TensorTrain,
    legs: Vec<usize>,
    keys: Vec<(usize, usize)>,
    sites: Vec<Labeled>,
    dims: Vec<usize>,
    limit: u128,
    discarded: f64,
}

impl SweepBoundary {
    /// Trivial boundary for `net`, with every boundary vector folded into
    /// its cell.
    pub fn new(net: &FactorNetwork, scheme: Scheme, memory_limit: u128) -> Result<Self> {
        let mut ignored = 0;
        let sites = fold_boundary(net, ScalarMode::Float, &mut ignored)?;
        let keys = net
            .edges
            .iter()
            .enumerate()
            .map(|(id, e)| {
                let coord = |end: &Endpoint| match end {
                    Endpoint::Site { site, .. } => match scheme {
                        Scheme::BottomUp => net.sites[*site].col,
                        Scheme::LeftRight => net.sites[*site].row,
                    },
                    Endpoint::Boundary(_) => 0,
                };
                (coord(&e.ends[0]) + coord(&e.ends[1]), id)
            })
            .collect();
        Ok(SweepBoundary {
            tt: TensorTrain::scalar(1.0),
            legs: Vec::new(),
            keys,
            sites,
            dims: net.edges.iter().map(|e| e.dim).collect(),
            limit: memory_limit,
            discarded: 0.0,
        })
    }

    pub fn train(&self) -> &TensorTrain {
        &self.tt
    }

    /// Network edge ids of the legs, in core order.
    pub fn legs(&self) -> &[usize] {
        &self.legs
    }

    pub fn discarded_weight(&self) -> f64 {
        self.discarded
    }

    /// Contracts site `s` into the boundary, optionally capping the new
    /// bonds at `cap`.
    pub fn absorb_site(&mut self, s: usize, cap: Option<usize>) -> Result<()> {
        let site = &self.sites[s];
        let consumed: Vec<usize> = site.edges.iter().copied().filter(|e| self.legs.contains(e)).collect();
        let produced: Vec<usize> = site.edges.iter().copied().filter(|e| !self.legs.contains(e)).collect();
        let mut new_legs: Vec<usize> = self
            .legs
            .iter()
            .copied()
            .filter(|e| !consumed.contains(e))
            .chain(produced.iter().copied())
            .collect();
        new_legs.sort_by_key(|&e| self.keys[e]);

        let (old_len, new_len) = (self.legs.len(), new_legs.len());
        let mut a = 0;
        while a < old_len.min(new_len) && self.legs[a] == new_legs[a] {
            a += 1;
        }
        let mut b = 0;
        while b < (old_len - a).min(new_len - a) && self.legs[old_len - 1 - b] == new_legs[new_len - 1 - b] {
            b += 1;
        }
        let old_span = &self.legs[a..old_len - b];
        let new_span = &new_legs[a..new_len - b];

        // merge the touched cores into one block [left, span legs..., right]
        let (left, right, block) = if old_span.is_empty() {
            let d = if a > 0 {
                self.tt.cores[a - 1].dims()[2]
            } else if let Some(c) = self.tt.cores.first() {
                c.dims()[0]
            } else {
                1
            };
            let mut eye = vec![0.0; d * d];
            for i in 0..d {
                eye[i * d + i] = 1.0;
            }
            (d, d, eye)
        } else {
            let first = &self.tt.cores[a];
            let left = first.dims()[0];
            let mut rows = left * first.dims()[1];
            let mut data = first.float_data().unwrap().to_vec();
            let mut right = first.dims()[2];
            for c in &self.tt.cores[a + 1..old_len - b] {
                let (l, p, r) = dims3(c);
                let needed = (rows * p * r) as u128;
                if needed > self.limit {
                    return Err(Error::Resource {
                        needed,
                        limit: self.limit,
                    });
                }
                data = matmul_f64(&data, c.float_data().unwrap(), rows, l, p * r);
                rows *= p;
                right = r;
            }
            (left, right, data)
        };
        let mut block_dims = vec![left];
        block_dims.extend(old_span.iter().map(|&e| self.dims[e]));
        block_dims.push(right);
        let block = DenseTensor::from_float(block_dims, block)?;

        let out_size = left as u128 * right as u128 * new_span.iter().map(|&e| self.dims[e] as u128).product::<u128>();
        if out_size > self.limit {
            return Err(Error::Resource {
                needed: out_size,
                limit: self.limit,
            });
        }
        let pairs: Vec<(usize, usize)> = consumed
            .iter()
            .map(|e| {
                let i = old_span
                    .iter()
                    .position(|x| x == e)
                    .expect("consumed legs lie in the span");
                let j = site.edges.iter().position(|x| x == e).unwrap();
                (i + 1, j)
            })
            .collect();
        let merged = contract_pair(&block, &site.tensor, &pairs)?;

        // merged axes: left, kept span legs, right, produced legs
        let kept: Vec<usize> = old_span.iter().copied().filter(|e| !consumed.contains(e)).collect();
        let position_of = |e: usize| -> usize {
            if let Some(i) = kept.iter().position(|&x| x == e) {
                1 + i
            } else {
                let j = produced
                    .iter()
                    .position(|&x| x == e)
                    .expect("new leg is kept or produced");
                2 + kept.len() + j
            }
        };
        let mut order = vec![0];
        order.extend(new_span.iter().map(|&e| position_of(e)));
        order.push(1 + kept.len());
        let merged = merged.permute_axes(&order)?;
        let data = merged.into_float_data();

        let mut tail = self.tt.cores.split_off(old_len - b);
        self.tt.cores.truncate(a);
        if new_span.is_empty() {
            // a bare bond matrix: fold it into a neighbour
            if let Some(prev) = self.tt.cores.last_mut() {
                let (l, p, r) = dims3(prev);
                *prev = core(
                    l,
                    p,
                    right,
                    matmul_f64(prev.float_data().unwrap(), &data, l * p, r, right),
                );
            } else if let Some(next) = tail.first_mut() {
                let (l, p, r) = dims3(next);
                *next = core(
                    left,
                    p,
                    r,
                    matmul_f64(&data, next.float_data().unwrap(), left, l, p * r),
                );
            } else {
                self.tt.scale *= data[0];
            }
        } else {
            let span_dims: Vec<usize> = new_span.iter().map(|&e| self.dims[e]).collect();
            let cores = split_block(data, left, &span_dims, right, cap, &mut self.discarded);
            self.tt.cores.extend(cores);
        }
        self.tt.cores.append(&mut tail);
        self.legs = new_legs;
        Ok(())
    }

    /// Absorbs the cells of one row or column in order, then rounds to `chi`.
    pub fn absorb_and_round(&mut self, group: &[usize], chi: usize, per_site: bool) -> Result<()> {
        for &s in group {
            self.absorb_site(s, per_site.then_some(chi))?;
            if per_site {
                self.discarded += self.tt.round(chi);
            }
        }
        if !per_site {
            self.discarded += self.tt.round(chi);
        }
        Ok(())
    }

    /// Value of a fully contracted boundary.
    pub fn scalar(&self) -> Option<f64> {
        self.tt.cores.is_empty().then_some(self.tt.scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxResult {
    pub omega: f64,
    pub chi_used: usize,
    pub total_discarded_weight: f64,
    /// `None` when `|omega|` is inside the undecided band.
    pub recovered_bit: Option<u8>,
    pub max_bond: usize,
    /// Seconds spent contracting.
    pub elapsed: f64,
}

/// Readouts this close to zero are reported as undecided.
pub const UNDECIDED_BAND: f64 = 1e-9;

pub fn contract_approx(net: &FactorNetwork, chi: usize, scheme: Scheme) -> Result<ApproxResult> {
    contract_approx_with(net, chi, scheme, &ApproxConfig::default())
}

pub fn contract_approx_with(
    net: &FactorNetwork,
    chi: usize,
    scheme: Scheme,
    config: &ApproxConfig,
) -> Result<ApproxResult> {
    if chi == 0 {
        return Err(Error::Input("bond cap must be at least 1".into()));
    }
    let start = Instant::now();
    let mut boundary = SweepBoundary::new(net, scheme, config.memory_limit)?;
    let mut max_bond = 1;
    for group in sweep_groups(net, scheme) {
        boundary.absorb_and_round(&group, chi, config.round_per_site)?;
        max_bond = max_bond.max(boundary.tt.max_bond());
    }
    let omega = boundary
        .scalar()
        .ok_or_else(|| Error::Contraction(format!("{} legs left open after the sweep", boundary.legs.len())))?;
    let recovered_bit = if omega > UNDECIDED_BAND {
        Some(1)
    } else if omega < -UNDECIDED_BAND {
        Some(0)
    } else {
        None
    };
    Ok(ApproxResult {
        omega,
        chi_used: chi,
        total_discarded_weight: boundary.discarded,
        recovered_bit,
        max_bond,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

/// Smallest integer `x` with `x^k >= target`.
fn ceil_root(target: u128, k: u32) -> u128 {
    let mut x = (target as f64).powf(1.0 / k as f64).ceil() as u128;
    while x > 1 && (x - 1).checked_pow(k).is_none_or(|v| v >= target) {
        x -= 1;
    }
    while x.checked_pow(k).is_some_and(|v| v < target) {
        x += 1;
    }
    x
}

/// Bond dimension that holds the sweep boundary of an `n`-bit network without
/// loss: `⌈6^(n/4)⌉` bottom-up, `⌈2^(n/2)⌉` left-right.
pub fn r_max(n: u32, scheme: Scheme) -> usize {
    let (base, k): (u128, u32) = match scheme {
        Scheme::BottomUp => (6, 4),
        Scheme::LeftRight => (2, 2),
    };
    match base.checked_pow(n) {
        Some(target) => ceil_root(target, k) as usize,
        None => (base as f64).powf(n as f64 / k as f64).ceil() as usize,
    }
}
