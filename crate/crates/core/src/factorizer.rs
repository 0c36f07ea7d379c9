//! Bit-by-bit recovery of the larger factor.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::circuit::{bit_length, is_prime, trial_division_factor, MAX_BITS};
use crate::error::{Error, Result};
use crate::exact::{contract_exact, ContractionConfig, Scheme};
use crate::network::build_network;
use crate::tt::{contract_approx_with, ApproxConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Exact,
    /// Tensor-train boundary with the given bond cap.
    Approx(usize),
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Approx(_) => "approx",
        }
    }

    pub fn chi(self) -> Option<usize> {
        match self {
            Mode::Exact => None,
            Mode::Approx(chi) => Some(chi),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Exact => f.write_str("exact"),
            Mode::Approx(chi) => write!(f, "approx(chi={chi})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BitOrder {
    Lsb,
    Msb,
}

impl FromStr for BitOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsb" => Ok(BitOrder::Lsb),
            "msb" => Ok(BitOrder::Msb),
            other => Err(Error::Input(format!("unknown bit order {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorOptions {
    pub scheme: Scheme,
    pub mode: Mode,
    pub order: BitOrder,
    /// Project already recovered bits onto their values.
    pub enforce: bool,
    pub contraction: ContractionConfig,
    pub approx: ApproxConfig,
}

impl FactorOptions {
    pub fn new(scheme: Scheme, mode: Mode) -> Self {
        FactorOptions {
            scheme,
            mode,
            order: BitOrder::Lsb,
            enforce: true,
            contraction: ContractionConfig::default(),
            approx: ApproxConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BitReadout {
    pub k: usize,
    pub omega: f64,
    /// `None` when an approximate readout is too close to zero to call.
    pub bit: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationResult {
    #[serde(rename = "N")]
    pub modulus: u64,
    pub p: u64,
    /// `N / p`, or 0 when `p` does not divide `N`.
    pub q: u64,
    /// Readouts in the order they were taken.
    pub bits: Vec<BitReadout>,
    pub scheme: Scheme,
    pub mode: Mode,
    /// Seconds for the whole run.
    pub t_total: f64,
    /// Seconds spent inside contractions.
    pub t_contraction: f64,
    /// Whether `p` matches the trial-division factor.
    pub correct: bool,
}

/// Largest modulus width accepted by [`factorize`].
pub const MAX_FACTOR_BITS: u32 = 40;

pub fn factorize(modulus: u64, scheme: Scheme, mode: Mode) -> Result<FactorizationResult> {
    factorize_with(modulus, &FactorOptions::new(scheme, mode))
}

/// Recovers `p` one bit at a time, then `q = N / p`.
///
/// In exact mode every readout must be `±1`; anything else means the network
/// has no solution or several (prime `N`, `N = p^2`, more than two factors)
/// and is reported as a degeneracy error.
pub fn factorize_with(modulus: u64, opts: &FactorOptions) -> Result<FactorizationResult> {
    let start = Instant::now();
    if modulus.is_multiple_of(2) || modulus < 9 {
        return Err(Error::Input(format!(
            "modulus must be odd and at least 9, got {modulus}"
        )));
    }
    let n = bit_length(modulus);
    if n > MAX_FACTOR_BITS.min(MAX_BITS) {
        return Err(Error::Input(format!(
            "{n}-bit modulus exceeds the {MAX_FACTOR_BITS}-bit cap"
        )));
    }
    if let Mode::Approx(0) = opts.mode {
        return Err(Error::Input("bond cap must be at least 1".into()));
    }
    let width = n as usize - 1;

    let mut fixed = BTreeMap::new();
    let mut bits = Vec::with_capacity(width);
    let mut t_contraction = 0.0;
    let mut p = 0u64;
    let mut decided = true;
    for k in bit_order(width, opts.order) {
        let (readout, elapsed) = read_bit(modulus, &fixed, k, opts)?;
        t_contraction += elapsed;
        bits.push(readout);
        match readout.bit {
            Some(b) => {
                p |= (b as u64) << k;
                fixed.insert(k, b);
            }
            None => decided = false,
        }
    }
    let q = if p > 0 && modulus.is_multiple_of(p) {
        modulus / p
    } else {
        0
    };
    let correct = decided && q > 0 && matches!(trial_division_factor(modulus), Ok((big, _)) if big == p);
    Ok(FactorizationResult {
        modulus,
        p,
        q,
        bits,
        scheme: opts.scheme,
        mode: opts.mode,
        t_total: start.elapsed().as_secs_f64(),
        t_contraction,
        correct,
    })
}

fn bit_order(width: usize, order: BitOrder) -> Vec<usize> {
    match order {
        BitOrder::Lsb => (0..width).collect(),
        BitOrder::Msb => (0..width).rev().collect(),
    }
}

/// One readout with `fixed` projected (when enforcing), and the seconds spent
/// contracting.
fn read_bit(modulus: u64, fixed: &BTreeMap<usize, u8>, k: usize, opts: &FactorOptions) -> Result<(BitReadout, f64)> {
    let unfixed = BTreeMap::new();
    let net = build_network(modulus, if opts.enforce { fixed } else { &unfixed }, k)?;
    match opts.mode {
        Mode::Exact => {
            let (value, stats) = contract_exact(&net, opts.scheme, &opts.contraction)?;
            if value.value != 1 && value.value != -1 {
                return Err(Error::Degeneracy {
                    bit: k,
                    omega: value.value,
                });
            }
            let bit = Some((value.value > 0) as u8);
            Ok((
                BitReadout {
                    k,
                    omega: value.value as f64,
                    bit,
                },
                stats.elapsed,
            ))
        }
        Mode::Approx(chi) => {
            let r = contract_approx_with(&net, chi, opts.scheme, &opts.approx)?;
            Ok((
                BitReadout {
                    k,
                    omega: r.omega,
                    bit: r.recovered_bit,
                },
                r.elapsed,
            ))
        }
    }
}

/// Whether [`factorize_with`] would recover `p`, stopping at the first
/// readout that differs from it. Up to that point the recovered bits equal
/// those of `p`, so enforcement projects the same values either way.
pub fn recovers_factor(modulus: u64, p: u64, opts: &FactorOptions) -> Result<bool> {
    if modulus.is_multiple_of(2) || modulus < 9 || p < 2 || !modulus.is_multiple_of(p) {
        return Err(Error::Input(format!(
            "{p} is not a factor of the odd modulus {modulus}"
        )));
    }
    let width = bit_length(modulus) as usize - 1;
    let mut fixed = BTreeMap::new();
    for k in bit_order(width, opts.order) {
        let expected = ((p >> k) & 1) as u8;
        if read_bit(modulus, &fixed, k, opts)?.0.bit != Some(expected) {
            return Ok(false);
        }
        fixed.insert(k, expected);
    }
    Ok(true)
}

/// True when `p q = N` with `p` and `q` prime and `q < p`.
pub fn verify(result: &FactorizationResult) -> bool {
    result.q < result.p
        && result.p.checked_mul(result.q) == Some(result.modulus)
        && is_prime(result.p)
        && is_prime(result.q)
}
