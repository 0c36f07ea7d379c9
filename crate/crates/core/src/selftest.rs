//! Exhaustive checks of the network against the integer multiplier, plus the
//! readout invariants, with per-width counts.

use std::fmt;

use serde::Serialize;

use crate::circuit::{trial_division_factor, BitWord};
use crate::error::{Error, Result};
use crate::exact::Scheme;
use crate::experiments::{bit_flip_error, valid_instances, zero_proportion};
use crate::factorizer::{factorize_with, BitOrder, FactorOptions, Mode};
use crate::network::{network_truth_table_for, oracle_truth_table_for, Fault, NetworkBuilder, MAX_TABLE_BITS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelfTestConfig {
    /// Widest modulus checked, at most [`MAX_TABLE_BITS`].
    pub max_bits: u32,
    /// Corrupts the networks used by the truth-table check.
    pub fault: Option<Fault>,
}

impl SelfTestConfig {
    pub fn new(max_bits: u32) -> Self {
        SelfTestConfig { max_bits, fault: None }
    }
}

/// Counts for one width within a check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WidthCount {
    pub n: u32,
    pub checked: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub widths: Vec<WidthCount>,
    /// First few failures, for diagnosis.
    pub samples: Vec<String>,
}

impl CheckReport {
    fn new(name: &'static str) -> Self {
        CheckReport {
            name,
            widths: Vec::new(),
            samples: Vec::new(),
        }
    }

    fn fail(&mut self, msg: String) {
        if self.samples.len() < 5 {
            self.samples.push(msg);
        }
    }

    pub fn failures(&self) -> usize {
        self.widths.iter().map(|w| w.failures).sum()
    }

    pub fn passed(&self) -> bool {
        self.failures() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelfTestReport {
    pub checks: Vec<CheckReport>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }
}

impl fmt::Display for SelfTestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed() { "PASS" } else { "FAIL" };
            writeln!(f, "{status} {}", c.name)?;
            for w in &c.widths {
                writeln!(f, "  n={:<2} checked={:<6} failures={}", w.n, w.checked, w.failures)?;
            }
            for s in &c.samples {
                writeln!(f, "  e.g. {s}")?;
            }
        }
        Ok(())
    }
}

/// Smallest width the checks start at.
const MIN_BITS: u32 = 4;

pub fn run_selftest(config: &SelfTestConfig) -> Result<SelfTestReport> {
    if config.max_bits > MAX_TABLE_BITS || config.max_bits < MIN_BITS {
        return Err(Error::Input(format!(
            "selftest width must be in {MIN_BITS}..={MAX_TABLE_BITS}, got {}",
            config.max_bits
        )));
    }
    let builder = match &config.fault {
        Some(f) => NetworkBuilder::new().with_fault(f.clone()),
        None => NetworkBuilder::new(),
    };
    Ok(SelfTestReport {
        checks: vec![
            truth_table_check(&builder, config.max_bits)?,
            readout_check(config.max_bits)?,
            neutrality_check(config.max_bits)?,
            metric_check(),
        ],
    })
}

/// Network assignments with a nonzero count must be exactly the oracle's
/// `(N, p)` pairs.
fn truth_table_check(builder: &NetworkBuilder, max_bits: u32) -> Result<CheckReport> {
    let mut report = CheckReport::new("truth table equals the multiplier oracle");
    for n in MIN_BITS..=max_bits {
        let (net, checked) = network_truth_table_for(builder, n)?;
        let oracle = oracle_truth_table_for(n);
        let diff: Vec<_> = net.symmetric_difference(&oracle).collect();
        for (modulus, p) in &diff {
            let side = if oracle.contains(&(*modulus, *p)) {
                "missing"
            } else {
                "spurious"
            };
            report.fail(format!("{side} (N={modulus}, p={p})"));
        }
        report.widths.push(WidthCount {
            n,
            checked,
            failures: diff.len(),
        });
    }
    Ok(report)
}

/// Exact readouts are `±1`, agree across schemes and reproduce trial division.
fn readout_check(max_bits: u32) -> Result<CheckReport> {
    let mut report = CheckReport::new("exact readouts are +-1, scheme-independent and correct");
    for n in MIN_BITS..=max_bits {
        let instances = valid_instances(n)?;
        let mut failures = 0;
        for inst in &instances {
            let mut runs = Vec::new();
            for scheme in Scheme::ALL {
                match factorize_with(inst.modulus, &FactorOptions::new(scheme, Mode::Exact)) {
                    Ok(r) => runs.push(r),
                    Err(e) => {
                        failures += 1;
                        report.fail(format!("N={} {scheme}: {e}", inst.modulus));
                    }
                }
            }
            let [a, b] = runs.as_slice() else { continue };
            let omegas = |r: &crate::FactorizationResult| r.bits.iter().map(|x| x.omega).collect::<Vec<_>>();
            let discrete = a.bits.iter().chain(&b.bits).all(|x| x.omega.abs() == 1.0);
            let expected = trial_division_factor(inst.modulus).ok().map(|(p, _)| p);
            if !discrete || omegas(a) != omegas(b) || expected != Some(a.p) || !a.correct {
                failures += 1;
                report.fail(format!(
                    "N={} readouts {:?} vs {:?}",
                    inst.modulus,
                    omegas(a),
                    omegas(b)
                ));
            }
        }
        report.widths.push(WidthCount {
            n,
            checked: instances.len(),
            failures,
        });
    }
    Ok(report)
}

/// Exact results do not depend on bit order or enforcement.
fn neutrality_check(max_bits: u32) -> Result<CheckReport> {
    let mut report = CheckReport::new("exact results ignore bit order and enforcement");
    for n in MIN_BITS..=max_bits {
        let instances = valid_instances(n)?;
        let mut failures = 0;
        for inst in &instances {
            let mut ps = Vec::new();
            for order in [BitOrder::Lsb, BitOrder::Msb] {
                for enforce in [true, false] {
                    let mut opts = FactorOptions::new(Scheme::LeftRight, Mode::Exact);
                    opts.order = order;
                    opts.enforce = enforce;
                    ps.push(factorize_with(inst.modulus, &opts).map(|r| r.p).ok());
                }
            }
            if ps.iter().any(|p| *p != Some(inst.p)) {
                failures += 1;
                report.fail(format!("N={} gave {ps:?}", inst.modulus));
            }
        }
        report.widths.push(WidthCount {
            n,
            checked: instances.len(),
            failures,
        });
    }
    Ok(report)
}

fn metric_check() -> CheckReport {
    let mut report = CheckReport::new("metric identities");
    let mut checked = 0;
    let mut failures = 0;
    let mut expect = |ok: bool, what: &str, report: &mut CheckReport| {
        checked += 1;
        if !ok {
            failures += 1;
            report.fail(what.to_string());
        }
    };
    let word = |v: u64| BitWord::new(v, 8).expect("fits 8 bits");
    for p in [0u64, 1, 179, 255] {
        expect(
            bit_flip_error(word(p), word(p)) == Ok(0.0),
            "bit_flip_error(p, p) = 0",
            &mut report,
        );
        expect(
            bit_flip_error(word(p), word(!p & 0xff)) == Ok(1.0),
            "bit_flip_error on complements = 1",
            &mut report,
        );
    }
    expect(
        zero_proportion(179) == 0.375,
        "zero_proportion(179) = 0.375",
        &mut report,
    );
    expect(
        (1..1024).map(zero_proportion).all(|x| (0.0..=1.0).contains(&x)),
        "zero_proportion in [0, 1]",
        &mut report,
    );
    report.widths.push(WidthCount {
        n: 8,
        checked,
        failures,
    });
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::TensorKind;

    #[test]
    fn clean_build_passes() {
        let report = run_selftest(&SelfTestConfig::new(6)).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.checks[0].widths.len(), 3);
        assert!(report.checks[0].widths.iter().all(|w| w.checked > 0));
    }

    #[test]
    fn injected_fault_fails_the_truth_table() {
        let config = SelfTestConfig {
            max_bits: 6,
            fault: Some(Fault {
                kind: TensorKind::SMid,
                index: vec![0, 0, 0, 0, 0, 0],
            }),
        };
        let report = run_selftest(&config).unwrap();
        assert!(!report.checks[0].passed(), "{report}");
        assert!(!report.checks[0].samples.is_empty());
        assert!(report.checks[1..].iter().all(CheckReport::passed));
    }

    #[test]
    fn width_bounds() {
        assert!(run_selftest(&SelfTestConfig::new(11)).is_err());
        assert!(run_selftest(&SelfTestConfig::new(3)).is_err());
    }
}
