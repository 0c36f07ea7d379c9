//! Instance generation, bond-dimension search and the timing and compression
//! studies, with CSV output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::{bit_length, half_bits, trial_division_factor, BitWord};
use crate::error::{Error, Result};
use crate::exact::Scheme;
use crate::factorizer::{factorize_with, recovers_factor, FactorOptions, Mode};
use crate::tt::{r_max, ApproxConfig};

/// `N = p q` with `q < p` both odd primes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Instance {
    #[serde(rename = "N")]
    pub modulus: u64,
    pub p: u64,
    pub q: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstanceSet {
    pub n: u32,
    pub instances: Vec<Instance>,
    pub requested: usize,
    /// Fewer instances exist than were requested.
    pub short: bool,
}

/// Largest width the generators enumerate.
pub const MAX_GENERATOR_BITS: u32 = 32;

fn primes_below(limit: u64) -> Vec<u64> {
    let limit = limit as usize;
    if limit < 3 {
        return Vec::new();
    }
    let mut composite = vec![false; limit];
    let mut out = Vec::new();
    for i in 2..limit {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j < limit {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

fn enumerate(n: u32, q_bits: impl Fn(u32) -> bool) -> Result<Vec<Instance>> {
    if !(4..=MAX_GENERATOR_BITS).contains(&n) {
        return Err(Error::Input(format!(
            "instance width {n} outside 4..={MAX_GENERATOR_BITS}"
        )));
    }
    let (lo, hi) = (1u64 << (n - 1), 1u64 << n);
    let m = half_bits(n);
    let q_limit = 1u64 << m;
    let primes = primes_below(hi / 3 + 1);
    let mut out = Vec::new();
    for &q in primes.iter().skip(1).take_while(|&&q| q < q_limit) {
        if !q_bits(bit_length(q)) {
            continue;
        }
        let first = primes.partition_point(|&p| p <= q || p * q < lo);
        for &p in primes[first..].iter().take_while(|&&p| p * q < hi) {
            if p < 1u64 << (n - 1) {
                out.push(Instance { modulus: p * q, p, q });
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Every `n`-bit odd semiprime the network accepts: `q < p` distinct odd
/// primes, `q < 2^⌈n/2⌉`, `p < 2^(n-1)`.
pub fn valid_instances(n: u32) -> Result<Vec<Instance>> {
    enumerate(n, |_| true)
}

/// Valid instances whose smaller factor has `⌈n/2⌉` or `⌈n/2⌉ - 1` bits.
pub fn balanced_instances(n: u32) -> Result<Vec<Instance>> {
    let m = half_bits(n);
    enumerate(n, |b| b == m || b + 1 == m)
}

/// Seeded sample of `count` balanced instances, sorted by `N`. Returns every
/// balanced instance (and sets `short`) when fewer exist.
pub fn generate_balanced_semiprimes(n: u32, count: usize, seed: u64) -> Result<InstanceSet> {
    if n < 6 {
        return Err(Error::Input(format!(
            "balanced instances need at least 6 bits, got {n}"
        )));
    }
    if count == 0 {
        return Err(Error::Input("instance count must be at least 1".into()));
    }
    let all = balanced_instances(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((n as u64) << 32));
    let mut instances: Vec<Instance> = all.choose_multiple(&mut rng, count).copied().collect();
    instances.sort();
    Ok(InstanceSet {
        n,
        short: instances.len() < count,
        requested: count,
        instances,
    })
}

/// Fraction of zero bits in the minimal binary form of `p` (0 counts as one
/// zero bit).
pub fn zero_proportion(p: u64) -> f64 {
    let len = bit_length(p).max(1);
    (len - p.count_ones()) as f64 / len as f64
}

/// Normalized Hamming distance between two words of equal width.
pub fn bit_flip_error(x: BitWord, p: BitWord) -> Result<f64> {
    if x.width() != p.width() {
        return Err(Error::Input(format!("width mismatch: {} vs {}", x.width(), p.width())));
    }
    Ok((x.value() ^ p.value()).count_ones() as f64 / x.width() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MinBond {
    pub chi_min: usize,
    pub r_max: usize,
    /// False when not even `r_max` recovered the factor; `chi_min` is then
    /// `r_max`.
    pub found: bool,
    /// Number of approximate factorizations run.
    pub evaluations: usize,
}

/// Smallest bond cap at which the approximate factorization recovers the
/// true `p`: doubling from 1, then bisection. The reported value is always
/// a directly verified success.
pub fn find_min_bond(modulus: u64, scheme: Scheme) -> Result<MinBond> {
    find_min_bond_with(modulus, scheme, &ApproxConfig::default())
}

pub fn find_min_bond_with(modulus: u64, scheme: Scheme, config: &ApproxConfig) -> Result<MinBond> {
    let n = bit_length(modulus);
    let cap = r_max(n, scheme);
    let (p, _) = trial_division_factor(modulus)?;
    let mut cache = BTreeMap::new();
    let mut succeeds = |chi: usize| -> Result<bool> {
        if let Some(&ok) = cache.get(&chi) {
            return Ok(ok);
        }
        let mut opts = FactorOptions::new(scheme, Mode::Approx(chi));
        opts.approx = *config;
        let ok = recovers_factor(modulus, p, &opts)?;
        cache.insert(chi, ok);
        Ok(ok)
    };
    let mut hi = 1;
    while !succeeds(hi)? {
        if hi >= cap {
            return Ok(MinBond {
                chi_min: cap,
                r_max: cap,
                found: false,
                evaluations: cache.len(),
            });
        }
        hi = (hi * 2).min(cap);
    }
    let mut lo = hi / 2;
    // lo is a known failure (or 0), hi a known success
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if succeeds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(MinBond {
        chi_min: hi,
        r_max: cap,
        found: true,
        evaluations: cache.len(),
    })
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub n: u32,
    #[serde(rename = "N")]
    pub modulus: u64,
    pub p_true: u64,
    pub q_true: u64,
    pub scheme: Scheme,
    pub mode: String,
    pub chi: Option<usize>,
    pub chi_min: Option<usize>,
    pub r_max: Option<usize>,
    pub c_max: Option<f64>,
    pub n0: Option<f64>,
    pub bit_flip: Option<f64>,
    pub t_total: Option<f64>,
    pub t_contraction: Option<f64>,
    pub correct: bool,
}

impl ExperimentRecord {
    fn new(inst: &Instance, scheme: Scheme, mode: &str) -> Self {
        ExperimentRecord {
            n: bit_length(inst.modulus),
            modulus: inst.modulus,
            p_true: inst.p,
            q_true: inst.q,
            scheme,
            mode: mode.to_string(),
            chi: None,
            chi_min: None,
            r_max: None,
            c_max: None,
            n0: None,
            bit_flip: None,
            t_total: None,
            t_contraction: None,
            correct: false,
        }
    }

    /// Range and consistency checks on the derived columns.
    pub fn check(&self) -> Result<()> {
        let unit = |v: Option<f64>| v.is_none_or(|x| (0.0..=1.0).contains(&x));
        if !unit(self.n0) || !unit(self.bit_flip) {
            return Err(Error::Input(format!(
                "n0 or bit_flip outside [0, 1] for N = {}",
                self.modulus
            )));
        }
        if let (Some(r), Some(c), Some(cm)) = (self.r_max, self.chi_min, self.c_max) {
            if cm != r as f64 / c as f64 {
                return Err(Error::Input(format!(
                    "c_max {cm} != {r} / {c} for N = {}",
                    self.modulus
                )));
            }
        }
        if let (Some(t), Some(tc)) = (self.t_total, self.t_contraction) {
            if tc > t {
                return Err(Error::Input(format!(
                    "contraction time exceeds total for N = {}",
                    self.modulus
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyConfig {
    pub min_bits: u32,
    pub max_bits: u32,
    pub count: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Worker threads; 1 runs in the calling thread.
    pub jobs: usize,
    pub round_per_site: bool,
}

impl StudyConfig {
    pub fn new(min_bits: u32, max_bits: u32, count: usize, seed: u64, scheme: Scheme) -> Self {
        StudyConfig {
            min_bits,
            max_bits,
            count,
            seed,
            scheme,
            jobs: 1,
            round_per_site: false,
        }
    }

    fn instances(&self) -> Result<Vec<Instance>> {
        if self.min_bits > self.max_bits {
            return Err(Error::Input(format!(
                "empty bit range {}..={}",
                self.min_bits, self.max_bits
            )));
        }
        let mut out = Vec::new();
        for n in self.min_bits..=self.max_bits {
            out.extend(generate_balanced_semiprimes(n, self.count, self.seed)?.instances);
        }
        Ok(out)
    }

    fn run<F>(&self, work: F) -> Result<Vec<ExperimentRecord>>
    where
        F: Fn(&Instance) -> Result<Vec<ExperimentRecord>> + Sync,
    {
        let instances = self.instances()?;
        let chunks: Vec<Result<Vec<ExperimentRecord>>> = if self.jobs <= 1 {
            instances.iter().map(&work).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.jobs)
                .build()
                .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
            pool.install(|| instances.par_iter().map(&work).collect())
        };
        let mut out = Vec::new();
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }
}

/// Exact factorization of every sampled instance with timing breakdown.
/// Instances that hit the memory guard are recorded as incorrect without
/// times.
pub fn run_timing_study(config: &StudyConfig) -> Result<Vec<ExperimentRecord>> {
    config.run(|inst| {
        let mut rec = ExperimentRecord::new(inst, config.scheme, "exact");
        rec.n0 = Some(zero_proportion(inst.p));
        match factorize_with(inst.modulus, &FactorOptions::new(config.scheme, Mode::Exact)) {
            Ok(r) => {
                rec.t_total = Some(r.t_total);
                rec.t_contraction = Some(r.t_contraction);
                rec.correct = r.correct && r.p == inst.p;
            }
            Err(Error::Resource { .. }) => {}
            Err(e) => return Err(e),
        }
        Ok(vec![rec])
    })
}

/// Ratios `χ / χ_min` below 1 at which the bit-flip error is sampled.
pub const BELOW_MIN_RATIOS: [f64; 3] = [0.25, 0.5, 0.75];

/// Per instance: one record at `χ_min` (with `r_max`, `C_max`, `n0`), then one
/// record per distinct cap `⌊ratio χ_min⌋ >= 1` below it with the bit-flip
/// error of the recovered `p`.
pub fn run_compression_study(config: &StudyConfig) -> Result<Vec<ExperimentRecord>> {
    let approx = ApproxConfig {
        round_per_site: config.round_per_site,
        ..Default::default()
    };
    let mode = if config.round_per_site {
        "approx-per-site"
    } else {
        "approx"
    };
    config.run(|inst| {
        let n = bit_length(inst.modulus);
        let bond = find_min_bond_with(inst.modulus, config.scheme, &approx)?;
        let run_at = |chi: usize| -> Result<ExperimentRecord> {
            let mut opts = FactorOptions::new(config.scheme, Mode::Approx(chi));
            opts.approx = approx;
            let r = factorize_with(inst.modulus, &opts)?;
            let mut rec = ExperimentRecord::new(inst, config.scheme, mode);
            rec.chi = Some(chi);
            rec.chi_min = bond.found.then_some(bond.chi_min);
            rec.r_max = Some(bond.r_max);
            rec.c_max = rec.chi_min.map(|c| bond.r_max as f64 / c as f64);
            rec.n0 = Some(zero_proportion(inst.p));
            rec.bit_flip = Some(bit_flip_error(BitWord::new(r.p, n - 1)?, BitWord::new(inst.p, n - 1)?)?);
            rec.t_total = Some(r.t_total);
            rec.t_contraction = Some(r.t_contraction);
            rec.correct = r.correct && r.p == inst.p;
            Ok(rec)
        };
        let mut out = vec![run_at(bond.chi_min)?];
        let mut below: Vec<usize> = BELOW_MIN_RATIOS
            .iter()
            .map(|r| (r * bond.chi_min as f64).floor() as usize)
            .filter(|&c| c >= 1 && c < bond.chi_min)
            .collect();
        below.dedup();
        for chi in below {
            out.push(run_at(chi)?);
        }
        Ok(out)
    })
}

/// Formats like C's `%g`: 6 significant digits, trailing zeros removed.
pub fn format_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim(&format!("{x:.*}", (5 - exp) as usize))
    }
}

pub const CSV_HEADER: [&str; 15] = [
    "n",
    "N",
    "p_true",
    "q_true",
    "scheme",
    "mode",
    "chi",
    "chi_min",
    "r_max",
    "c_max",
    "n0",
    "bit_flip",
    "t_total_s",
    "t_contr_s",
    "correct",
];

/// Writes `# seed=...`, the header and one line per record.
pub fn write_csv<W: Write>(mut out: W, seed: u64, records: &[ExperimentRecord]) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let opt_int = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    let opt_float = |v: Option<f64>| v.map(format_g).unwrap_or_default();
    for r in records {
        w.write_record([
            r.n.to_string(),
            r.modulus.to_string(),
            r.p_true.to_string(),
            r.q_true.to_string(),
            r.scheme.label().to_string(),
            r.mode.clone(),
            opt_int(r.chi),
            opt_int(r.chi_min),
            opt_int(r.r_max),
            opt_float(r.c_max),
            opt_float(r.n0),
            opt_float(r.bit_flip),
            opt_float(r.t_total),
            opt_float(r.t_contraction),
            r.correct.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, seed: u64, records: &[ExperimentRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_csv(std::io::BufWriter::new(file), seed, records)
}

/// Per-width means over a study's records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitSummary {
    pub n: u32,
    pub records: usize,
    pub correct: usize,
    pub mean_t_total: Option<f64>,
    pub mean_t_contraction: Option<f64>,
    pub mean_chi_min: Option<f64>,
}

pub fn summarize(records: &[ExperimentRecord]) -> Vec<BitSummary> {
    let mut by_n: BTreeMap<u32, Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        by_n.entry(r.n).or_default().push(r);
    }
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    by_n.into_iter()
        .map(|(n, rs)| BitSummary {
            n,
            records: rs.len(),
            correct: rs.iter().filter(|r| r.correct).count(),
            mean_t_total: mean(rs.iter().filter_map(|r| r.t_total).collect()),
            mean_t_contraction: mean(rs.iter().filter_map(|r| r.t_contraction).collect()),
            // one χ_min per instance: take it from the record at χ = χ_min
            mean_chi_min: mean(
                rs.iter()
                    .filter(|r| r.chi.is_some() && r.chi == r.chi_min)
                    .filter_map(|r| r.chi_min.map(|c| c as f64))
                    .collect(),
            ),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::trial_division_factor;

    #[test]
    fn balanced_set_for_eight_bits_contains_143() {
        let all = balanced_instances(8).unwrap();
        assert!(all.contains(&Instance {
            modulus: 143,
            p: 13,
            q: 11
        }));
        let set = generate_balanced_semiprimes(8, 1000, 1).unwrap();
        assert!(set.short);
        assert_eq!(set.instances, all);
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        for n in 6..=16 {
            let a = generate_balanced_semiprimes(n, 10, 42).unwrap();
            let b = generate_balanced_semiprimes(n, 10, 42).unwrap();
            assert_eq!(a, b);
            assert!(a.instances.windows(2).all(|w| w[0].modulus < w[1].modulus));
            let m = half_bits(n);
            for inst in &a.instances {
                assert_eq!(bit_length(inst.modulus), n);
                assert_eq!(inst.p * inst.q, inst.modulus);
                assert!(inst.q < inst.p && inst.q < 1 << m && inst.p < 1 << (n - 1));
                assert!(bit_length(inst.q) + 1 >= m);
                assert_eq!(trial_division_factor(inst.modulus).unwrap(), (inst.p, inst.q));
            }
        }
        assert!(generate_balanced_semiprimes(5, 10, 1).is_err());
        assert!(generate_balanced_semiprimes(8, 0, 1).is_err());
    }

    #[test]
    fn valid_instances_match_trial_division() {
        for n in 4..=12u32 {
            let listed: Vec<u64> = valid_instances(n).unwrap().iter().map(|i| i.modulus).collect();
            let brute: Vec<u64> = ((1u64 << (n - 1)).max(9)..1 << n)
                .filter(|x| x % 2 == 1)
                .filter(|&x| matches!(trial_division_factor(x), Ok((p, q)) if p != q && crate::circuit::is_prime(p)))
                .collect();
            assert_eq!(listed, brute, "n = {n}");
        }
    }

    #[test]
    fn zero_proportion_examples() {
        assert_eq!(zero_proportion(179), 0.375);
        assert_eq!(zero_proportion(1 << 5), 5.0 / 6.0);
        assert_eq!(zero_proportion(63), 0.0);
    }

    #[test]
    fn bit_flip_examples() {
        let w = |v| BitWord::new(v, 8).unwrap();
        assert_eq!(bit_flip_error(w(0b1011_0011), w(0b1011_0011)).unwrap(), 0.0);
        assert_eq!(bit_flip_error(w(0b0100_1100), w(0b1011_0011)).unwrap(), 1.0);
        assert_eq!(bit_flip_error(w(0b1011_0000), w(0b1011_0011)).unwrap(), 0.25);
        assert!(bit_flip_error(BitWord::new(3, 4).unwrap(), w(3)).is_err());
    }

    #[test]
    fn min_bond_is_minimal_and_bounded() {
        for modulus in [15u64, 143, 899] {
            for scheme in Scheme::ALL {
                let b = find_min_bond(modulus, scheme).unwrap();
                assert!(b.found);
                assert!(b.chi_min <= b.r_max);
                let ok = |chi| {
                    factorize_with(modulus, &FactorOptions::new(scheme, Mode::Approx(chi)))
                        .unwrap()
                        .correct
                };
                assert!(ok(b.chi_min));
                if b.chi_min > 1 {
                    assert!(!ok(b.chi_min - 1), "N = {modulus} {scheme}");
                }
            }
        }
    }

    #[test]
    fn format_g_matches_printf() {
        assert_eq!(format_g(0.375), "0.375");
        assert_eq!(format_g(1296.0), "1296");
        assert_eq!(format_g(2.0 / 3.0), "0.666667");
        assert_eq!(format_g(123456789.0), "1.23457e+08");
        assert_eq!(format_g(0.0000123456), "1.23456e-05");
        assert_eq!(format_g(0.00012), "0.00012");
        assert_eq!(format_g(0.0), "0");
        assert_eq!(format_g(999999.5), "1e+06");
    }

    #[test]
    fn csv_layout() {
        let inst = Instance {
            modulus: 143,
            p: 13,
            q: 11,
        };
        let mut rec = ExperimentRecord::new(&inst, Scheme::LeftRight, "approx");
        rec.chi = Some(2);
        rec.r_max = Some(16);
        rec.chi_min = Some(3);
        rec.c_max = Some(16.0 / 3.0);
        rec.correct = true;
        rec.check().unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, 7, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=7");
        assert_eq!(lines[1], CSV_HEADER.join(","));
        assert_eq!(lines[2], "8,143,13,11,left-right,approx,2,3,16,5.33333,,,,,true");
    }

    #[test]
    fn small_studies_are_consistent() {
        let mut config = StudyConfig::new(8, 9, 3, 5, Scheme::LeftRight);
        let timing = run_timing_study(&config).unwrap();
        assert_eq!(timing.len(), 6);
        assert!(timing.iter().all(|r| r.correct && r.check().is_ok()));
        let compression = run_compression_study(&config).unwrap();
        assert!(compression.iter().all(|r| r.check().is_ok()));
        config.jobs = 2;
        let parallel = run_compression_study(&config).unwrap();
        let strip = |rs: &[ExperimentRecord]| {
            rs.iter()
                .map(|r| (r.modulus, r.chi, r.chi_min, r.bit_flip, r.correct))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&compression), strip(&parallel));
        let summary = summarize(&compression);
        assert_eq!(summary.len(), 2);
        assert!(summary.iter().all(|s| s.mean_chi_min.is_some()));
    }
}
