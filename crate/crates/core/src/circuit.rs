//! Integer model of the shift-and-add multiplier that the tensor network encodes.
//!
//! Everything here works on plain machine integers. The functions double as the
//! semantic reference for the network (`capped_multiply`) and as the
//! brute-force verifier of factorization results (`trial_division_factor`).

use crate::error::{Error, Result};

/// Largest supported bit count.
pub const MAX_BITS: u32 = 60;

/// An unsigned integer together with the register width it lives in.
///
/// Bits are indexed least significant first: `bit(0)` is the parity bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitWord {
    value: u64,
    width: u32,
}

impl BitWord {
    pub fn new(value: u64, width: u32) -> Result<Self> {
        if width == 0 || width > MAX_BITS {
            return Err(Error::Input(format!("width {width} outside 1..={MAX_BITS}")));
        }
        if value >> width != 0 {
            return Err(Error::Input(format!("{value} does not fit in {width} bits")));
        }
        Ok(BitWord { value, width })
    }

    /// Smallest word holding `value` (width 1 for zero).
    pub fn minimal(value: u64) -> Self {
        BitWord {
            value,
            width: bit_length(value).max(1),
        }
    }

    /// Builds a word from LSB-first bits.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut value = 0u64;
        for (k, &b) in bits.iter().enumerate() {
            if b > 1 {
                return Err(Error::Input(format!("bit {k} has value {b}")));
            }
            value |= (b as u64) << k;
        }
        BitWord::new(value, bits.len() as u32)
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn bit(&self, k: u32) -> u8 {
        ((self.value >> k) & 1) as u8
    }

    /// LSB-first bit vector of length `width`.
    pub fn bits(&self) -> Vec<u8> {
        (0..self.width).map(|k| self.bit(k)).collect()
    }

    /// Same value in a wider (or equal) register.
    pub fn widen(&self, width: u32) -> Result<Self> {
        BitWord::new(self.value, width)
    }
}

/// Sum bit and carry of one full-adder cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdderStep {
    pub sum_bit: u8,
    pub carry_out: u8,
}

/// Outcome of the capped multiplier: the product, or the zero signal raised
/// when the product does not fit in `n` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capped {
    Product(BitWord),
    Overflow,
}

pub fn bit_length(x: u64) -> u32 {
    64 - x.leading_zeros()
}

/// `⌈n/2⌉`, the number of bits available to the smaller factor.
pub fn half_bits(n: u32) -> u32 {
    n.div_ceil(2)
}

pub fn add_step(p_bit: u8, q_bit: u8, carry_in: u8) -> AdderStep {
    debug_assert!(p_bit <= 1 && q_bit <= 1 && carry_in <= 1);
    let total = p_bit + q_bit + carry_in;
    AdderStep {
        sum_bit: total & 1,
        carry_out: total >> 1,
    }
}

/// `(p + q) mod 2^n` by chaining [`add_step`] from the least significant bit.
pub fn modular_add(p: BitWord, q: BitWord, n: u32) -> Result<BitWord> {
    if p.width != n || q.width != n {
        return Err(Error::Input(format!(
            "modular_add expects two {n}-bit words, got widths {} and {}",
            p.width, q.width
        )));
    }
    let mut carry = 0;
    let mut out = 0u64;
    for k in 0..n {
        let step = add_step(p.bit(k), q.bit(k), carry);
        out |= (step.sum_bit as u64) << k;
        carry = step.carry_out;
    }
    BitWord::new(out, n)
}

/// `(2^k q) mod 2^n`: drop the `k` high bits of `q` and append `k` zeros.
pub fn shifted_addend(q: BitWord, k: u32, n: u32) -> Result<BitWord> {
    if k >= n {
        return Err(Error::Input(format!("shift {k} not below width {n}")));
    }
    if n > MAX_BITS {
        return Err(Error::Input(format!("width {n} exceeds {MAX_BITS}")));
    }
    let mask = (1u64 << n) - 1;
    BitWord::new((q.value << k) & mask, n)
}

/// `(p q) mod 2^n` as an iterated controlled modular addition: the shifted
/// multiplicand is added whenever the corresponding multiplier bit is set.
pub fn modular_multiply(p: BitWord, q: BitWord, n: u32) -> Result<BitWord> {
    if p.width > n || q.width > n {
        return Err(Error::Input(format!(
            "operand widths {} and {} exceed {n}",
            p.width, q.width
        )));
    }
    let q = q.widen(n)?;
    let mut acc = BitWord::new(0, n)?;
    for k in 0..p.width {
        if p.bit(k) == 1 {
            acc = modular_add(acc, shifted_addend(q, k, n)?, n)?;
        }
    }
    Ok(acc)
}

/// The two-input multiplier with the overflow cap, restricted to the domain the
/// reduced circuit accepts: odd `q < p`, `q < 2^⌈n/2⌉`, `p < 2^(n-1)`.
///
/// Runs the recurrence `b_{k+1} = b_k + 2^k q p_k` from `b_0 = 0` and reports
/// [`Capped::Overflow`] as soon as a partial sum leaves the `n`-bit register.
pub fn capped_multiply(p: BitWord, q: BitWord, n: u32) -> Result<Capped> {
    if !(2..=MAX_BITS).contains(&n) {
        return Err(Error::Input(format!("bit count {n} outside 2..={MAX_BITS}")));
    }
    let (pv, qv) = (p.value, q.value);
    if pv % 2 == 0 || qv % 2 == 0 {
        return Err(Error::Input(format!("factors must be odd, got p={pv} q={qv}")));
    }
    if qv >= pv {
        return Err(Error::Input(format!("need q < p, got p={pv} q={qv}")));
    }
    if bit_length(qv) > half_bits(n) {
        return Err(Error::Input(format!("q={qv} exceeds {} bits for n={n}", half_bits(n))));
    }
    if bit_length(pv) > n - 1 {
        return Err(Error::Input(format!("p={pv} exceeds {} bits", n - 1)));
    }
    let cap = 1u128 << n;
    let mut partial = 0u128;
    for k in 0..n - 1 {
        if (pv >> k) & 1 == 1 {
            partial += (qv as u128) << k;
            if partial >= cap {
                return Ok(Capped::Overflow);
            }
        }
    }
    Ok(Capped::Product(BitWord::new(partial as u64, n)?))
}

pub fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    if x.is_multiple_of(2) {
        return x == 2;
    }
    let mut d = 3u64;
    while d <= x / d {
        if x.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Splits an odd composite `n` as `(p, q)` with `q` its smallest factor, so
/// `q <= sqrt(n) <= p`.
pub fn trial_division_factor(n: u64) -> Result<(u64, u64)> {
    if n.is_multiple_of(2) {
        return Err(Error::Input(format!("{n} is even")));
    }
    if n < 9 {
        return Err(Error::Input(format!("{n} is below 9")));
    }
    let mut d = 3u64;
    while d <= n / d {
        if n.is_multiple_of(d) {
            return Ok((n / d, d));
        }
        d += 2;
    }
    Err(Error::NoFactor(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: u64, n: u32) -> BitWord {
        BitWord::new(v, n).unwrap()
    }

    #[test]
    fn adder_cells() {
        assert_eq!(
            add_step(1, 0, 0),
            AdderStep {
                sum_bit: 1,
                carry_out: 0
            }
        );
        assert_eq!(
            add_step(1, 1, 1),
            AdderStep {
                sum_bit: 1,
                carry_out: 1
            }
        );
        assert_eq!(
            add_step(0, 0, 0),
            AdderStep {
                sum_bit: 0,
                carry_out: 0
            }
        );
        assert_eq!(
            add_step(1, 1, 0),
            AdderStep {
                sum_bit: 0,
                carry_out: 1
            }
        );
    }

    #[test]
    fn modular_add_examples() {
        assert_eq!(modular_add(w(0b111, 3), w(0b110, 3), 3).unwrap(), w(0b101, 3));
        assert_eq!(modular_add(w(0b101, 3), w(0b011, 3), 3).unwrap(), w(0, 3));
        for x in 0..16 {
            assert_eq!(modular_add(w(x, 4), w(0, 4), 4).unwrap(), w(x, 4));
        }
        assert!(matches!(modular_add(w(1, 3), w(1, 4), 3), Err(Error::Input(_))));
    }

    #[test]
    fn shifted_addend_examples() {
        assert_eq!(shifted_addend(w(0b101, 3), 1, 3).unwrap(), w(0b010, 3));
        assert_eq!(shifted_addend(w(0b011, 3), 2, 3).unwrap(), w(0b100, 3));
        assert_eq!(shifted_addend(w(0b110, 3), 0, 3).unwrap(), w(0b110, 3));
        assert!(shifted_addend(w(1, 3), 3, 3).is_err());
    }

    #[test]
    fn modular_multiply_examples() {
        assert_eq!(modular_multiply(w(0b011, 3), w(0b101, 3), 3).unwrap(), w(0b111, 3));
        assert_eq!(modular_multiply(w(0b100, 3), w(0b110, 3), 3).unwrap(), w(0, 3));
        assert_eq!(modular_multiply(w(0b110, 3), w(1, 1), 3).unwrap(), w(0b110, 3));
    }

    #[test]
    fn capped_examples() {
        assert_eq!(capped_multiply(w(5, 3), w(3, 2), 4).unwrap(), Capped::Product(w(15, 4)));
        assert_eq!(capped_multiply(w(7, 5), w(5, 3), 6).unwrap(), Capped::Product(w(35, 6)));
        // 13 * 7 = 91 does not fit in six bits.
        assert_eq!(capped_multiply(w(13, 4), w(7, 3), 6).unwrap(), Capped::Overflow);
        // q = 5 needs three bits but n = 4 only leaves two for the smaller factor.
        assert!(matches!(capped_multiply(w(7, 3), w(5, 3), 4), Err(Error::Input(_))));
    }

    #[test]
    fn capped_rejects_reduced_domain_violations() {
        assert!(capped_multiply(w(6, 3), w(3, 2), 6).is_err()); // even p
        assert!(capped_multiply(w(5, 3), w(5, 3), 6).is_err()); // q == p
        assert!(capped_multiply(w(3, 2), w(5, 3), 6).is_err()); // q > p
        assert!(capped_multiply(w(33, 6), w(3, 2), 6).is_err()); // p too wide
    }

    #[test]
    fn trial_division_examples() {
        assert_eq!(trial_division_factor(15).unwrap(), (5, 3));
        assert_eq!(trial_division_factor(35).unwrap(), (7, 5));
        assert_eq!(trial_division_factor(13), Err(Error::NoFactor(13)));
        assert!(matches!(trial_division_factor(14), Err(Error::Input(_))));
    }

    #[test]
    fn exhaustive_modular_arithmetic() {
        for n in 1..=10u32 {
            let top = 1u64 << n;
            for p in 0..top {
                for q in 0..top {
                    let (pw, qw) = (w(p, n), w(q, n));
                    assert_eq!(modular_add(pw, qw, n).unwrap().value(), (p + q) % top);
                    assert_eq!(modular_multiply(pw, qw, n).unwrap().value(), (p * q) % top);
                }
            }
        }
    }

    #[test]
    fn exhaustive_capped_multiply() {
        for n in 2..=12u32 {
            let m = half_bits(n);
            for p in (1..1u64 << (n - 1)).step_by(2) {
                for q in (1..(1u64 << m).min(p)).step_by(2) {
                    let got = capped_multiply(BitWord::minimal(p), BitWord::minimal(q), n).unwrap();
                    if p * q < 1 << n {
                        assert_eq!(got, Capped::Product(w(p * q, n)));
                    } else {
                        assert_eq!(got, Capped::Overflow);
                    }
                }
            }
        }
    }

    #[test]
    fn trial_division_on_prime_pairs() {
        let limit = (1usize << 20) / 3;
        let mut composite = vec![false; limit + 1];
        let mut primes = Vec::new();
        for x in 2..=limit {
            if !composite[x] {
                if x > 2 {
                    primes.push(x as u64);
                }
                for y in (x * x..=limit).step_by(x) {
                    composite[y] = true;
                }
            }
        }
        for (i, &a) in primes.iter().enumerate() {
            for &b in &primes[i + 1..] {
                if a * b >= 1 << 20 {
                    break;
                }
                assert_eq!(trial_division_factor(a * b).unwrap(), (b, a));
            }
        }
    }
}
