//! Arithmetic in prime fields GF(q) with q < 2^31.
//!
//! [`Field`] is a small `Copy` handle carrying the modulus. Hot loops in the
//! matrix code work directly on reduced `u32` residues through the `Field`
//! helpers; [`FieldElement`] is the checked, self-describing value type used
//! at API boundaries.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{AceError, Result};

/// Exclusive upper bound on supported moduli.
pub const MAX_MODULUS: u64 = 1 << 31;

/// A prime field, identified by its modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Field {
    q: u32,
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

impl Field {
    pub fn new(q: u64) -> Result<Self> {
        if !(2..MAX_MODULUS).contains(&q) {
            return Err(AceError::InvalidParams(format!(
                "modulus {q} outside [2, 2^31)"
            )));
        }
        if !is_prime(q) {
            return Err(AceError::InvalidParams(format!("modulus {q} is not prime")));
        }
        Ok(Field { q: q as u32 })
    }

    #[inline]
    pub fn modulus(self) -> u32 {
        self.q
    }

    /// Bytes needed to store one residue: `ceil(ceil(log2 q) / 8)`.
    pub fn element_width(self) -> usize {
        let bits = 32 - (self.q - 1).leading_zeros() as usize;
        bits.div_ceil(8)
    }

    pub fn element(self, value: u64) -> FieldElement {
        FieldElement {
            value: (value % self.q as u64) as u32,
            field: self,
        }
    }

    pub fn zero(self) -> FieldElement {
        self.element(0)
    }

    pub fn one(self) -> FieldElement {
        self.element(1)
    }

    #[inline]
    pub fn add(self, a: u32, b: u32) -> u32 {
        let s = a as u64 + b as u64;
        let q = self.q as u64;
        (if s >= q { s - q } else { s }) as u32
    }

    #[inline]
    pub fn sub(self, a: u32, b: u32) -> u32 {
        if a >= b {
            a - b
        } else {
            (a as u64 + self.q as u64 - b as u64) as u32
        }
    }

    #[inline]
    pub fn neg(self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.q as u64) as u32
    }

    /// Inverse by the extended Euclidean algorithm.
    pub fn inv(self, a: u32) -> Result<u32> {
        if a.is_multiple_of(self.q) {
            return Err(AceError::NonInvertible);
        }
        let (mut old_r, mut r) = (a as i64, self.q as i64);
        let (mut old_s, mut s) = (1i64, 0i64);
        while r != 0 {
            let quot = old_r / r;
            (old_r, r) = (r, old_r - quot * r);
            (old_s, s) = (s, old_s - quot * s);
        }
        debug_assert_eq!(old_r, 1);
        Ok(old_s.rem_euclid(self.q as i64) as u32)
    }

    /// Uniform residue in `[0, q)`.
    #[inline]
    pub fn sample_raw<R: Rng + ?Sized>(self, rng: &mut R) -> u32 {
        rng.gen_range(0..self.q)
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> FieldElement {
        FieldElement {
            value: self.sample_raw(rng),
            field: self,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.q)
    }
}

/// Arithmetic operation selector for [`fe_arith`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    /// Negates the left operand; the right operand only has to share the field.
    Neg,
}

/// A reduced residue tagged with its field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u32,
    field: Field,
}

#[allow(clippy::should_implement_trait)]
impl FieldElement {
    #[inline]
    pub fn value(self) -> u32 {
        self.value
    }

    #[inline]
    pub fn field(self) -> Field {
        self.field
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    fn same_field(self, other: FieldElement) -> Result<Field> {
        if self.field != other.field {
            return Err(AceError::ParamsMismatch {
                left: self.field.q,
                right: other.field.q,
            });
        }
        Ok(self.field)
    }

    pub fn add(self, rhs: FieldElement) -> Result<FieldElement> {
        fe_arith(self, rhs, ArithOp::Add)
    }

    pub fn sub(self, rhs: FieldElement) -> Result<FieldElement> {
        fe_arith(self, rhs, ArithOp::Sub)
    }

    pub fn mul(self, rhs: FieldElement) -> Result<FieldElement> {
        fe_arith(self, rhs, ArithOp::Mul)
    }

    pub fn neg(self) -> FieldElement {
        FieldElement {
            value: self.field.neg(self.value),
            field: self.field,
        }
    }

    pub fn inv(self) -> Result<FieldElement> {
        Ok(FieldElement {
            value: self.field.inv(self.value)?,
            field: self.field,
        })
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

pub fn fe_arith(a: FieldElement, b: FieldElement, op: ArithOp) -> Result<FieldElement> {
    let field = a.same_field(b)?;
    let value = match op {
        ArithOp::Add => field.add(a.value, b.value),
        ArithOp::Sub => field.sub(a.value, b.value),
        ArithOp::Mul => field.mul(a.value, b.value),
        ArithOp::Neg => field.neg(a.value),
    };
    Ok(FieldElement { value, field })
}

/// The random source used throughout the crate.
pub type AceRng = ChaCha20Rng;

/// Root generator for a seed.
pub fn seeded_rng(seed: u64) -> AceRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent child generator for worker `index` under `root`.
///
/// Children share the root key and differ in stream id, so results depend
/// only on `(root, index)` and never on how many threads ran them.
pub fn derive_rng(root: u64, index: u64) -> AceRng {
    let mut rng = ChaCha20Rng::seed_from_u64(root);
    rng.set_stream(index.wrapping_add(1));
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(q: u64) -> Field {
        Field::new(q).unwrap()
    }

    #[test]
    fn rejects_bad_moduli() {
        assert!(Field::new(0).is_err());
        assert!(Field::new(1).is_err());
        assert!(Field::new(16).is_err());
        assert!(Field::new(2_147_483_648).is_err());
        assert!(Field::new(2_147_483_647).is_ok());
    }

    #[test]
    fn small_identities() {
        let q2 = f(2);
        assert_eq!(q2.one().add(q2.one()).unwrap(), q2.zero());
        let q7 = f(7);
        assert_eq!(q7.element(3).mul(q7.element(5)).unwrap().value(), 1);
        assert_eq!(q7.zero().neg(), q7.zero());
        assert_eq!(q7.element(3).inv().unwrap().value(), 5);
        assert_eq!(q2.one().inv().unwrap().value(), 1);
        assert_eq!(q7.zero().inv(), Err(AceError::NonInvertible));
    }

    #[test]
    fn mismatched_fields() {
        let a = f(7).element(3);
        let b = f(11).element(3);
        assert_eq!(
            a.add(b),
            Err(AceError::ParamsMismatch { left: 7, right: 11 })
        );
    }

    #[test]
    fn inverse_exhaustive_257() {
        let field = f(257);
        for x in 1..257u64 {
            let e = field.element(x);
            assert_eq!(e.inv().unwrap().mul(e).unwrap().value(), 1, "x = {x}");
        }
    }

    #[test]
    fn element_widths() {
        assert_eq!(f(2).element_width(), 1);
        assert_eq!(f(251).element_width(), 1);
        assert_eq!(f(257).element_width(), 2);
        assert_eq!(f(65537).element_width(), 3);
        assert_eq!(f(2_147_483_647).element_width(), 4);
    }

    #[test]
    fn sampling_is_reproducible() {
        let field = f(7);
        let a: Vec<u32> = {
            let mut rng = seeded_rng(42);
            (0..32).map(|_| field.sample_raw(&mut rng)).collect()
        };
        let b: Vec<u32> = {
            let mut rng = seeded_rng(42);
            (0..32).map(|_| field.sample_raw(&mut rng)).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v < 7));
    }

    #[test]
    fn sampling_binary_balance() {
        // 3 sigma for Binomial(1e5, 1/2) is ~474, well inside +-0.01.
        let field = f(2);
        let mut rng = seeded_rng(1);
        let ones: u32 = (0..100_000).map(|_| field.sample_raw(&mut rng)).sum();
        let frac = ones as f64 / 1e5;
        assert!((frac - 0.5).abs() <= 0.01, "fraction {frac}");
    }

    #[test]
    fn sampling_ternary_balance() {
        // sd of each count is sqrt(3e5 * 1/3 * 2/3) ~ 258; 1000 is just under 4 sigma.
        let field = f(3);
        let mut rng = seeded_rng(2);
        let mut counts = [0i64; 3];
        for _ in 0..300_000 {
            counts[field.sample_raw(&mut rng) as usize] += 1;
        }
        for c in counts {
            assert!((c - 100_000).abs() <= 1000, "counts {counts:?}");
        }
    }

    #[test]
    fn derived_streams_differ() {
        let mut a = derive_rng(9, 0);
        let mut b = derive_rng(9, 1);
        let xa: u64 = a.gen();
        let xb: u64 = b.gen();
        assert_ne!(xa, xb);
        let mut a2 = derive_rng(9, 0);
        assert_eq!(xa, a2.gen::<u64>());
    }
}
