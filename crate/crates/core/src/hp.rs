//! Multiprecision complex scalars and small dense matrices over MPFR floats.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rug::float::{Constant, Round};
use rug::ops::{AddAssignRound, DivAssignRound, MulAssignRound, Pow, SubAssignRound};
use rug::Float;

use crate::exponent::Exponent;

/// Working precision in bits for a requested number of significant digits,
/// with a fixed guard of 24 bits.
pub fn bits_for_digits(digits: u32) -> u32 {
    (digits as f64 * std::f64::consts::LOG2_10).ceil() as u32 + 24
}

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

#[derive(Clone, PartialEq)]
pub struct HpComplex {
    pub re: Float,
    pub im: Float,
}

impl HpComplex {
    pub fn zero(prec: u32) -> Self {
        HpComplex { re: Float::new(prec), im: Float::new(prec) }
    }

    pub fn one(prec: u32) -> Self {
        HpComplex { re: Float::with_val(prec, 1), im: Float::new(prec) }
    }

    pub fn from_f64(prec: u32, re: f64, im: f64) -> Self {
        HpComplex { re: Float::with_val(prec, re), im: Float::with_val(prec, im) }
    }

    pub fn from_real(re: Float) -> Self {
        let prec = re.prec();
        HpComplex { re, im: Float::new(prec) }
    }

    pub fn prec(&self) -> u32 {
        self.re.prec().max(self.im.prec())
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn abs(&self) -> Float {
        Float::with_val(self.prec(), self.re.hypot_ref(&self.im))
    }

    pub fn conj(&self) -> Self {
        HpComplex { re: self.re.clone(), im: Float::with_val(self.prec(), -&self.im) }
    }

    pub fn scale(&self, s: &Float) -> Self {
        let p = self.prec();
        HpComplex { re: Float::with_val(p, &self.re * s), im: Float::with_val(p, &self.im * s) }
    }

    pub fn div(&self, rhs: &HpComplex) -> Self {
        let p = self.prec().max(rhs.prec());
        let den = Float::with_val(p, rhs.re.square_ref()) + Float::with_val(p, rhs.im.square_ref());
        let num = self * &rhs.conj();
        HpComplex { re: num.re / &den, im: num.im / &den }
    }

    pub fn exp(&self) -> Self {
        let p = self.prec();
        let mag = Float::with_val(p, self.re.exp_ref());
        let (s, c) = Float::with_val(p, &self.im).sin_cos(Float::new(p));
        HpComplex { re: Float::with_val(p, &mag * &c), im: mag * s }
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }

    /// Scientific rendering with `digits` significant digits per part.
    pub fn to_string_digits(&self, digits: usize) -> String {
        let re = self.re.to_string_radix(10, Some(digits));
        let im = self.im.to_string_radix(10, Some(digits));
        format!("{re} {im}i")
    }
}

impl fmt::Debug for HpComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} + {}i)", self.re.to_f64(), self.im.to_f64())
    }
}

impl Add<&HpComplex> for &HpComplex {
    type Output = HpComplex;
    fn add(self, rhs: &HpComplex) -> HpComplex {
        let p = self.prec().max(rhs.prec());
        HpComplex { re: Float::with_val(p, &self.re + &rhs.re), im: Float::with_val(p, &self.im + &rhs.im) }
    }
}

impl Sub<&HpComplex> for &HpComplex {
    type Output = HpComplex;
    fn sub(self, rhs: &HpComplex) -> HpComplex {
        let p = self.prec().max(rhs.prec());
        HpComplex { re: Float::with_val(p, &self.re - &rhs.re), im: Float::with_val(p, &self.im - &rhs.im) }
    }
}

impl Mul<&HpComplex> for &HpComplex {
    type Output = HpComplex;
    fn mul(self, rhs: &HpComplex) -> HpComplex {
        let p = self.prec().max(rhs.prec());
        let re = Float::with_val(p, &self.re * &rhs.re) - Float::with_val(p, &self.im * &rhs.im);
        let im = Float::with_val(p, &self.re * &rhs.im) + Float::with_val(p, &self.im * &rhs.re);
        HpComplex { re, im }
    }
}

impl Neg for &HpComplex {
    type Output = HpComplex;
    fn neg(self) -> HpComplex {
        HpComplex { re: Float::with_val(self.re.prec(), -&self.re), im: Float::with_val(self.im.prec(), -&self.im) }
    }
}

/// Dense row-major `n x n` complex matrix.
#[derive(Clone, Debug)]
pub struct HpMatrix {
    n: usize,
    data: Vec<HpComplex>,
}

impl HpMatrix {
    pub fn zeros(n: usize, prec: u32) -> Self {
        HpMatrix { n, data: vec![HpComplex::zero(prec); n * n] }
    }

    pub fn identity(n: usize, prec: u32) -> Self {
        let mut m = Self::zeros(n, prec);
        for i in 0..n {
            m.data[i * n + i] = HpComplex::one(prec);
        }
        m
    }

    pub fn from_entries(n: usize, data: Vec<HpComplex>) -> Self {
        assert_eq!(data.len(), n * n);
        HpMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &HpComplex {
        &self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: HpComplex) {
        self.data[i * self.n + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<HpComplex> {
        (0..self.n).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn add(&self, rhs: &HpMatrix) -> HpMatrix {
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        HpMatrix { n: self.n, data }
    }

    pub fn sub(&self, rhs: &HpMatrix) -> HpMatrix {
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        HpMatrix { n: self.n, data }
    }

    pub fn scale(&self, s: &HpComplex) -> HpMatrix {
        HpMatrix { n: self.n, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn mul(&self, rhs: &HpMatrix) -> HpMatrix {
        let n = self.n;
        let prec = self.data[0].prec();
        let mut out = HpMatrix::zeros(n, prec);
        for i in 0..n {
            for j in 0..n {
                let mut acc = HpComplex::zero(prec);
                for k in 0..n {
                    acc = &acc + &(self.get(i, k) * rhs.get(k, j));
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[HpComplex]) -> Vec<HpComplex> {
        let prec = v[0].prec();
        (0..self.n)
            .map(|i| {
                let mut acc = HpComplex::zero(prec);
                for (k, vk) in v.iter().enumerate() {
                    acc = &acc + &(self.get(i, k) * vk);
                }
                acc
            })
            .collect()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> Float {
        let prec = self.data[0].prec();
        self.data.iter().map(HpComplex::abs).fold(Float::new(prec), |m, a| if a > m { a } else { m })
    }

    /// Gauss-Jordan inverse with partial pivoting. `None` when singular.
    pub fn inverse(&self) -> Option<HpMatrix> {
        let n = self.n;
        let prec = self.data[0].prec();
        let mut a = self.clone();
        let mut inv = HpMatrix::identity(n, prec);
        for col in 0..n {
            let pivot = (col..n).max_by(|&r, &s| {
                a.get(r, col).abs().partial_cmp(&a.get(s, col).abs()).unwrap_or(std::cmp::Ordering::Equal)
            })?;
            if a.get(pivot, col).abs().is_zero() {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(pivot * n + j, col * n + j);
                    inv.data.swap(pivot * n + j, col * n + j);
                }
            }
            let p = a.get(col, col).clone();
            for j in 0..n {
                let v = a.get(col, j).div(&p);
                a.set(col, j, v);
                let w = inv.get(col, j).div(&p);
                inv.set(col, j, w);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a.get(r, col).clone();
                if factor.re.is_zero() && factor.im.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let v = a.get(r, j) - &(&factor * a.get(col, j));
                    a.set(r, j, v);
                    let w = inv.get(r, j) - &(&factor * inv.get(col, j));
                    inv.set(r, j, w);
                }
            }
        }
        Some(inv)
    }
}

/// Accumulator for certified upper bounds: every sum and product is rounded
/// toward `+inf`. Values are nonnegative.
#[derive(Clone, Debug, PartialEq, PartialOrd)]
pub struct UpperBound(Float);

pub const BOUND_PREC: u32 = 192;

impl UpperBound {
    pub fn zero() -> Self {
        UpperBound(Float::new(BOUND_PREC))
    }

    pub fn one() -> Self {
        UpperBound(Float::with_val(BOUND_PREC, 1))
    }

    /// Wraps a value that is already an upper bound.
    pub fn from_float(v: Float) -> Self {
        assert!(!v.is_sign_negative() || v.is_zero(), "upper bounds are nonnegative");
        UpperBound(Float::with_val_round(BOUND_PREC, &v, Round::Up).0)
    }

    pub fn from_f64(v: f64) -> Self {
        assert!(v >= 0.0);
        UpperBound(Float::with_val(BOUND_PREC, v))
    }

    pub fn from_u64(v: u64) -> Self {
        UpperBound(Float::with_val(BOUND_PREC, v))
    }

    pub fn value(&self) -> &Float {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn add(&self, rhs: &UpperBound) -> UpperBound {
        let mut v = self.0.clone();
        v.add_assign_round(&rhs.0, Round::Up);
        UpperBound(v)
    }

    pub fn mul(&self, rhs: &UpperBound) -> UpperBound {
        let mut v = self.0.clone();
        v.mul_assign_round(&rhs.0, Round::Up);
        UpperBound(v)
    }

    pub fn max(&self, rhs: &UpperBound) -> UpperBound {
        if rhs.0 > self.0 {
            rhs.clone()
        } else {
            self.clone()
        }
    }

    /// Bound for `base^e` with `base > 0` given exactly.
    pub fn pow(base: &Float, e: Exponent) -> UpperBound {
        assert!(base.is_sign_positive() && !base.is_zero(), "power base must be positive");
        if e.is_zero() {
            return UpperBound::one();
        }
        // evaluate with guard bits, then inflate past the possible rounding error
        let prec = BOUND_PREC * 2;
        let b = Float::with_val(prec, base);
        let v = if e.is_integer() && e.numer().abs() <= i32::MAX as i64 {
            b.pow(e.numer() as i32)
        } else {
            let mut l = b.ln();
            l *= Float::with_val(prec, e.numer());
            l /= Float::with_val(prec, e.denom());
            l.exp()
        };
        let inflate = Float::with_val(prec, 1) + Float::with_val(prec, Float::i_exp(1, -(BOUND_PREC as i32)));
        UpperBound(Float::with_val_round(BOUND_PREC, v * inflate, Round::Up).0)
    }

    /// Bound for `q / (1 - k q)`, the tail of a Neumann series, or `None`
    /// when `k q >= 1`.
    pub fn neumann_tail(&self, k: u64) -> Option<UpperBound> {
        let mut kq = self.0.clone();
        kq.mul_assign_round(k, Round::Up);
        if kq >= 1 {
            return None;
        }
        let mut den = Float::with_val(BOUND_PREC, 1);
        den.sub_assign_round(&kq, Round::Down);
        let mut v = self.0.clone();
        v.div_assign_round(&den, Round::Up);
        Some(UpperBound(v))
    }

    /// Nearest f64 not below the bound.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64_round(Round::Up)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_bounds_are_upper() {
        let forty = Float::with_val(BOUND_PREC, 40);
        let b = UpperBound::pow(&forty, Exponent::integer(-2));
        assert!(*b.value() >= Float::with_val(BOUND_PREC, 1) / 1600u32);
        assert!(b.to_f64() - 6.25e-4 < 1e-18);
        let r = UpperBound::pow(&Float::with_val(BOUND_PREC, 3), Exponent::frac(1, 4));
        assert!((r.to_f64() - 3f64.powf(0.25)).abs() < 1e-15);
        let r4 = r.mul(&r).mul(&r).mul(&r);
        assert!(*r4.value() >= 3);
    }

    #[test]
    fn neumann_tail_premise() {
        let q = UpperBound::from_f64(0.125);
        assert_eq!(q.neumann_tail(4).unwrap().to_f64(), 0.25);
        assert!(UpperBound::from_f64(0.25).neumann_tail(4).is_none());
    }

    #[test]
    fn complex_arithmetic() {
        let p = 128;
        let a = HpComplex::from_f64(p, 1.0, 2.0);
        let b = HpComplex::from_f64(p, -3.0, 0.5);
        let prod = &a * &b;
        assert_eq!(prod.to_f64_pair(), (-4.0, -5.5));
        let back = prod.div(&b);
        assert!((back.re.to_f64() - 1.0).abs() < 1e-30);
        assert!((back.im.to_f64() - 2.0).abs() < 1e-30);
    }

    #[test]
    fn exp_of_i_pi_is_minus_one() {
        let p = 200;
        let z = HpComplex { re: Float::new(p), im: pi(p) };
        let e = z.exp();
        assert!((e.re.to_f64() + 1.0).abs() < 1e-50);
        assert!(e.im.to_f64().abs() < 1e-50);
    }

    #[test]
    fn inverse_round_trip() {
        let p = 160;
        let vals = [(2.0, 0.0), (1.0, 1.0), (0.0, -1.0), (3.0, 0.5)];
        let m = HpMatrix::from_entries(2, vals.iter().map(|&(r, i)| HpComplex::from_f64(p, r, i)).collect());
        let inv = m.inverse().unwrap();
        let id = m.mul(&inv).sub(&HpMatrix::identity(2, p));
        assert!(id.max_abs().to_f64() < 1e-40);
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        let p = 64;
        let m = HpMatrix::from_entries(2, vec![HpComplex::one(p), HpComplex::one(p), HpComplex::one(p), HpComplex::one(p)]);
        assert!(m.inverse().is_none());
    }

    #[test]
    fn upper_bound_rounds_up() {
        let tiny = UpperBound(Float::with_val(BOUND_PREC, Float::i_exp(1, -300)));
        let sum = UpperBound::one().add(&tiny);
        assert!(*sum.value() > 1);
    }
}
