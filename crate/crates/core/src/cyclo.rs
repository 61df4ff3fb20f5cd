//! Exact arithmetic in the cyclotomic field `Q(zeta_N)`.
//!
//! Coefficients of the scalar algebra live here: the diagonal of `D` is made of
//! `n`-th roots of unity and the constant matrices carry Gaussian rationals, so
//! `N = lcm(n, 4)` holds every number the recursion produces. Elements are
//! stored in the power basis `1, zeta, ..., zeta^(phi(N)-1)`.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Mutex, OnceLock};

use num_integer::Integer;
use rug::float::Round;
use rug::{Float, Rational};

use crate::error::{Error, Result};
use crate::hp::{pi, HpComplex, BOUND_PREC};

trait RationalExt {
    fn is_zero(&self) -> bool;
}

impl RationalExt for Rational {
    fn is_zero(&self) -> bool {
        self.cmp0() == std::cmp::Ordering::Equal
    }
}

pub struct CycloField {
    order: u32,
    degree: usize,
    /// Low coefficients of the monic cyclotomic polynomial.
    phi_low: Vec<i64>,
    /// Power-basis coordinates of `zeta^e` for `0 <= e < order`.
    powers: Vec<Vec<Rational>>,
    /// Exponents `k` of the nontrivial Galois automorphisms `zeta -> zeta^k`.
    units: Vec<u32>,
}

impl fmt::Debug for CycloField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q(zeta_{})", self.order)
    }
}

static REGISTRY: OnceLock<Mutex<HashMap<u32, &'static CycloField>>> = OnceLock::new();

impl CycloField {
    /// The field `Q(zeta_order)`; instances are interned for the process lifetime.
    pub fn get(order: u32) -> &'static CycloField {
        assert!(order >= 1);
        let registry = REGISTRY.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = registry.lock().unwrap();
        map.entry(order).or_insert_with(|| Box::leak(Box::new(CycloField::construct(order))))
    }

    /// Field holding the `n`-th roots of unity and `i`.
    pub fn for_dimension(n: usize) -> &'static CycloField {
        CycloField::get((n as u32).lcm(&4))
    }

    pub fn gaussian() -> &'static CycloField {
        CycloField::get(4)
    }

    fn construct(order: u32) -> CycloField {
        let phi = cyclotomic_poly(order);
        let degree = phi.len() - 1;
        let phi_low = phi[..degree].to_vec();
        let mut field = CycloField { order, degree, phi_low, powers: Vec::new(), units: Vec::new() };
        let mut cur = vec![Rational::new(); degree];
        cur[0] = Rational::from(1);
        for _ in 0..order {
            field.powers.push(cur.clone());
            let mut shifted = vec![Rational::new(); degree + 1];
            for (i, c) in cur.iter().enumerate() {
                shifted[i + 1] = c.clone();
            }
            cur = field.reduce(shifted);
        }
        field.units = (2..order).filter(|k| k.gcd(&order) == 1).collect();
        field
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn reduce(&self, mut poly: Vec<Rational>) -> Vec<Rational> {
        let d = self.degree;
        for k in (d..poly.len()).rev() {
            if poly[k].is_zero() {
                continue;
            }
            let c = std::mem::take(&mut poly[k]);
            for (i, &p) in self.phi_low.iter().enumerate() {
                if p != 0 {
                    poly[k - d + i] -= Rational::from(&c * p);
                }
            }
        }
        poly.truncate(d);
        poly.resize(d, Rational::new());
        poly
    }

    /// Numeric values of `zeta^e`, `0 <= e < order`.
    pub fn zeta_powers(&self, prec: u32) -> Vec<HpComplex> {
        let two_pi = pi(prec) * 2u32;
        (0..self.order)
            .map(|e| {
                let angle = Float::with_val(prec, &two_pi * e) / self.order;
                let (s, c) = angle.sin_cos(Float::new(prec));
                HpComplex { re: c, im: s }
            })
            .collect()
    }
}

fn cyclotomic_poly(order: u32) -> Vec<i64> {
    // x^N - 1 divided by Phi_d for every proper divisor d
    let mut num = vec![0i64; order as usize + 1];
    num[0] = -1;
    num[order as usize] = 1;
    for d in 1..order {
        if order.is_multiple_of(d) {
            num = poly_div_exact(&num, &cyclotomic_poly(d));
        }
    }
    num
}

fn poly_div_exact(num: &[i64], den: &[i64]) -> Vec<i64> {
    let mut rem = num.to_vec();
    let dd = den.len() - 1;
    let qd = num.len() - 1 - dd;
    let mut q = vec![0i64; qd + 1];
    for k in (0..=qd).rev() {
        let c = rem[k + dd];
        q[k] = c;
        for (i, &di) in den.iter().enumerate() {
            rem[k + i] -= c * di;
        }
    }
    debug_assert!(rem.iter().all(|&r| r == 0));
    q
}

/// An element of `Q(zeta_N)`.
#[derive(Clone)]
pub struct Cyclo {
    field: &'static CycloField,
    c: Vec<Rational>,
}

impl PartialEq for Cyclo {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.field, other.field) && self.c == other.c
    }
}

impl Eq for Cyclo {}

impl Cyclo {
    pub fn zero(field: &'static CycloField) -> Self {
        Cyclo { field, c: vec![Rational::new(); field.degree] }
    }

    pub fn from_rational(field: &'static CycloField, q: Rational) -> Self {
        let mut z = Self::zero(field);
        z.c[0] = q;
        z
    }

    pub fn one(field: &'static CycloField) -> Self {
        Self::from_rational(field, Rational::from(1))
    }

    pub fn integer(field: &'static CycloField, v: i64) -> Self {
        Self::from_rational(field, Rational::from(v))
    }

    pub fn zeta_pow(field: &'static CycloField, e: i64) -> Self {
        let idx = e.rem_euclid(field.order as i64) as usize;
        Cyclo { field, c: field.powers[idx].clone() }
    }

    pub fn imag_unit(field: &'static CycloField) -> Self {
        assert!(field.order.is_multiple_of(4), "field does not contain i");
        Self::zeta_pow(field, field.order as i64 / 4)
    }

    pub fn from_re_im(field: &'static CycloField, re: Rational, im: Rational) -> Self {
        let mut z = Self::imag_unit(field).scale(&im);
        z.c[0] += re;
        z
    }

    pub fn field(&self) -> &'static CycloField {
        self.field
    }

    pub fn coords(&self) -> &[Rational] {
        &self.c
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|q| q.is_zero())
    }

    /// The rational value, if the element lies in `Q`.
    pub fn as_rational(&self) -> Option<&Rational> {
        self.c[1..].iter().all(|q| q.is_zero()).then(|| &self.c[0])
    }

    pub fn scale(&self, q: &Rational) -> Self {
        Cyclo { field: self.field, c: self.c.iter().map(|x| Rational::from(x * q)).collect() }
    }

    fn check_field(&self, other: &Cyclo) {
        assert!(std::ptr::eq(self.field, other.field), "mixed cyclotomic fields {:?} and {:?}", self.field, other.field);
    }

    /// Image under `zeta -> zeta^k`.
    pub fn galois(&self, k: u32) -> Self {
        let mut out = Self::zero(self.field);
        for (j, q) in self.c.iter().enumerate() {
            if q.is_zero() {
                continue;
            }
            let e = (j as u64 * k as u64 % self.field.order as u64) as usize;
            for (slot, p) in out.c.iter_mut().zip(&self.field.powers[e]) {
                if !p.is_zero() {
                    *slot += Rational::from(q * p);
                }
            }
        }
        out
    }

    pub fn inv(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        let mut conj_prod = Self::one(self.field);
        for &k in &self.field.units {
            conj_prod = &conj_prod * &self.galois(k);
        }
        let norm = &conj_prod * self;
        let n = norm.as_rational().expect("field norm is rational").clone();
        Some(conj_prod.scale(&Rational::from(n.recip_ref())))
    }

    pub fn to_complex(&self, zetas: &[HpComplex]) -> HpComplex {
        let prec = zetas[0].prec();
        let mut acc = HpComplex::zero(prec);
        for (q, z) in self.c.iter().zip(zetas) {
            if q.is_zero() {
                continue;
            }
            let qf = Float::with_val(prec, q);
            acc = &acc + &z.scale(&qf);
        }
        acc
    }

    /// A certified upper bound for the modulus.
    pub fn abs_upper(&self) -> Float {
        if self.is_zero() {
            return Float::new(BOUND_PREC);
        }
        if let Some(q) = self.as_rational() {
            return Float::with_val_round(BOUND_PREC, q.clone().abs(), Round::Up).0;
        }
        if self.field.order == 4 {
            let sq = Rational::from(self.c[0].square_ref()) + Rational::from(self.c[1].square_ref());
            let mut r = Float::with_val_round(BOUND_PREC, &sq, Round::Up).0;
            r.sqrt_round(Round::Up);
            return r;
        }
        // guard digits: evaluate far above the bound precision and inflate
        let prec = BOUND_PREC * 2;
        let z = self.to_complex(&self.field.zeta_powers(prec));
        let r = z.abs();
        let inflate = Float::with_val(prec, 1) + Float::with_val(prec, Float::i_exp(1, -(BOUND_PREC as i32)));
        Float::with_val_round(BOUND_PREC, r * inflate, Round::Up).0
    }

    /// `(re, im)` when the field is `Q(i)`.
    pub fn re_im(&self) -> Option<(Rational, Rational)> {
        (self.field.order == 4).then(|| (self.c[0].clone(), self.c[1].clone()))
    }

    pub fn parse(field: &'static CycloField, s: &str) -> Result<Self> {
        let err = || Error::Parse(format!("bad coefficient `{s}`"));
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let t = t.trim_start_matches('(').trim_end_matches(')');
        if t.is_empty() {
            return Err(err());
        }
        let mut out = Cyclo::zero(field);
        let mut start = 0;
        let bytes = t.as_bytes();
        let mut pieces = Vec::new();
        for i in 1..=bytes.len() {
            if i == bytes.len() || ((bytes[i] == b'+' || bytes[i] == b'-') && bytes[i - 1] != b'^') {
                pieces.push(&t[start..i]);
                start = i;
            }
        }
        for piece in pieces {
            let (sign, body) = match piece.as_bytes()[0] {
                b'-' => (-1, &piece[1..]),
                b'+' => (1, &piece[1..]),
                _ => (1, piece),
            };
            let (num, unit) = if let Some(rest) = body.strip_suffix('i') {
                (rest, Cyclo::imag_unit(field))
            } else if let Some(pos) = body.find('z') {
                let e: i64 = match &body[pos + 1..] {
                    "" => 1,
                    ex => ex.strip_prefix('^').ok_or_else(err)?.parse().map_err(|_| err())?,
                };
                (body[..pos].trim_end_matches('*'), Cyclo::zeta_pow(field, e))
            } else {
                (body, Cyclo::one(field))
            };
            let q: Rational = if num.is_empty() { Rational::from(1) } else { num.parse().map_err(|_| err())? };
            out = &out + &unit.scale(&(q * sign));
        }
        Ok(out)
    }
}

impl fmt::Display for Cyclo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut parts: Vec<(bool, String)> = Vec::new();
        let push = |parts: &mut Vec<(bool, String)>, q: &Rational, unit: &str| {
            if q.is_zero() {
                return;
            }
            let neg = *q < 0;
            let mag = Rational::from(q.abs_ref());
            let body = if unit.is_empty() {
                mag.to_string()
            } else if mag == 1 {
                unit.to_string()
            } else if unit == "i" {
                format!("{mag}i")
            } else {
                format!("{mag}*{unit}")
            };
            parts.push((neg, body));
        };
        if self.field.order == 4 {
            push(&mut parts, &self.c[0], "");
            push(&mut parts, &self.c[1], "i");
        } else {
            for (j, q) in self.c.iter().enumerate() {
                let unit = match j {
                    0 => String::new(),
                    1 => "z".to_string(),
                    _ => format!("z^{j}"),
                };
                push(&mut parts, q, &unit);
            }
        }
        for (idx, (neg, body)) in parts.iter().enumerate() {
            match (idx, neg) {
                (0, true) => write!(f, "-{body}")?,
                (0, false) => write!(f, "{body}")?,
                (_, true) => write!(f, "-{body}")?,
                (_, false) => write!(f, "+{body}")?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Cyclo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({self})")
    }
}

impl Add<&Cyclo> for &Cyclo {
    type Output = Cyclo;
    fn add(self, rhs: &Cyclo) -> Cyclo {
        self.check_field(rhs);
        Cyclo { field: self.field, c: self.c.iter().zip(&rhs.c).map(|(a, b)| Rational::from(a + b)).collect() }
    }
}

impl Sub<&Cyclo> for &Cyclo {
    type Output = Cyclo;
    fn sub(self, rhs: &Cyclo) -> Cyclo {
        self.check_field(rhs);
        Cyclo { field: self.field, c: self.c.iter().zip(&rhs.c).map(|(a, b)| Rational::from(a - b)).collect() }
    }
}

impl Neg for &Cyclo {
    type Output = Cyclo;
    fn neg(self) -> Cyclo {
        Cyclo { field: self.field, c: self.c.iter().map(|a| Rational::from(-a)).collect() }
    }
}

impl Mul<&Cyclo> for &Cyclo {
    type Output = Cyclo;
    fn mul(self, rhs: &Cyclo) -> Cyclo {
        self.check_field(rhs);
        let d = self.field.degree;
        if d == 1 {
            return Cyclo { field: self.field, c: vec![Rational::from(&self.c[0] * &rhs.c[0])] };
        }
        let mut prod = vec![Rational::new(); 2 * d - 1];
        for (i, a) in self.c.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.c.iter().enumerate() {
                if !b.is_zero() {
                    prod[i + j] += Rational::from(a * b);
                }
            }
        }
        Cyclo { field: self.field, c: self.field.reduce(prod) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclotomic_polynomials() {
        assert_eq!(cyclotomic_poly(1), vec![-1, 1]);
        assert_eq!(cyclotomic_poly(4), vec![1, 0, 1]);
        assert_eq!(cyclotomic_poly(12), vec![1, 0, -1, 0, 1]);
        assert_eq!(cyclotomic_poly(6), vec![1, -1, 1]);
    }

    #[test]
    fn gaussian_arithmetic() {
        let f = CycloField::gaussian();
        let i = Cyclo::imag_unit(f);
        assert_eq!(&i * &i, Cyclo::integer(f, -1));
        let z = Cyclo::parse(f, "1-i").unwrap();
        let inv = z.inv().unwrap();
        assert_eq!(inv, Cyclo::parse(f, "1/2+1/2i").unwrap());
        assert_eq!(&z * &inv, Cyclo::one(f));
    }

    #[test]
    fn inverse_in_degree_four_field() {
        let f = CycloField::for_dimension(3);
        assert_eq!(f.order(), 12);
        let w = Cyclo::zeta_pow(f, 4); // primitive cube root of unity
        let a = &(&w - &Cyclo::one(f)) + &Cyclo::imag_unit(f).scale(&Rational::from((1, 3)));
        let b = a.inv().unwrap();
        assert_eq!(&a * &b, Cyclo::one(f));
        assert_eq!(&(&(&w * &w) * &w), &Cyclo::one(f));
    }

    #[test]
    fn numeric_value_matches() {
        let f = CycloField::for_dimension(3);
        let prec = 128;
        let zetas = f.zeta_powers(prec);
        let w = Cyclo::zeta_pow(f, 4).to_complex(&zetas);
        assert!((w.re.to_f64() + 0.5).abs() < 1e-30);
        assert!((w.im.to_f64() - 3f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn render_parse_round_trip() {
        let f = CycloField::gaussian();
        for s in ["3/8-1/8i", "-i", "2", "-5/3+i"] {
            let z = Cyclo::parse(f, s).unwrap();
            assert_eq!(z.to_string(), s);
        }
        let g = CycloField::get(12);
        let z = &Cyclo::zeta_pow(g, 1).scale(&Rational::from((-2, 3))) + &Cyclo::zeta_pow(g, 3);
        assert_eq!(Cyclo::parse(g, &z.to_string()).unwrap(), z);
    }

    #[test]
    fn modulus_bound_is_upper() {
        let f = CycloField::gaussian();
        let z = Cyclo::parse(f, "1/8+1/8i").unwrap();
        let b = z.abs_upper();
        let exact = (2f64).sqrt() / 8.0;
        assert!(b.to_f64() >= exact && b.to_f64() - exact < 1e-15);
        let g = CycloField::get(12);
        let w = Cyclo::zeta_pow(g, 1);
        let bw = w.abs_upper();
        assert!(bw >= 1 && bw.to_f64() - 1.0 < 1e-15);
    }
}
