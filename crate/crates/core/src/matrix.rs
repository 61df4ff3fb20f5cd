//! Square matrices of [`ScalarExpr`] entries.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use rug::Float;
use serde_json::Value;

use crate::cyclo::{Cyclo, CycloField};
use crate::error::Result;
use crate::exponent::Exponent;
use crate::hp::{HpComplex, HpMatrix, UpperBound};
use crate::scalar::{EvalPoint, FModel, MonoKey, ScalarExpr};

#[derive(Clone, PartialEq, Eq)]
pub struct FunMatrix {
    n: usize,
    data: Vec<ScalarExpr>,
}

impl FunMatrix {
    pub fn zeros(n: usize) -> Self {
        FunMatrix { n, data: vec![ScalarExpr::zero(); n * n] }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> ScalarExpr) -> Self {
        let data = (0..n * n).map(|idx| f(idx / n, idx % n)).collect();
        FunMatrix { n, data }
    }

    pub fn diagonal(entries: Vec<ScalarExpr>) -> Self {
        let n = entries.len();
        let mut m = FunMatrix::zeros(n);
        for (i, e) in entries.into_iter().enumerate() {
            m.data[i * n + i] = e;
        }
        m
    }

    /// `s * C` for a constant matrix `C`.
    pub fn scalar_times_constant(s: &ScalarExpr, c: &[Vec<Cyclo>]) -> Self {
        let n = c.len();
        FunMatrix::from_fn(n, |i, j| s.scale(&c[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &ScalarExpr {
        &self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: ScalarExpr) {
        self.data[i * self.n + j] = e;
    }

    pub fn entries(&self) -> &[ScalarExpr] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(ScalarExpr::is_zero)
    }

    pub fn is_diagonal(&self) -> bool {
        self.data.iter().enumerate().all(|(idx, e)| idx / self.n == idx % self.n || e.is_zero())
    }

    pub fn monomial_count(&self) -> usize {
        self.data.iter().map(ScalarExpr::len).sum()
    }

    fn zip(&self, rhs: &FunMatrix, f: impl Fn(&ScalarExpr, &ScalarExpr) -> ScalarExpr + Sync + Send) -> FunMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        FunMatrix { n: self.n, data: self.data.par_iter().zip(&rhs.data).map(|(a, b)| f(a, b)).collect() }
    }

    fn map(&self, f: impl Fn(&ScalarExpr) -> ScalarExpr + Sync + Send) -> FunMatrix {
        FunMatrix { n: self.n, data: self.data.par_iter().map(f).collect() }
    }

    pub fn add(&self, rhs: &FunMatrix) -> FunMatrix {
        self.zip(rhs, ScalarExpr::add)
    }

    pub fn sub(&self, rhs: &FunMatrix) -> FunMatrix {
        self.zip(rhs, ScalarExpr::sub)
    }

    pub fn neg(&self) -> FunMatrix {
        self.map(ScalarExpr::neg)
    }

    pub fn mul(&self, rhs: &FunMatrix) -> FunMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        let n = self.n;
        let data = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let mut acc = ScalarExpr::zero();
                for k in 0..n {
                    let a = self.get(i, k);
                    let b = rhs.get(k, j);
                    if !a.is_zero() && !b.is_zero() {
                        acc = acc.add(&a.mul(b));
                    }
                }
                acc
            })
            .collect();
        FunMatrix { n, data }
    }

    /// Entry-wise product with a scalar function.
    pub fn times_scalar(&self, s: &ScalarExpr) -> FunMatrix {
        self.map(|e| e.mul(s))
    }

    /// `dg M`.
    pub fn dg(&self) -> FunMatrix {
        FunMatrix::from_fn(self.n, |i, j| if i == j { self.get(i, i).clone() } else { ScalarExpr::zero() })
    }

    pub fn off_diagonal(&self) -> FunMatrix {
        FunMatrix::from_fn(self.n, |i, j| if i == j { ScalarExpr::zero() } else { self.get(i, j).clone() })
    }

    pub fn differentiate(&self) -> FunMatrix {
        self.map(ScalarExpr::differentiate)
    }

    /// Order classes of the entries: `order -> matrix of the monomials of that order`.
    pub fn split_by_order(&self) -> BTreeMap<Exponent, FunMatrix> {
        let mut out: BTreeMap<Exponent, FunMatrix> = BTreeMap::new();
        for (idx, e) in self.data.iter().enumerate() {
            for (order, part) in e.split_by_order() {
                out.entry(order).or_insert_with(|| FunMatrix::zeros(self.n)).data[idx] = part;
            }
        }
        out
    }

    /// Smallest `x`-order over all entries.
    pub fn min_order(&self) -> Option<Exponent> {
        self.data.iter().filter_map(ScalarExpr::min_order).min()
    }

    pub fn evaluate(&self, pt: &EvalPoint) -> HpMatrix {
        HpMatrix::from_entries(self.n, self.data.par_iter().map(|e| e.evaluate(pt)).collect())
    }

    /// Element-max norm bound on `[X, inf)`.
    pub fn tail_norm(&self, x: &Float, model: &FModel) -> Result<UpperBound> {
        let bounds: Vec<UpperBound> =
            self.data.par_iter().map(|e| e.tail_bound(x, model)).collect::<Result<_>>()?;
        Ok(bounds.iter().fold(UpperBound::zero(), |acc, b| acc.max(b)))
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            (0..self.n)
                .map(|i| Value::Array((0..self.n).map(|j| self.get(i, j).to_json()).collect()))
                .collect(),
        )
    }
}

/// A matrix with coefficients converted to floats once, for repeated
/// evaluation at many abscissae.
pub struct CompiledMatrix {
    n: usize,
    prec: u32,
    keys: Vec<MonoKey>,
    /// `(entry index, key index, coefficient)`.
    terms: Vec<(usize, usize, HpComplex)>,
}

impl CompiledMatrix {
    pub fn new(m: &FunMatrix, field: &CycloField, prec: u32) -> Self {
        let zetas = field.zeta_powers(prec);
        let mut index: BTreeMap<MonoKey, usize> = BTreeMap::new();
        let mut terms = Vec::new();
        for (idx, e) in m.data.iter().enumerate() {
            for (k, c) in e.terms() {
                let next = index.len();
                let ki = *index.entry(*k).or_insert(next);
                terms.push((idx, ki, c.to_complex(&zetas)));
            }
        }
        let mut keys = vec![MonoKey::ONE; index.len()];
        for (k, i) in index {
            keys[i] = k;
        }
        CompiledMatrix { n: m.n, prec, keys, terms }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eval(&self, pt: &EvalPoint) -> HpMatrix {
        let basis: Vec<Float> = self.keys.iter().map(|k| pt.basis(k)).collect();
        let mut out = HpMatrix::zeros(self.n, self.prec);
        for (idx, ki, c) in &self.terms {
            let (i, j) = (idx / self.n, idx % self.n);
            let v = out.get(i, j) + &c.scale(&basis[*ki]);
            out.set(i, j, v);
        }
        out
    }
}

impl fmt::Display for FunMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            for j in 0..self.n {
                writeln!(f, "  [{},{}] {}", i + 1, j + 1, self.get(i, j))?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for FunMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x_pow(a: i64) -> ScalarExpr {
        ScalarExpr::monomial(Cyclo::one(CycloField::gaussian()), MonoKey::x_pow(Exponent::integer(a)))
    }

    #[test]
    fn product_and_diagonal_split() {
        let f = CycloField::gaussian();
        let a = FunMatrix::from_fn(2, |i, j| if i == j { ScalarExpr::zero() } else { x_pow(-1) });
        let sq = a.mul(&a);
        assert!(sq.is_diagonal());
        assert_eq!(sq.get(0, 0), &x_pow(-2));
        assert!(a.dg().is_zero());
        assert_eq!(a.off_diagonal(), a);
        let id = FunMatrix::diagonal(vec![ScalarExpr::constant(Cyclo::one(f)); 2]);
        assert_eq!(id.mul(&a), a);
    }

    #[test]
    fn order_split_reassembles() {
        let m = FunMatrix::from_fn(2, |i, j| x_pow(-(i as i64) - 1).add(&x_pow(-(j as i64) - 2)));
        let parts = m.split_by_order();
        let total = parts.values().fold(FunMatrix::zeros(2), |acc, p| acc.add(p));
        assert_eq!(total, m);
        assert_eq!(m.min_order(), Some(Exponent::integer(1)));
    }
}
