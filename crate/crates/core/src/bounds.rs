//! Certified upper bounds for the element-max norm of the final error block
//! `E_M` on `[X, inf)`.
//!
//! Every matrix atom is bounded entry-wise from the ranges of `f` and `f'`;
//! products use `|AB| <= n |A| |B|`, sums the triangle inequality, and the
//! inverses `A_m = (I + P_m)^-1` the Neumann series, which needs `n |P_m| < 1`.

use std::collections::BTreeMap;

use rug::float::Round;
use rug::ops::SubAssignRound;
use rug::Float;
use serde_json::{json, Value};

use crate::diagflow::Pipeline;
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::hp::{UpperBound, BOUND_PREC};
use crate::ncalg::{Kind, NCExpr, NCSymbol, NCTerm};

/// How products containing `A_m` or `I + P_m` are bounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BoundStrategy {
    /// `n^(k-1)` times the product of the factor norms.
    Plain,
    /// Write `A_m = I + Q_m` and `I + P_m = I + P_m`, expand the identity parts
    /// and bound each resulting product separately.
    #[default]
    IdentitySplit,
}

#[derive(Clone, Debug)]
pub struct TermBound {
    pub term: String,
    pub multiplicity: i64,
    pub bound: UpperBound,
}

#[derive(Clone, Debug)]
pub struct BoundReport {
    pub x: f64,
    pub k: Exponent,
    pub n: usize,
    pub strategy: BoundStrategy,
    pub total: UpperBound,
    /// Atom -> bound of its norm on `[X, inf)`.
    pub ledger: BTreeMap<NCSymbol, UpperBound>,
    /// Norm bounds of the deviations `A_m - I`.
    pub inverse_tails: BTreeMap<usize, UpperBound>,
    pub terms: Vec<TermBound>,
}

struct Bounder<'a> {
    pipe: &'a Pipeline,
    x: Float,
    n: u64,
    strategy: BoundStrategy,
    ledger: BTreeMap<NCSymbol, UpperBound>,
    tails: BTreeMap<usize, UpperBound>,
}

impl<'a> Bounder<'a> {
    fn concrete(&mut self, sym: &NCSymbol) -> Result<UpperBound> {
        if let Some(b) = self.ledger.get(sym) {
            return Ok(b.clone());
        }
        let state = self.pipe.state(sym.m);
        let mat = state.matrix(sym).ok_or_else(|| Error::UnknownSymbol(sym.to_string()))?;
        let b = mat.tail_norm(&self.x, &self.pipe.scenario.f)?;
        self.ledger.insert(*sym, b.clone());
        Ok(b)
    }

    fn p_norm(&mut self, m: usize) -> Result<UpperBound> {
        let lat = &self.pipe.scenario.lattice;
        self.concrete(&NCSymbol::p(lat, m))
    }

    /// Bound for `|A_m - I|`: `q / (1 - n q)`.
    fn inverse_tail(&mut self, m: usize) -> Result<UpperBound> {
        if let Some(t) = self.tails.get(&m) {
            return Ok(t.clone());
        }
        let q = self.p_norm(m)?;
        let t = q.neumann_tail(self.n).ok_or_else(|| {
            Error::RigorFailure(format!(
                "|P[{m}]| <= {:.6e} is not below 1/n = {:.6e} at X = {}",
                q.to_f64(),
                1.0 / self.n as f64,
                self.x.to_f64()
            ))
        })?;
        self.tails.insert(m, t.clone());
        Ok(t)
    }

    fn atom(&mut self, sym: &NCSymbol) -> Result<UpperBound> {
        match sym.kind {
            Kind::A => {
                let b = UpperBound::one().add(&self.inverse_tail(sym.m)?);
                self.ledger.insert(*sym, b.clone());
                Ok(b)
            }
            Kind::IplusP => {
                let b = UpperBound::one().max(&self.p_norm(sym.m)?);
                self.ledger.insert(*sym, b.clone());
                Ok(b)
            }
            Kind::E => self.error_block(sym),
            Kind::S => Err(Error::UnknownSymbol(sym.to_string())),
            _ => self.concrete(sym),
        }
    }

    /// `|E_m|`: its template plus the regrading spill.
    fn error_block(&mut self, sym: &NCSymbol) -> Result<UpperBound> {
        if let Some(b) = self.ledger.get(sym) {
            return Ok(b.clone());
        }
        let b = if sym.m == 1 {
            UpperBound::zero()
        } else {
            let template = self.pipe.plan.stage(sym.m - 1).e_template.clone();
            let (tb, _) = self.expr(&template)?;
            let spill = self.pipe.spill(sym.m).tail_norm(&self.x, &self.pipe.scenario.f)?;
            tb.add(&spill)
        };
        self.ledger.insert(*sym, b.clone());
        Ok(b)
    }

    fn term(&mut self, t: &NCTerm) -> Result<UpperBound> {
        let n = UpperBound::from_u64(self.n);
        // a vanishing factor kills the product, whatever the other norms
        for s in t.factors() {
            if s.kind == Kind::E && s.m == 1 {
                return Ok(UpperBound::zero());
            }
        }
        match self.strategy {
            BoundStrategy::Plain => {
                let mut b = UpperBound::one();
                for (i, s) in t.factors().iter().enumerate() {
                    if i > 0 {
                        b = b.mul(&n);
                    }
                    b = b.mul(&self.atom(s)?);
                }
                Ok(b)
            }
            BoundStrategy::IdentitySplit => {
                let mut core = UpperBound::one();
                let mut cores = 0usize;
                let mut split = UpperBound::one();
                for s in t.factors() {
                    let dev = match s.kind {
                        Kind::A => Some(self.inverse_tail(s.m)?),
                        Kind::IplusP => Some(self.p_norm(s.m)?),
                        _ => None,
                    };
                    match dev {
                        Some(y) => {
                            self.atom(s)?;
                            split = split.mul(&UpperBound::one().add(&n.mul(&y)));
                        }
                        None => {
                            if cores > 0 {
                                core = core.mul(&n);
                            }
                            cores += 1;
                            core = core.mul(&self.atom(s)?);
                        }
                    }
                }
                if cores > 0 {
                    return Ok(core.mul(&split));
                }
                // 1 + (prod(1 + n y) - 1) / n
                let mut excess = split.value().clone();
                excess.sub_assign_round(1u32, Round::Up);
                let excess = Float::with_val_round(BOUND_PREC, &excess / self.n, Round::Up).0;
                Ok(UpperBound::one().add(&UpperBound::from_float(excess.max(&Float::new(BOUND_PREC)))))
            }
        }
    }

    fn expr(&mut self, e: &NCExpr) -> Result<(UpperBound, Vec<TermBound>)> {
        let mut total = UpperBound::zero();
        let mut parts = Vec::new();
        for (t, c) in e.terms() {
            let b = self.term(t)?.mul(&UpperBound::from_u64(c.unsigned_abs()));
            if b.is_zero() {
                continue;
            }
            total = total.add(&b);
            parts.push(TermBound { term: t.to_string(), multiplicity: c, bound: b });
        }
        Ok((total, parts))
    }
}

/// Bound for `|E_M|` on `[X, inf)`.
pub fn bound_final_error(pipe: &Pipeline, x: f64, strategy: BoundStrategy) -> Result<BoundReport> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::NonPositiveAbscissa(x));
    }
    let s = &pipe.scenario;
    let mut b = Bounder {
        pipe,
        x: Float::with_val(BOUND_PREC, x),
        n: s.n as u64,
        strategy,
        ledger: BTreeMap::new(),
        tails: BTreeMap::new(),
    };
    // the Neumann premise is checked for every stage, used or not
    for m in 1..s.lattice.m {
        b.inverse_tail(m)?;
    }
    let (mut total, mut terms) = b.expr(pipe.plan.final_error())?;
    let spill = pipe.final_spill.tail_norm(&b.x, &s.f)?;
    if !spill.is_zero() {
        total = total.add(&spill);
        terms.push(TermBound { term: format!("spill[{}]", s.lattice.m), multiplicity: 1, bound: spill });
    }
    Ok(BoundReport {
        x,
        k: s.lattice.k,
        n: s.n,
        strategy,
        total,
        ledger: b.ledger,
        inverse_tails: b.tails,
        terms,
    })
}

/// Totals over several abscissae.
pub fn bound_curve(pipe: &Pipeline, xs: &[f64], strategy: BoundStrategy) -> Result<Vec<(f64, UpperBound)>> {
    xs.iter().map(|&x| bound_final_error(pipe, x, strategy).map(|r| (x, r.total))).collect()
}

pub fn curve_csv(curve: &[(f64, UpperBound)]) -> String {
    let mut out = String::from("X,total\n");
    for (x, t) in curve {
        out.push_str(&format!("{x},{:.6e}\n", t.to_f64()));
    }
    out
}

fn sci(b: &UpperBound) -> String {
    format!("{:.6e}", b.to_f64())
}

impl BoundReport {
    pub fn to_json(&self) -> Value {
        let ledger: serde_json::Map<String, Value> =
            self.ledger.iter().map(|(s, b)| (s.to_string(), json!(sci(b)))).collect();
        let tails: serde_json::Map<String, Value> =
            self.inverse_tails.iter().map(|(m, b)| (format!("A[{m}]-I"), json!(sci(b)))).collect();
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|t| json!({"term": t.term, "multiplicity": t.multiplicity, "bound": sci(&t.bound)}))
            .collect();
        json!({
            "X": self.x,
            "K": self.k,
            "n": self.n,
            "strategy": match self.strategy {
                BoundStrategy::Plain => "plain",
                BoundStrategy::IdentitySplit => "identity-split",
            },
            "total": sci(&self.total),
            "ledger": ledger,
            "inverse_tails": tails,
            "terms": terms,
        })
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("bound for |E[M]| on [X, inf), X = {}, K = {}, n = {}\n", self.x, self.k, self.n));
        out.push_str(&format!("total  {}\n\n", sci(&self.total)));
        out.push_str("atom norms\n");
        for (s, b) in &self.ledger {
            out.push_str(&format!("  {:<12} {}\n", s.to_string(), sci(b)));
        }
        out.push_str("\nterms\n");
        for t in &self.terms {
            let mult = if t.multiplicity.abs() == 1 { String::new() } else { format!("{}·", t.multiplicity.abs()) };
            out.push_str(&format!("  {:<40} {}\n", format!("{mult}{}", t.term), sci(&t.bound)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagflow::run_pipeline;
    use crate::scenario::{Overrides, Scenario};

    fn periodic() -> Pipeline {
        let s = Scenario::from_json_str(
            r#"{"name":"p","kind":"periodic","n":4,"alpha":4,"beta":1,"f":{"kind":"two_plus_sin"},
                "f_range":[1,3],"fp_bound":1,"X":40,"digits":30,"K":4}"#,
            &Overrides::default(),
        )
        .unwrap();
        run_pipeline(&s).unwrap()
    }

    #[test]
    fn inverse_norm_formula() {
        assert_eq!(UpperBound::zero().neumann_tail(4).unwrap().to_f64(), 0.0);
        // |P| = 1/(2n) gives 1 + 1/n
        let t = UpperBound::from_f64(0.125).neumann_tail(4).unwrap();
        assert_eq!(UpperBound::one().add(&t).to_f64(), 1.25);
    }

    #[test]
    fn split_is_tighter_than_plain() {
        let pipe = periodic();
        let a = bound_final_error(&pipe, 40.0, BoundStrategy::IdentitySplit).unwrap();
        let b = bound_final_error(&pipe, 40.0, BoundStrategy::Plain).unwrap();
        assert!(a.total.value() <= b.total.value());
        let sum = a.terms.iter().fold(UpperBound::zero(), |acc, t| acc.add(&t.bound));
        assert_eq!(sum.to_f64(), a.total.to_f64());
    }

    #[test]
    fn small_x_is_a_rigor_failure() {
        let pipe = periodic();
        assert!(matches!(bound_final_error(&pipe, 1.0, BoundStrategy::IdentitySplit), Err(Error::RigorFailure(_))));
    }

    #[test]
    fn curve_is_monotone() {
        let pipe = periodic();
        let c = bound_curve(&pipe, &[40.0, 80.0, 160.0], BoundStrategy::IdentitySplit).unwrap();
        assert!(c.windows(2).all(|w| w[1].1.value() <= w[0].1.value()));
        assert!(curve_csv(&c).starts_with("X,total\n40,"));
    }
}
