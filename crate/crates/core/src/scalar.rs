//! Sums of monomials `c * x^a * f^b * f'^c` with exact coefficients.
//!
//! `f` is the periodic generator of the scenario. The basis is closed under
//! differentiation because `f'' = 2 - f`.

use std::collections::BTreeMap;
use std::fmt;

use rug::float::Round;
use rug::ops::Pow;
use rug::Float;
use serde_json::{json, Value};

use crate::cyclo::{Cyclo, CycloField};
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::hp::{HpComplex, UpperBound, BOUND_PREC};

/// Exponents of one monomial. Ordered by `(a, b, c)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonoKey {
    pub a: Exponent,
    pub b: Exponent,
    pub c: u32,
}

impl MonoKey {
    pub const ONE: MonoKey = MonoKey { a: Exponent::ZERO, b: Exponent::ZERO, c: 0 };

    pub fn new(a: Exponent, b: Exponent, c: u32) -> Self {
        MonoKey { a, b, c }
    }

    pub fn x_pow(a: Exponent) -> Self {
        MonoKey { a, ..MonoKey::ONE }
    }

    /// The `x`-order `-a`: the monomial is `O(x^-order)`.
    pub fn order(&self) -> Exponent {
        -self.a
    }

    fn times(&self, rhs: &MonoKey) -> MonoKey {
        MonoKey { a: self.a + rhs.a, b: self.b + rhs.b, c: self.c + rhs.c }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Monomial {
    pub coeff: Cyclo,
    pub key: MonoKey,
}

#[derive(Clone, Default, PartialEq, Eq)]
pub struct ScalarExpr {
    terms: BTreeMap<MonoKey, Cyclo>,
}

impl ScalarExpr {
    pub fn zero() -> Self {
        ScalarExpr::default()
    }

    pub fn constant(c: Cyclo) -> Self {
        Self::monomial(c, MonoKey::ONE)
    }

    pub fn monomial(c: Cyclo, key: MonoKey) -> Self {
        let mut e = ScalarExpr::zero();
        e.add_term(key, c);
        e
    }

    pub fn from_monomials(monos: impl IntoIterator<Item = Monomial>) -> Self {
        let mut e = ScalarExpr::zero();
        for m in monos {
            e.add_term(m.key, m.coeff);
        }
        e
    }

    pub fn add_term(&mut self, key: MonoKey, c: Cyclo) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&key) {
            Some(existing) => {
                *existing = &*existing + &c;
                if existing.is_zero() {
                    self.terms.remove(&key);
                }
            }
            None => {
                self.terms.insert(key, c);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MonoKey, &Cyclo)> {
        self.terms.iter()
    }

    pub fn monomials(&self) -> impl Iterator<Item = Monomial> + '_ {
        self.terms.iter().map(|(k, c)| Monomial { coeff: c.clone(), key: *k })
    }

    /// Smallest `x`-order present, i.e. the dominant decay rate.
    pub fn min_order(&self) -> Option<Exponent> {
        self.terms.keys().map(MonoKey::order).min()
    }

    pub fn add(&self, rhs: &ScalarExpr) -> ScalarExpr {
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.add_term(*k, c.clone());
        }
        out
    }

    pub fn sub(&self, rhs: &ScalarExpr) -> ScalarExpr {
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.add_term(*k, -c);
        }
        out
    }

    pub fn neg(&self) -> ScalarExpr {
        ScalarExpr { terms: self.terms.iter().map(|(k, c)| (*k, -c)).collect() }
    }

    pub fn mul(&self, rhs: &ScalarExpr) -> ScalarExpr {
        let mut out = ScalarExpr::zero();
        for (k1, c1) in &self.terms {
            for (k2, c2) in &rhs.terms {
                out.add_term(k1.times(k2), c1 * c2);
            }
        }
        out
    }

    pub fn scale(&self, c: &Cyclo) -> ScalarExpr {
        if c.is_zero() {
            return ScalarExpr::zero();
        }
        ScalarExpr { terms: self.terms.iter().map(|(k, v)| (*k, v * c)).collect() }
    }

    pub fn mul_monomial(&self, c: &Cyclo, key: MonoKey) -> ScalarExpr {
        if c.is_zero() {
            return ScalarExpr::zero();
        }
        ScalarExpr { terms: self.terms.iter().map(|(k, v)| (k.times(&key), v * c)).collect() }
    }

    /// `d/dx` using `f'' = 2 - f`.
    pub fn differentiate(&self) -> ScalarExpr {
        let mut out = ScalarExpr::zero();
        for (k, coeff) in &self.terms {
            let field = coeff.field();
            if !k.a.is_zero() {
                let q = rug::Rational::from((k.a.numer(), k.a.denom()));
                out.add_term(MonoKey { a: k.a - Exponent::ONE, ..*k }, coeff.scale(&q));
            }
            if !k.b.is_zero() {
                let q = rug::Rational::from((k.b.numer(), k.b.denom()));
                out.add_term(MonoKey { b: k.b - Exponent::ONE, c: k.c + 1, ..*k }, coeff.scale(&q));
            }
            if k.c > 0 {
                let cc = &Cyclo::integer(field, k.c as i64) * coeff;
                out.add_term(MonoKey { c: k.c - 1, ..*k }, cc.scale(&rug::Rational::from(2)));
                out.add_term(MonoKey { b: k.b + Exponent::ONE, c: k.c - 1, ..*k }, -&cc);
            }
        }
        out
    }

    /// Buckets keyed by `x`-order.
    pub fn split_by_order(&self) -> BTreeMap<Exponent, ScalarExpr> {
        let mut out: BTreeMap<Exponent, ScalarExpr> = BTreeMap::new();
        for (k, c) in &self.terms {
            out.entry(k.order()).or_default().terms.insert(*k, c.clone());
        }
        out
    }

    pub fn evaluate(&self, pt: &EvalPoint) -> HpComplex {
        let mut acc = HpComplex::zero(pt.prec);
        for (k, c) in &self.terms {
            let v = c.to_complex(&pt.zetas);
            acc = &acc + &v.scale(&pt.basis(k));
        }
        acc
    }

    /// `sup_{x >= X} |e(x)|` bound from the ranges of `f` and `f'`.
    pub fn tail_bound(&self, x: &Float, model: &FModel) -> Result<UpperBound> {
        let mut total = UpperBound::zero();
        for (k, c) in &self.terms {
            if k.a.is_positive() {
                return Err(Error::GrowingTerm(render_monomial(c, k)));
            }
            let mut t = UpperBound::from_float(c.abs_upper());
            t = t.mul(&UpperBound::pow(x, k.a));
            t = t.mul(&model.f_pow_bound(k.b));
            if k.c > 0 {
                let fp = Float::with_val(BOUND_PREC, model.fp_bound);
                if fp.is_zero() {
                    continue;
                }
                t = t.mul(&UpperBound::pow(&fp, Exponent::integer(k.c as i64)));
            }
            total = total.add(&t);
        }
        Ok(total)
    }

    pub fn to_json(&self) -> Value {
        Value::Array(self.terms.iter().map(|(k, c)| monomial_json(c, k)).collect())
    }

    pub fn parse(field: &'static CycloField, s: &str) -> Result<ScalarExpr> {
        let t = s.trim();
        if t == "0" {
            return Ok(ScalarExpr::zero());
        }
        let mut out = ScalarExpr::zero();
        for piece in t.split(" + ") {
            let (c, k) = parse_monomial(field, piece.trim())?;
            out.add_term(k, c);
        }
        Ok(out)
    }
}

fn monomial_json(c: &Cyclo, k: &MonoKey) -> Value {
    let mut obj = serde_json::Map::new();
    match c.re_im() {
        Some((re, im)) => {
            obj.insert("re".into(), json!(re.to_string()));
            obj.insert("im".into(), json!(im.to_string()));
        }
        None => {
            let z = c.to_complex(&c.field().zeta_powers(128));
            let (re, im) = z.to_f64_pair();
            obj.insert("re".into(), json!(format!("{re:e}")));
            obj.insert("im".into(), json!(format!("{im:e}")));
            obj.insert("exact".into(), json!(c.to_string()));
        }
    }
    obj.insert("a".into(), json!(k.a.to_string()));
    obj.insert("b".into(), json!(k.b.to_string()));
    obj.insert("c".into(), json!(k.c));
    Value::Object(obj)
}

pub fn render_monomial(c: &Cyclo, k: &MonoKey) -> String {
    let mut s = format!("({c})");
    if !k.a.is_zero() {
        s.push_str(&format!("·x^({})", k.a));
    }
    if !k.b.is_zero() {
        s.push_str(&format!("·f^({})", k.b));
    }
    if k.c > 0 {
        s.push_str(&format!("·fp^{}", k.c));
    }
    s
}

fn parse_monomial(field: &'static CycloField, s: &str) -> Result<(Cyclo, MonoKey)> {
    let err = || Error::Parse(format!("bad monomial `{s}`"));
    let mut parts = s.split('·');
    let head = parts.next().ok_or_else(err)?;
    let coeff = head.strip_prefix('(').and_then(|h| h.strip_suffix(')')).ok_or_else(err)?;
    let coeff = Cyclo::parse(field, coeff)?;
    let mut key = MonoKey::ONE;
    let paren = |v: &str| -> Result<Exponent> {
        v.strip_prefix('(').and_then(|v| v.strip_suffix(')')).ok_or_else(err)?.parse()
    };
    for p in parts {
        if let Some(v) = p.strip_prefix("x^") {
            key.a = paren(v)?;
        } else if let Some(v) = p.strip_prefix("fp^") {
            key.c = v.parse().map_err(|_| err())?;
        } else if let Some(v) = p.strip_prefix("f^") {
            key.b = paren(v)?;
        } else {
            return Err(err());
        }
    }
    Ok((coeff, key))
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (k, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            f.write_str(&render_monomial(c, k))?;
        }
        Ok(())
    }
}

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FKind {
    /// `f(x) = 2 + sin x`.
    TwoPlusSin,
    /// `f = 1`; only monomials free of `f` and `f'` are meaningful.
    Unit,
}

/// Numeric model of the generator `f` together with its certified ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct FModel {
    pub kind: FKind,
    pub f_lo: f64,
    pub f_hi: f64,
    pub fp_bound: f64,
}

impl FModel {
    pub fn two_plus_sin(f_lo: f64, f_hi: f64, fp_bound: f64) -> Result<Self> {
        let m = FModel { kind: FKind::TwoPlusSin, f_lo, f_hi, fp_bound };
        m.validate()?;
        Ok(m)
    }

    pub fn unit() -> Self {
        FModel { kind: FKind::Unit, f_lo: 1.0, f_hi: 1.0, fp_bound: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.f_lo > 0.0 && self.f_lo <= self.f_hi && self.fp_bound >= 0.0) {
            return Err(Error::InvalidScenario(format!(
                "f range [{}, {}] with |f'| <= {} is not usable",
                self.f_lo, self.f_hi, self.fp_bound
            )));
        }
        // spot check the claimed ranges on one period
        for i in 0..=256 {
            let t = i as f64 * std::f64::consts::TAU / 256.0;
            let (f, fp) = self.values_f64(t);
            if f < self.f_lo || f > self.f_hi || fp.abs() > self.fp_bound {
                return Err(Error::InvalidScenario(format!("f leaves its stated range at t = {t}")));
            }
        }
        Ok(())
    }

    fn values_f64(&self, t: f64) -> (f64, f64) {
        match self.kind {
            FKind::TwoPlusSin => (2.0 + t.sin(), t.cos()),
            FKind::Unit => (1.0, 0.0),
        }
    }

    /// `(f(x), f'(x))` at the precision of `x`.
    pub fn values(&self, x: &Float) -> (Float, Float) {
        let prec = x.prec();
        match self.kind {
            FKind::TwoPlusSin => {
                let (s, c) = x.clone().sin_cos(Float::new(prec));
                (s + 2u32, c)
            }
            FKind::Unit => (Float::with_val(prec, 1), Float::new(prec)),
        }
    }

    /// Bound for `sup f^b` over the stated range.
    pub fn f_pow_bound(&self, b: Exponent) -> UpperBound {
        if b.is_zero() {
            return UpperBound::one();
        }
        let lo = Float::with_val_round(BOUND_PREC, self.f_lo, Round::Down).0;
        let hi = Float::with_val_round(BOUND_PREC, self.f_hi, Round::Up).0;
        UpperBound::pow(&lo, b).max(&UpperBound::pow(&hi, b))
    }
}

/// Cached powers of `x`, `f` and `f'` at one abscissa.
pub struct EvalPoint {
    pub prec: u32,
    pub x: Float,
    pub f: Float,
    pub fp: Float,
    ln_x: Float,
    ln_f: Float,
    zetas: Vec<HpComplex>,
}

impl EvalPoint {
    pub fn new(x: &Float, model: &FModel, field: &CycloField, prec: u32) -> Result<Self> {
        if !x.is_finite() || *x <= 0 {
            return Err(Error::NonPositiveAbscissa(x.to_f64()));
        }
        let guard = prec + 32;
        let xg = Float::with_val(guard, x);
        let (f, fp) = model.values(&xg);
        Ok(EvalPoint {
            prec,
            ln_x: xg.clone().ln(),
            ln_f: f.clone().ln(),
            x: xg,
            f,
            fp,
            zetas: field.zeta_powers(prec),
        })
    }

    /// A point without root-of-unity table, for callers that convert
    /// coefficients once up front.
    pub fn bare(x: &Float, model: &FModel, prec: u32) -> Result<Self> {
        if !x.is_finite() || *x <= 0 {
            return Err(Error::NonPositiveAbscissa(x.to_f64()));
        }
        let guard = prec + 32;
        let xg = Float::with_val(guard, x);
        let (f, fp) = model.values(&xg);
        Ok(EvalPoint { prec, ln_x: xg.clone().ln(), ln_f: f.clone().ln(), x: xg, f, fp, zetas: Vec::new() })
    }

    pub fn zetas(&self) -> &[HpComplex] {
        &self.zetas
    }

    fn real_pow(&self, base: &Float, ln: &Float, e: Exponent) -> Float {
        if e.is_zero() {
            return Float::with_val(base.prec(), 1);
        }
        if e.is_integer() && e.numer().abs() <= 64 {
            return base.clone().pow(e.numer() as i32);
        }
        let mut l = ln.clone();
        l *= e.numer();
        l /= e.denom();
        l.exp()
    }

    /// `x^a f^b f'^c` at this point.
    pub fn basis(&self, k: &MonoKey) -> Float {
        let mut v = self.real_pow(&self.x, &self.ln_x, k.a);
        if !k.b.is_zero() {
            v *= self.real_pow(&self.f, &self.ln_f, k.b);
        }
        if k.c > 0 {
            v *= self.fp.clone().pow(k.c);
        }
        Float::with_val(self.prec, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> &'static CycloField {
        CycloField::gaussian()
    }

    fn parse(s: &str) -> ScalarExpr {
        ScalarExpr::parse(field(), s).unwrap()
    }

    fn model() -> FModel {
        FModel::two_plus_sin(1.0, 3.0, 1.0).unwrap()
    }

    fn eval_f64(e: &ScalarExpr, x: f64) -> f64 {
        let pt = EvalPoint::new(&Float::with_val(128, x), &model(), field(), 128).unwrap();
        e.evaluate(&pt).re.to_f64()
    }

    #[test]
    fn derivative_of_fp_uses_rewrite() {
        assert_eq!(parse("(1)·fp^1").differentiate(), parse("(2) + (-1)·f^(1)"));
    }

    #[test]
    fn power_rule() {
        assert_eq!(parse("(1)·x^(-1)").differentiate(), parse("(-1)·x^(-2)"));
        assert!(ScalarExpr::zero().differentiate().is_zero());
    }

    #[test]
    fn product_derivative_at_half_pi() {
        let d = parse("(1)·x^(1)·f^(1)").differentiate();
        let v = eval_f64(&d, std::f64::consts::FRAC_PI_2);
        assert!((v - 3.0).abs() < 1e-14);
    }

    #[test]
    fn evaluation_examples() {
        let v = eval_f64(&parse("(1)·x^(-1)·f^(1)"), std::f64::consts::FRAC_PI_2);
        assert!((v - 1.909_859_317_102_744).abs() < 1e-14);
        assert_eq!(eval_f64(&ScalarExpr::zero(), 3.0), 0.0);
        assert_eq!(eval_f64(&parse("(1)·x^(-2)"), 40.0), 6.25e-4);
    }

    #[test]
    fn tail_bound_examples() {
        let forty = Float::with_val(BOUND_PREC, 40);
        let m = model();
        let b = parse("(1)·x^(-2)").tail_bound(&forty, &m).unwrap().to_f64();
        assert!((b - 6.25e-4).abs() < 1e-18);
        let b = parse("(1)·x^(-1)·f^(1)").tail_bound(&forty, &m).unwrap().to_f64();
        assert!(b >= 0.075 && b - 0.075 < 1e-16);
        let b = parse("(1)·x^(-1)·f^(-1/4)").tail_bound(&forty, &m).unwrap().to_f64();
        assert!(b >= 0.025 && b - 0.025 < 1e-16);
        assert!(matches!(parse("(1)·x^(1/2)").tail_bound(&forty, &m), Err(Error::GrowingTerm(_))));
    }

    #[test]
    fn split_examples() {
        let e = parse("(1)·x^(-2)·fp^1 + (1)·x^(-3)·f^(1)");
        let s = e.split_by_order();
        assert_eq!(s.len(), 2);
        assert_eq!(s[&Exponent::integer(2)], parse("(1)·x^(-2)·fp^1"));
        assert_eq!(s[&Exponent::integer(3)], parse("(1)·x^(-3)·f^(1)"));
        assert!(ScalarExpr::zero().split_by_order().is_empty());
    }

    #[test]
    fn render_round_trip_and_cancellation() {
        let e = parse("(-3/8)·x^(-2)·f^(-1/4)·fp^1 + (1/2-i)·x^(-1)");
        assert_eq!(parse(&e.to_string()), e);
        assert!(e.sub(&e).is_zero());
        assert_eq!(e.add(&e), e.scale(&Cyclo::integer(field(), 2)));
    }

    #[test]
    fn json_shape() {
        let e = parse("(-3/8)·x^(-2)·f^(-1/4)·fp^1");
        assert_eq!(e.to_json().to_string(), r#"[{"a":"-2","b":"-1/4","c":1,"im":"0","re":"-3/8"}]"#);
    }

    #[test]
    fn model_rejects_wrong_range() {
        assert!(FModel::two_plus_sin(1.5, 3.0, 1.0).is_err());
        assert!(FModel::two_plus_sin(1.0, 3.0, 0.5).is_err());
    }
}
