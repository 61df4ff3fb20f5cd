//! Non-commutative symbolic layer: graded matrix symbols, signed products of
//! them, and the stage templates that express each new perturbation block in
//! terms of the matrices of the previous stage.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::grading::SigmaLattice;

/// Symbol kinds. The declaration order is the canonical factor order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    /// `(I + P_m)^-1`
    A,
    E,
    /// `I + P_m`
    IplusP,
    P,
    /// A stage output `S_m`, used for display and expansion only.
    S,
    T,
    V,
    W,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::A => "A",
            Kind::E => "E",
            Kind::IplusP => "IplusP",
            Kind::P => "P",
            Kind::S => "S",
            Kind::T => "T",
            Kind::V => "V",
            Kind::W => "W",
        }
    }

    fn parse(s: &str) -> Option<Kind> {
        Some(match s {
            "A" => Kind::A,
            "E" => Kind::E,
            "IplusP" => Kind::IplusP,
            "P" => Kind::P,
            "S" => Kind::S,
            "T" => Kind::T,
            "V" => Kind::V,
            "W" => Kind::W,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NCSymbol {
    pub kind: Kind,
    /// Block index for `V` and `W`.
    pub j: Option<usize>,
    pub m: usize,
    pub grade: Exponent,
}

impl NCSymbol {
    pub fn p(lat: &SigmaLattice, m: usize) -> Self {
        NCSymbol { kind: Kind::P, j: None, m, grade: lat.grade_floor(m) }
    }

    pub fn v(lat: &SigmaLattice, j: usize, m: usize) -> Self {
        NCSymbol { kind: Kind::V, j: Some(j), m, grade: lat.grade_floor(m + j - 1) }
    }

    pub fn w(lat: &SigmaLattice, j: usize, m: usize) -> Self {
        NCSymbol { kind: Kind::W, j: Some(j), m, grade: lat.grade_floor(m + j) }
    }

    pub fn t(lat: &SigmaLattice, m: usize) -> Self {
        NCSymbol { kind: Kind::T, j: None, m, grade: lat.grade_floor(m + 1) }
    }

    pub fn s(lat: &SigmaLattice, m: usize) -> Self {
        NCSymbol { kind: Kind::S, j: None, m, grade: lat.grade_floor(m) }
    }

    pub fn a(m: usize) -> Self {
        NCSymbol { kind: Kind::A, j: None, m, grade: Exponent::ZERO }
    }

    pub fn iplusp(m: usize) -> Self {
        NCSymbol { kind: Kind::IplusP, j: None, m, grade: Exponent::ZERO }
    }

    /// Accumulated error block; its content is at least of order `K`.
    pub fn e(lat: &SigmaLattice, m: usize) -> Self {
        NCSymbol { kind: Kind::E, j: None, m, grade: lat.k }
    }

    /// Rebuilds a symbol from `(kind, j, m)`, assigning the lattice grade.
    pub fn from_parts(lat: &SigmaLattice, kind: Kind, j: Option<usize>, m: usize) -> Result<Self> {
        let bad = || Error::UnknownSymbol(format!("{}[{:?},{m}]", kind.name(), j));
        if m == 0 {
            return Err(bad());
        }
        Ok(match (kind, j) {
            (Kind::V, Some(j)) if j >= 1 => NCSymbol::v(lat, j, m),
            (Kind::W, Some(j)) if j >= 1 => NCSymbol::w(lat, j, m),
            (Kind::V | Kind::W, _) => return Err(bad()),
            (_, Some(_)) => return Err(bad()),
            (Kind::P, None) => NCSymbol::p(lat, m),
            (Kind::T, None) => NCSymbol::t(lat, m),
            (Kind::S, None) => NCSymbol::s(lat, m),
            (Kind::A, None) => NCSymbol::a(m),
            (Kind::IplusP, None) => NCSymbol::iplusp(m),
            (Kind::E, None) => NCSymbol::e(lat, m),
        })
    }

    pub fn to_json(&self) -> Value {
        match self.j {
            Some(j) => json!({"kind": self.kind.name(), "j": j, "m": self.m}),
            None => json!({"kind": self.kind.name(), "m": self.m}),
        }
    }
}

impl fmt::Display for NCSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.j) {
            (Kind::IplusP, _) => write!(f, "(I+P[{}])", self.m),
            (k, Some(j)) => write!(f, "{}[{j},{}]", k.name(), self.m),
            (k, None) => write!(f, "{}[{}]", k.name(), self.m),
        }
    }
}

/// An ordered product of symbols.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NCTerm {
    factors: Vec<NCSymbol>,
}

impl NCTerm {
    pub fn new(factors: Vec<NCSymbol>) -> Self {
        assert!(!factors.is_empty(), "empty product");
        NCTerm { factors }
    }

    pub fn factors(&self) -> &[NCSymbol] {
        &self.factors
    }

    pub fn grade(&self) -> Exponent {
        self.factors.iter().map(|s| s.grade).sum()
    }

    pub fn contains(&self, kind: Kind) -> bool {
        self.factors.iter().any(|s| s.kind == kind)
    }

    fn times(&self, rhs: &NCTerm) -> NCTerm {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&rhs.factors);
        NCTerm { factors }
    }
}

impl Ord for NCTerm {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.grade()
            .cmp(&other.grade())
            .then_with(|| other.factors.len().cmp(&self.factors.len()))
            .then_with(|| self.factors.cmp(&other.factors))
    }
}

impl PartialOrd for NCTerm {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NCTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str("·")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// A signed multiset of terms, kept in canonical order with cancellation.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct NCExpr {
    terms: BTreeMap<NCTerm, i64>,
}

impl NCExpr {
    pub fn zero() -> Self {
        NCExpr::default()
    }

    pub fn symbol(s: NCSymbol) -> Self {
        Self::term(1, vec![s])
    }

    pub fn term(coeff: i64, factors: Vec<NCSymbol>) -> Self {
        let mut e = NCExpr::zero();
        e.add_term(NCTerm::new(factors), coeff);
        e
    }

    pub fn add_term(&mut self, t: NCTerm, coeff: i64) {
        if coeff == 0 {
            return;
        }
        let slot = self.terms.entry(t.clone()).or_insert(0);
        *slot += coeff;
        if *slot == 0 {
            self.terms.remove(&t);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&NCTerm, i64)> {
        self.terms.iter().map(|(t, c)| (t, *c))
    }

    pub fn add(&self, rhs: &NCExpr) -> NCExpr {
        let mut out = self.clone();
        for (t, c) in &rhs.terms {
            out.add_term(t.clone(), *c);
        }
        out
    }

    pub fn neg(&self) -> NCExpr {
        self.scale(-1)
    }

    pub fn sub(&self, rhs: &NCExpr) -> NCExpr {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, k: i64) -> NCExpr {
        if k == 0 {
            return NCExpr::zero();
        }
        NCExpr { terms: self.terms.iter().map(|(t, c)| (t.clone(), c * k)).collect() }
    }

    pub fn mul(&self, rhs: &NCExpr) -> NCExpr {
        let mut out = NCExpr::zero();
        for (t1, c1) in &self.terms {
            for (t2, c2) in &rhs.terms {
                out.add_term(t1.times(t2), c1 * c2);
            }
        }
        out
    }

    /// Replaces every symbol that has a definition, repeatedly, until no
    /// defined symbol remains.
    pub fn expand_with(&self, defs: &BTreeMap<NCSymbol, NCExpr>) -> Result<NCExpr> {
        self.expand_depth(defs, defs.len() + 1)
    }

    fn expand_depth(&self, defs: &BTreeMap<NCSymbol, NCExpr>, depth: usize) -> Result<NCExpr> {
        let mut out = NCExpr::zero();
        let mut changed = false;
        for (t, c) in &self.terms {
            let mut acc: Option<NCExpr> = None;
            for s in &t.factors {
                let piece = match defs.get(s) {
                    Some(d) => {
                        changed = true;
                        d.clone()
                    }
                    None => NCExpr::symbol(*s),
                };
                acc = Some(match acc {
                    None => piece,
                    Some(a) => a.mul(&piece),
                });
            }
            out = out.add(&acc.expect("terms are nonempty").scale(*c));
        }
        if !changed {
            return Ok(out);
        }
        if depth == 0 {
            return Err(Error::UnknownSymbol("cyclic definitions in expansion".into()));
        }
        out.expand_depth(defs, depth - 1)
    }

    pub fn render(&self) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (i, (t, c)) in self.terms.iter().enumerate() {
            let neg = *c < 0;
            match (i, neg) {
                (0, false) => {}
                (0, true) => s.push('−'),
                (_, false) => s.push_str(" + "),
                (_, true) => s.push_str(" − "),
            }
            if c.abs() != 1 {
                s.push_str(&format!("{}·", c.abs()));
            }
            s.push_str(&t.to_string());
        }
        s
    }

    /// One entry per unit of multiplicity: `{sign, factors}`.
    pub fn to_json(&self) -> Value {
        let mut out = Vec::new();
        for (t, c) in &self.terms {
            let factors: Vec<Value> = t.factors.iter().map(NCSymbol::to_json).collect();
            for _ in 0..c.abs() {
                out.push(json!({"sign": c.signum(), "factors": factors}));
            }
        }
        Value::Array(out)
    }

    pub fn from_json(lat: &SigmaLattice, v: &Value) -> Result<NCExpr> {
        let bad = |what: &str| Error::Parse(format!("NC expression JSON: {what}"));
        let mut out = NCExpr::zero();
        for item in v.as_array().ok_or_else(|| bad("expected array"))? {
            let sign = item["sign"].as_i64().filter(|s| s.abs() == 1).ok_or_else(|| bad("sign"))?;
            let mut factors = Vec::new();
            for f in item["factors"].as_array().ok_or_else(|| bad("factors"))? {
                let kind = f["kind"].as_str().and_then(Kind::parse).ok_or_else(|| bad("kind"))?;
                let j = f.get("j").and_then(Value::as_u64).map(|j| j as usize);
                let m = f["m"].as_u64().ok_or_else(|| bad("m"))? as usize;
                factors.push(NCSymbol::from_parts(lat, kind, j, m)?);
            }
            if factors.is_empty() {
                return Err(bad("empty product"));
            }
            out.add_term(NCTerm::new(factors), sign);
        }
        Ok(out)
    }

}

impl fmt::Display for NCExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl fmt::Debug for NCExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Templates produced at stage `m` for the system of stage `m + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StageTemplate {
    pub m: usize,
    /// `k -> V_{k,m+1}`; every term has grade `sigma_{m+k}`.
    pub buckets: BTreeMap<usize, NCExpr>,
    /// `E_{m+1}`; every term has grade at least `K`.
    pub e_template: NCExpr,
}

impl StageTemplate {
    /// `S_{m+1}`, the first bucket.
    pub fn s_template(&self) -> NCExpr {
        self.buckets.get(&1).cloned().unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StagePlan {
    pub lattice: SigmaLattice,
    /// Number of `W` blocks per stage.
    pub l: usize,
    /// Indices `j` of the nonzero blocks `V_{j1}` of the initial perturbation.
    pub input_blocks: Vec<usize>,
    /// Entry `i` holds the templates of stage `m = i + 1`.
    pub stages: Vec<StageTemplate>,
}

impl StagePlan {
    pub fn stage(&self, m: usize) -> &StageTemplate {
        &self.stages[m - 1]
    }

    /// Symbols `V_{j,m}` that the templates of stage `m` refer to.
    pub fn v_symbols(&self, m: usize) -> Vec<NCSymbol> {
        let lat = &self.lattice;
        if m == 1 {
            return self.input_blocks.iter().map(|&j| NCSymbol::v(lat, j, 1)).collect();
        }
        (1..=lat.m - m).map(|j| NCSymbol::v(lat, j, m)).collect()
    }

    /// `E_M`.
    pub fn final_error(&self) -> &NCExpr {
        &self.stages.last().expect("at least one stage").e_template
    }

    /// Definitions `S_{m+1} -> bucket 1` and `V_{k,m+1} -> bucket k` (`k >= 2`)
    /// for use with [`NCExpr::expand_with`].
    pub fn definitions(&self) -> BTreeMap<NCSymbol, NCExpr> {
        let lat = &self.lattice;
        let mut defs = BTreeMap::new();
        for st in &self.stages {
            defs.insert(NCSymbol::s(lat, st.m + 1), st.s_template());
            for (&k, e) in &st.buckets {
                if k >= 2 {
                    defs.insert(NCSymbol::v(lat, k, st.m + 1), e.clone());
                }
            }
        }
        defs
    }

    pub fn to_json(&self) -> Value {
        let stages: Vec<Value> = self
            .stages
            .iter()
            .map(|st| {
                let buckets: serde_json::Map<String, Value> =
                    st.buckets.iter().map(|(k, e)| (k.to_string(), e.to_json())).collect();
                json!({
                    "m": st.m,
                    "S": st.s_template().to_json(),
                    "S_text": st.s_template().render(),
                    "V": buckets,
                    "E": st.e_template.to_json(),
                })
            })
            .collect();
        json!({"lattice": self.lattice, "l": self.l, "stages": stages})
    }
}

/// The stage templates for a lattice with `l` derivative blocks per stage.
///
/// The initial perturbation is taken to consist of the blocks whose orders
/// are the generating exponents `theta_j`.
pub fn build_templates(lattice: &SigmaLattice, l: usize) -> Result<StagePlan> {
    if l == 0 {
        return Err(Error::InvalidLattice("the number of W blocks l must be at least 1".into()));
    }
    let lat = lattice;
    let k_target = lat.k;
    let input_blocks: Vec<usize> = (1..lat.m)
        .filter(|&j| lat.thetas.contains(&lat.sigma(j).unwrap()))
        .collect();
    let mut plan = StagePlan { lattice: lat.clone(), l, input_blocks, stages: Vec::new() };

    for m in 1..lat.m {
        let p = NCSymbol::p(lat, m);
        let sigma_m = p.grade;
        let pe = NCExpr::symbol(p);

        let mut units: Vec<NCExpr> = Vec::new();
        for j in 1..=l {
            units.push(NCExpr::term(-1, vec![NCSymbol::w(lat, j, m)]));
        }
        units.push(NCExpr::symbol(NCSymbol::t(lat, m)));
        let vs = plan.v_symbols(m);
        for v in &vs {
            if v.j == Some(1) {
                units.push(NCExpr::term(1, vec![*v, p]));
            } else {
                units.push(NCExpr::symbol(*v));
                units.push(NCExpr::term(1, vec![*v, p]));
            }
        }

        let mut buckets: BTreeMap<usize, NCExpr> = BTreeMap::new();
        let mut e_next = NCExpr::term(1, vec![NCSymbol::a(m), NCSymbol::e(lat, m), NCSymbol::iplusp(m)]);
        for u in units {
            let g = u.terms().next().unwrap().0.grade();
            let mut nu = 0i64;
            while sigma_m * (nu + 1) + g < k_target {
                nu += 1;
            }
            let mut pr_u = u.clone();
            for r in 0..=nu {
                let grade = sigma_m * r + g;
                let signed = pr_u.scale(if r % 2 == 0 { 1 } else { -1 });
                if grade < k_target {
                    let idx = lat.order_index(grade).ok_or(Error::OrderOutsideLattice(grade))?;
                    let k = idx.checked_sub(m).filter(|&k| k >= 1).ok_or_else(|| {
                        Error::GradingViolation(format!("term of grade {grade} lands below stage {}", m + 1))
                    })?;
                    let slot = buckets.entry(k).or_default();
                    *slot = slot.add(&signed);
                } else {
                    e_next = e_next.add(&signed);
                }
                pr_u = pe.mul(&pr_u);
            }
            // Neumann remainder -(-1)^nu A P^(nu+1) U
            let sign = if nu % 2 == 0 { -1 } else { 1 };
            e_next = e_next.add(&NCExpr::symbol(NCSymbol::a(m)).mul(&pr_u).scale(sign));
        }
        buckets.retain(|_, e| !e.is_empty());

        for (&k, e) in &buckets {
            let want = lat.sigma(m + k).unwrap();
            assert!(e.terms().all(|(t, _)| t.grade() == want), "bucket {k} of stage {m} is mixed");
        }
        assert!(
            e_next.terms().all(|(t, _)| t.grade() >= k_target),
            "error template of stage {m} has a term below K"
        );
        plan.stages.push(StageTemplate { m, buckets, e_template: e_next });
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(thetas: &[&str], k: &str) -> SigmaLattice {
        let th: Vec<Exponent> = thetas.iter().map(|t| t.parse().unwrap()).collect();
        SigmaLattice::build(&th, k.parse().unwrap()).unwrap()
    }

    #[test]
    fn distributivity_and_cancellation() {
        let lat = lattice(&["1", "2"], "4");
        let p1 = NCExpr::symbol(NCSymbol::p(&lat, 1));
        let v = NCExpr::symbol(NCSymbol::v(&lat, 1, 1));
        let t = NCExpr::symbol(NCSymbol::t(&lat, 1));
        let prod = p1.mul(&v.add(&t));
        assert_eq!(prod.render(), "P[1]·V[1,1] + P[1]·T[1]");
        assert!(prod.sub(&prod).is_empty());
        let pv21 = NCExpr::term(1, vec![NCSymbol::p(&lat, 1), NCSymbol::v(&lat, 2, 1)]);
        assert_eq!(pv21.terms().next().unwrap().0.grade(), Exponent::integer(3));
    }

    #[test]
    fn second_stage_template() {
        let lat = lattice(&["1", "2"], "4");
        let plan = build_templates(&lat, 2).unwrap();
        assert_eq!(plan.input_blocks, vec![1, 2]);
        assert_eq!(plan.stage(1).s_template().render(), "V[1,1]·P[1] + T[1] + V[2,1] − W[1,1]");
        assert_eq!(plan.stage(2).s_template().render(), "T[2] + V[2,2] − W[1,2]");
        assert!(plan.stage(3).s_template().is_empty());
    }

    #[test]
    fn neumann_depth_for_grade_two() {
        // sigma_1 = 1, grade(U) = 2, K = 4: P U lands at grade 3, P^2 U in E
        let lat = lattice(&["1", "2"], "4");
        let plan = build_templates(&lat, 2).unwrap();
        let v21 = NCSymbol::v(&lat, 2, 1);
        let p1 = NCSymbol::p(&lat, 1);
        let b1 = &plan.stage(1).buckets[&1];
        assert!(b1.terms().any(|(t, c)| t.factors() == [v21] && c == 1));
        assert!(plan.stage(1).buckets[&2].terms().any(|(t, c)| t.factors() == [p1, v21] && c == -1));
        let rem = [NCSymbol::a(1), p1, p1, v21];
        assert!(plan.stage(1).e_template.terms().any(|(t, c)| t.factors() == rem && c == 1));
    }

    #[test]
    fn expansion() {
        let lat = lattice(&["1", "2"], "4");
        let plan = build_templates(&lat, 2).unwrap();
        let defs = plan.definitions();
        let p1 = NCSymbol::p(&lat, 1);
        let e = NCExpr::term(-1, vec![p1, NCSymbol::s(&lat, 2)]).expand_with(&defs).unwrap();
        assert_eq!(e.render(), "−P[1]·V[1,1]·P[1] − P[1]·T[1] − P[1]·V[2,1] + P[1]·W[1,1]");
        let s2 = NCExpr::symbol(NCSymbol::v(&lat, 1, 1));
        assert_eq!(s2.expand_with(&BTreeMap::new()).unwrap(), s2);
    }

    #[test]
    fn json_round_trip() {
        let lat = lattice(&["1", "2"], "4");
        let plan = build_templates(&lat, 2).unwrap();
        let e = &plan.stage(1).e_template;
        assert_eq!(&NCExpr::from_json(&lat, &e.to_json()).unwrap(), e);
    }

    #[test]
    fn single_exponent_has_one_input_block() {
        let lat = lattice(&["2"], "8");
        let plan = build_templates(&lat, 1).unwrap();
        assert_eq!(plan.input_blocks, vec![1]);
        assert_eq!(plan.stage(1).s_template().render(), "V[1,1]·P[1] + T[1] − W[1,1]");
    }
}
