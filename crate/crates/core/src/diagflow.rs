//! The stage recursion on concrete matrices.
//!
//! Stage `m` holds `D_m = D + Delta_m`, the blocks `V_{jm}`, the transformation
//! `P_m` solving `P D - D P = V_{1m}`, the commutator `T_m` and the derivative
//! blocks `W_{jm}`. The next stage is obtained by substituting these matrices
//! into the templates of [`build_templates`] and re-binning every monomial by
//! its exact order.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::cyclo::Cyclo;
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::grading::SigmaLattice;
use crate::matrix::FunMatrix;
use crate::ncalg::{build_templates, Kind, NCExpr, NCSymbol, StagePlan};
use crate::scalar::{MonoKey, ScalarExpr};
use crate::scenario::{Scenario, ScenarioKind};

#[derive(Clone, Debug)]
pub struct StageState {
    pub m: usize,
    /// `D_m = D + Delta_m`.
    pub d: FunMatrix,
    pub delta: FunMatrix,
    /// `j -> V_{jm}` for every block the templates refer to.
    pub v: BTreeMap<usize, FunMatrix>,
    pub p: FunMatrix,
    pub t: FunMatrix,
    /// `j -> W_{jm}`, `1 <= j <= l`.
    pub w: BTreeMap<usize, FunMatrix>,
    /// Part of `E_m` created when regrading the previous stage's buckets:
    /// monomials whose exact order reached `K`.
    pub spill: FunMatrix,
}

impl StageState {
    /// Concrete matrix of a stage symbol, if it belongs to this stage.
    pub fn matrix(&self, sym: &NCSymbol) -> Option<&FunMatrix> {
        if sym.m != self.m {
            return None;
        }
        match sym.kind {
            Kind::P => Some(&self.p),
            Kind::T => Some(&self.t),
            Kind::V => self.v.get(&sym.j?),
            Kind::W => self.w.get(&sym.j?),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Value {
        let blocks = |m: &BTreeMap<usize, FunMatrix>| -> serde_json::Map<String, Value> {
            m.iter().map(|(j, x)| (j.to_string(), x.to_json())).collect()
        };
        json!({
            "m": self.m,
            "D": self.d.to_json(),
            "Delta": self.delta.to_json(),
            "V": blocks(&self.v),
            "P": self.p.to_json(),
            "T": self.t.to_json(),
            "W": blocks(&self.w),
            "spill": self.spill.to_json(),
        })
    }
}

/// `P` with `p_ij = v_ij / (d_j - d_i)` and zero diagonal.
pub fn solve_commutator(v1: &FunMatrix, d: &[Cyclo]) -> Result<FunMatrix> {
    let n = v1.dim();
    assert_eq!(d.len(), n, "dimension mismatch");
    for i in 0..n {
        if !v1.get(i, i).is_zero() {
            return Err(Error::GradingViolation(format!("dg V_1 has a nonzero entry at {}", i + 1)));
        }
    }
    let mut inv = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                inv[i][j] = Some((&d[j] - &d[i]).inv().ok_or(Error::CoincidentDiagonal(i + 1, j + 1))?);
            }
        }
    }
    Ok(FunMatrix::from_fn(n, |i, j| match &inv[i][j] {
        Some(c) => v1.get(i, j).scale(c),
        None => ScalarExpr::zero(),
    }))
}

/// `T = Delta P - P Delta`.
pub fn compute_t(delta: &FunMatrix, p: &FunMatrix) -> FunMatrix {
    delta.mul(p).sub(&p.mul(delta))
}

/// Splits `rho^-1 P'` into its order classes; the `j`-th class in increasing
/// order becomes `W_j`. Checks the class count against `l` and each order
/// against the floor `sigma_{m+j}`.
pub fn compute_w(
    p: &FunMatrix,
    rho_inverse: &ScalarExpr,
    lattice: &SigmaLattice,
    m: usize,
    l: usize,
) -> Result<BTreeMap<usize, FunMatrix>> {
    let full = p.differentiate().times_scalar(rho_inverse);
    let classes = full.split_by_order();
    if classes.len() > l {
        let orders: Vec<String> = classes.keys().map(|o| o.to_string()).collect();
        return Err(Error::HypothesisViolated(format!(
            "rho^-1 P'_{m} has {} order classes ({}) but l = {l}",
            classes.len(),
            orders.join(", ")
        )));
    }
    let mut out = BTreeMap::new();
    for (idx, (order, part)) in classes.into_iter().enumerate() {
        let j = idx + 1;
        let floor = lattice.grade_floor(m + j);
        if order < floor {
            return Err(Error::HypothesisViolated(format!(
                "W[{j},{m}] has order {order}, below its floor {floor}"
            )));
        }
        if order < lattice.k && lattice.order_index(order).is_none() {
            return Err(Error::OrderOutsideLattice(order));
        }
        out.insert(j, part);
    }
    Ok(out)
}

fn check_floor(name: &str, m: &FunMatrix, floor: Exponent) -> Result<()> {
    match m.min_order() {
        Some(o) if o < floor => Err(Error::GradingViolation(format!("{name} has order {o}, below {floor}"))),
        _ => Ok(()),
    }
}

fn scalar(s: &Scenario, coeff: (i64, i64), a: Exponent, b: Exponent, c: u32) -> ScalarExpr {
    let q = Cyclo::from_rational(s.field(), rug::Rational::from(coeff));
    ScalarExpr::monomial(q, MonoKey::new(a, b, c))
}

/// `D_1`, `Delta_1` and the input blocks `V_{j1}` of a concrete scenario.
fn initial_blocks(s: &Scenario) -> Result<(FunMatrix, BTreeMap<Exponent, FunMatrix>)> {
    let c = s.c.as_ref().expect("concrete scenario");
    let n = s.n;
    let cdg: Vec<Vec<Cyclo>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { c[i][i].clone() } else { Cyclo::zero(s.field()) }).collect())
        .collect();
    let coff: Vec<Vec<Cyclo>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Cyclo::zero(s.field()) } else { c[i][j].clone() }).collect())
        .collect();
    let mut blocks = BTreeMap::new();
    let delta = match s.kind {
        ScenarioKind::Power => {
            let theta = Exponent::ONE + s.gamma;
            let xs = scalar(s, (1, 1), -theta, Exponent::ZERO, 0);
            blocks.insert(theta, FunMatrix::scalar_times_constant(&xs, &coff));
            FunMatrix::scalar_times_constant(&xs, &cdg)
        }
        ScenarioKind::Periodic => {
            let nn = n as i64;
            let alpha = s.alpha.unwrap();
            let g = s.gamma;
            // p = x^(-alpha/n) (f^(-1/n))' = -(1/n) x^(-alpha/n) f^(-1-1/n) f'
            let fpow = -(Exponent::ONE + Exponent::frac(1, nn));
            let p = scalar(s, (-1, nn), -g, fpow, 1);
            let d1 = p.scale(&Cyclo::from_rational(s.field(), rug::Rational::from((nn - 1, 2))));
            let v11 = p.scale(&Cyclo::integer(s.field(), -nn));
            blocks.insert(s.lattice.thetas[0], FunMatrix::scalar_times_constant(&v11, &coff));
            let v21 = scalar(s, (alpha.numer(), alpha.denom()), -(Exponent::ONE + g), Exponent::frac(-1, nn), 0);
            blocks.insert(s.lattice.thetas[1], FunMatrix::scalar_times_constant(&v21, c));
            FunMatrix::diagonal(vec![d1; n])
        }
        ScenarioKind::Symbolic => unreachable!(),
    };
    Ok((delta, blocks))
}

/// Stage-1 state of a concrete scenario.
pub fn init_scenario(s: &Scenario, plan: &StagePlan) -> Result<StageState> {
    s.require_concrete()?;
    let lat = &s.lattice;
    let (delta, blocks) = initial_blocks(s)?;
    let mut v = BTreeMap::new();
    for sym in plan.v_symbols(1) {
        v.insert(sym.j.unwrap(), FunMatrix::zeros(s.n));
    }
    for (order, block) in blocks {
        let j = lat.order_index(order).filter(|j| v.contains_key(j)).ok_or_else(|| {
            Error::InvalidScenario(format!("input block of order {order} is not one of the lattice inputs"))
        })?;
        v.insert(j, block);
    }
    if !v[&1].dg().is_zero() {
        return Err(Error::GradingViolation("dg V[1,1] is not zero".into()));
    }
    let d = s.d_matrix().add(&delta);
    finish_state(s, 1, d, delta, v, FunMatrix::zeros(s.n))
}

fn finish_state(
    s: &Scenario,
    m: usize,
    d: FunMatrix,
    delta: FunMatrix,
    v: BTreeMap<usize, FunMatrix>,
    spill: FunMatrix,
) -> Result<StageState> {
    let lat = &s.lattice;
    for (&j, block) in &v {
        check_floor(&format!("V[{j},{m}]"), block, lat.grade_floor(m + j - 1))?;
    }
    let p = solve_commutator(&v[&1], &s.roots_of_unity())?;
    let t = compute_t(&delta, &p);
    check_floor(&format!("T[{m}]"), &t, lat.grade_floor(m + 1))?;
    let w = compute_w(&p, &s.rho_inverse(), lat, m, s.l)?;
    Ok(StageState { m, d, delta, v, p, t, w, spill })
}

/// Concrete value of a template built from stage-`m` symbols.
pub fn substitute(expr: &NCExpr, state: &StageState) -> Result<FunMatrix> {
    let n = state.p.dim();
    let mut acc = FunMatrix::zeros(n);
    for (term, coeff) in expr.terms() {
        let mut prod: Option<FunMatrix> = None;
        for sym in term.factors() {
            // fewer order classes than l leave some W blocks empty
            if sym.kind == Kind::W && sym.m == state.m && state.matrix(sym).is_none() {
                prod = Some(FunMatrix::zeros(n));
                break;
            }
            let mat = state.matrix(sym).ok_or_else(|| Error::UnknownSymbol(sym.to_string()))?;
            prod = Some(match prod {
                None => mat.clone(),
                Some(p) => p.mul(mat),
            });
            if prod.as_ref().unwrap().is_zero() {
                break;
            }
        }
        let prod = prod.unwrap();
        if prod.is_zero() {
            continue;
        }
        let field = state.p.entries().iter().chain(prod.entries()).find_map(|e| e.terms().next().map(|(_, c)| c.field()));
        let k = Cyclo::integer(field.expect("nonzero product"), coeff);
        acc = acc.add(&FunMatrix::from_fn(n, |i, j| prod.get(i, j).scale(&k)));
    }
    Ok(acc)
}

/// Stage `m + 1` from stage `m`.
pub fn advance_stage(s: &Scenario, state: &StageState, plan: &StagePlan) -> Result<StageState> {
    let lat = &s.lattice;
    let m = state.m;
    let tpl = plan.stage(m);
    let n = s.n;

    let mut regraded: BTreeMap<usize, FunMatrix> = BTreeMap::new();
    let mut spill = FunMatrix::zeros(n);
    for (&k, expr) in &tpl.buckets {
        let concrete = substitute(expr, state)?;
        check_floor(&format!("bucket V[{k},{}]", m + 1), &concrete, lat.sigma(m + k).unwrap())?;
        for (order, part) in concrete.split_by_order() {
            if order >= lat.k {
                spill = spill.add(&part);
                continue;
            }
            let idx = lat.order_index(order).ok_or(Error::OrderOutsideLattice(order))?;
            let kk = idx - m;
            let slot = regraded.entry(kk).or_insert_with(|| FunMatrix::zeros(n));
            *slot = slot.add(&part);
        }
    }

    let s_next = regraded.remove(&1).unwrap_or_else(|| FunMatrix::zeros(n));
    let dg_s = s_next.dg();
    let delta = state.delta.add(&dg_s);
    let d = state.d.add(&dg_s);
    let mut v = BTreeMap::new();
    for sym in plan.v_symbols(m + 1) {
        v.insert(sym.j.unwrap(), FunMatrix::zeros(n));
    }
    v.insert(1, s_next.off_diagonal());
    for (k, block) in regraded {
        match v.get_mut(&k) {
            Some(slot) => *slot = block,
            None => {
                return Err(Error::GradingViolation(format!(
                    "stage {} received a block V[{k},{}] that no template carries",
                    m + 1,
                    m + 1
                )))
            }
        }
    }
    finish_state(s, m + 1, d, delta, v, spill)
}

/// Everything the later algorithms need: templates, concrete stages
/// `1..=M-1`, and the final diagonal `D_M` with its spill into `E_M`.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub scenario: Scenario,
    pub plan: StagePlan,
    pub states: Vec<StageState>,
    /// `D_M`.
    pub d_final: FunMatrix,
    /// Concrete part of `E_M` from regrading the last templates.
    pub final_spill: FunMatrix,
}

impl Pipeline {
    pub fn state(&self, m: usize) -> &StageState {
        &self.states[m - 1]
    }

    /// Spill part of `E_m` for `2 <= m <= M`; zero for `m = 1`.
    pub fn spill(&self, m: usize) -> &FunMatrix {
        if m == self.scenario.lattice.m {
            &self.final_spill
        } else {
            &self.states[m - 1].spill
        }
    }

    /// Diagonal entries of `D_M`.
    pub fn final_diagonal(&self) -> Vec<ScalarExpr> {
        (0..self.scenario.n).map(|i| self.d_final.get(i, i).clone()).collect()
    }
}

pub fn run_pipeline(s: &Scenario) -> Result<Pipeline> {
    s.require_concrete()?;
    let plan = build_templates(&s.lattice, s.l)?;
    let mut states = vec![init_scenario(s, &plan)?];
    let big_m = s.lattice.m;
    for _ in 2..big_m {
        let next = advance_stage(s, states.last().unwrap(), &plan)?;
        states.push(next);
    }
    // the last templates put everything into E_M; regrade for D_M and spill
    let last = states.last().unwrap();
    let tpl = plan.stage(last.m);
    let mut final_spill = FunMatrix::zeros(s.n);
    for expr in tpl.buckets.values() {
        final_spill = final_spill.add(&substitute(expr, last)?);
    }
    if let Some(o) = final_spill.min_order() {
        if o < s.lattice.k {
            return Err(Error::GradingViolation(format!("final stage produced order {o} below K")));
        }
    }
    let d_final = last.d.clone();
    Ok(Pipeline { scenario: s.clone(), plan, states, d_final, final_spill })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cyclo::CycloField;
    use crate::scenario::Overrides;

    fn periodic() -> Scenario {
        Scenario::from_json_str(
            r#"{"name":"p","kind":"periodic","n":4,"alpha":4,"beta":1,"f":{"kind":"two_plus_sin"},
                "f_range":[1,3],"fp_bound":1,"X":40,"digits":30,"K":4}"#,
            &Overrides::default(),
        )
        .unwrap()
    }

    fn power(gamma: &str) -> Scenario {
        let text = format!(r#"{{"name":"q","kind":"power","n":4,"gamma":"{gamma}"}}"#);
        Scenario::from_json_str(&text, &Overrides::default()).unwrap()
    }

    #[test]
    fn commutator_small_example() {
        let f = CycloField::gaussian();
        let mut v = FunMatrix::zeros(2);
        v.set(0, 1, ScalarExpr::monomial(Cyclo::one(f), MonoKey::x_pow((-1).into())));
        let d = vec![Cyclo::one(f), Cyclo::imag_unit(f)];
        let p = solve_commutator(&v, &d).unwrap();
        let want = (&Cyclo::imag_unit(f) - &Cyclo::one(f)).inv().unwrap();
        assert_eq!(p.get(0, 1), &ScalarExpr::monomial(want, MonoKey::x_pow((-1).into())));
        assert!(solve_commutator(&FunMatrix::zeros(2), &d).unwrap().is_zero());
        assert!(matches!(solve_commutator(&v, &[Cyclo::one(f), Cyclo::one(f)]), Err(Error::CoincidentDiagonal(1, 2))));
    }

    #[test]
    fn commutator_of_diagonal_pieces() {
        let f = CycloField::gaussian();
        let one = ScalarExpr::constant(Cyclo::one(f));
        let xinv = ScalarExpr::monomial(Cyclo::one(f), MonoKey::x_pow((-1).into()));
        let delta = FunMatrix::diagonal(vec![xinv.clone(), ScalarExpr::zero()]);
        let mut p = FunMatrix::zeros(2);
        p.set(0, 1, one.clone());
        let t = compute_t(&delta, &p);
        assert_eq!(t.get(0, 1), &xinv);
        assert!(t.get(1, 0).is_zero() && t.get(0, 0).is_zero());
        let scalar_delta = FunMatrix::diagonal(vec![xinv.clone(), xinv]);
        assert!(compute_t(&scalar_delta, &p).is_zero());
    }

    #[test]
    fn periodic_first_stage() {
        let s = periodic();
        let plan = build_templates(&s.lattice, s.l).unwrap();
        let st = init_scenario(&s, &plan).unwrap();
        assert!(st.t.is_zero());
        assert!(st.v[&1].dg().is_zero());
        assert_eq!(st.v[&1].min_order(), Some(Exponent::integer(1)));
        assert_eq!(st.v[&2].min_order(), Some(Exponent::integer(2)));
        let orders: Vec<Exponent> = st.w.values().map(|w| w.min_order().unwrap()).collect();
        assert_eq!(orders, vec![Exponent::integer(2), Exponent::integer(3)]);
    }

    #[test]
    fn initial_split_reassembles_r() {
        // D_1 - D + V_11 + V_21 must equal R
        let s = periodic();
        let plan = build_templates(&s.lattice, s.l).unwrap();
        let st = init_scenario(&s, &plan).unwrap();
        let sum = st.delta.add(&st.v[&1]).add(&st.v[&2]);
        assert_eq!(sum, s.r_matrix().unwrap());
        let q = power("1/2");
        let plan = build_templates(&q.lattice, q.l).unwrap();
        let st = init_scenario(&q, &plan).unwrap();
        assert_eq!(st.delta.add(&st.v[&1]), q.r_matrix().unwrap());
    }

    #[test]
    fn power_stage_grading() {
        let s = power("1");
        let pipe = run_pipeline(&s).unwrap();
        assert_eq!(pipe.states.len(), 3);
        let v12 = &pipe.state(2).v[&1];
        assert!(v12.min_order().is_none_or(|o| o >= Exponent::integer(4)));
        for st in &pipe.states {
            assert_eq!(st.w.len(), 1);
        }
    }
}
