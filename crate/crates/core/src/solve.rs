//! Numerical layer: back-transformation, residual of the final system,
//! exponent quadrature, asymptotic solutions and an independent ODE oracle.

use std::fmt::Write as _;

use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;
use serde_json::{json, Value};

use crate::diagflow::Pipeline;
use crate::error::{Error, Result};
use crate::hp::{bits_for_digits, HpComplex, HpMatrix};
use crate::matrix::{CompiledMatrix, FunMatrix};
use crate::scalar::{EvalPoint, ScalarExpr};

/// Condition estimate of `A(x)` beyond which the residual is not trusted.
pub const MAX_CONDITION: f64 = 1e8;

const GL_ORDER: usize = 20;
const QUAD_MAX_DEPTH: u32 = 48;

/// Gauss-Legendre rule on `[-1, 1]`.
struct GaussLegendre {
    nodes: Vec<Float>,
    weights: Vec<Float>,
}

impl GaussLegendre {
    fn new(order: usize, prec: u32) -> Self {
        let wp = prec + 32;
        let pi = Float::with_val(wp, Constant::Pi);
        let mut nodes = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        for i in 1..=order {
            let guess = Float::with_val(wp, &pi * (i as f64 - 0.25)) / (order as f64 + 0.5);
            let mut t = guess.cos();
            let mut dp = Float::new(wp);
            for _ in 0..200 {
                let (p, d) = legendre(order, &t);
                let step = Float::with_val(wp, &p / &d);
                t -= &step;
                dp = d;
                if step.is_zero() || step.clone().abs().get_exp().unwrap_or(i32::MIN) < -(wp as i32) + 4 {
                    let (_, d) = legendre(order, &t);
                    dp = d;
                    break;
                }
            }
            let one_minus = Float::with_val(wp, 1) - Float::with_val(wp, t.square_ref());
            let w = Float::with_val(wp, 2) / (one_minus * dp.square());
            nodes.push(t);
            weights.push(w);
        }
        GaussLegendre { nodes, weights }
    }

    fn apply(
        &self,
        a: &Float,
        b: &Float,
        prec: u32,
        g: &dyn Fn(&Float) -> Result<HpComplex>,
    ) -> Result<HpComplex> {
        let wp = prec + 32;
        let half = Float::with_val(wp, b - a) / 2u32;
        let mid = Float::with_val(wp, a + b) / 2u32;
        let mut acc = HpComplex::zero(wp);
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            let x = Float::with_val(wp, &half * t) + &mid;
            acc = &acc + &g(&x)?.scale(w);
        }
        Ok(acc.scale(&half))
    }
}

/// `(P_n(t), P_n'(t))`.
fn legendre(n: usize, t: &Float) -> (Float, Float) {
    let wp = t.prec();
    let mut p0 = Float::with_val(wp, 1);
    let mut p1 = t.clone();
    for k in 2..=n {
        let a = Float::with_val(wp, t * &p1) * (2 * k - 1) as u32;
        let b = Float::with_val(wp, &p0 * (k - 1) as u32);
        let p2 = (a - b) / k as u32;
        p0 = p1;
        p1 = p2;
    }
    let num = Float::with_val(wp, t * &p1) - &p0;
    let den = Float::with_val(wp, t.square_ref()) - 1u32;
    let d = num * n as u32 / den;
    (p1, d)
}

/// Output of one asymptotic-solution evaluation.
#[derive(Clone, Debug)]
pub struct AsymSolution {
    pub k: usize,
    /// Lower limit of the exponent integral.
    pub x0: f64,
    pub x: f64,
    pub digits: u32,
    /// `A(x) e_k`.
    pub column: Vec<HpComplex>,
    /// `A(x) e_k exp(int_{x0}^{x} (d_k - omega_k) rho)`.
    pub scaled: Vec<HpComplex>,
    /// `int_{x0}^{x} d_k rho`.
    pub exponent: HpComplex,
}

impl AsymSolution {
    /// Full solution value `A(x) e_k exp(int_{x0}^{x} d_k rho)`.
    pub fn values(&self) -> Vec<HpComplex> {
        let e = self.exponent.exp();
        self.column.iter().map(|v| v * &e).collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "k": self.k,
            "x0": self.x0,
            "x": self.x,
            "digits": self.digits,
            "exponent": complex_json(&self.exponent, self.digits),
            "components": self.values().iter().map(|c| complex_json(c, self.digits)).collect::<Vec<_>>(),
            "scaled_components": self.scaled.iter().map(|c| complex_json(c, self.digits)).collect::<Vec<_>>(),
        })
    }
}

fn complex_json(c: &HpComplex, digits: u32) -> Value {
    json!({
        "re": c.re.to_string_radix(10, Some(digits as usize)),
        "im": c.im.to_string_radix(10, Some(digits as usize)),
    })
}

/// Result of integrating the shifted system `Y' = rho (D + R - omega I) Y`.
#[derive(Clone, Debug)]
pub struct OracleRun {
    pub x0: f64,
    pub x1: f64,
    pub tol: f64,
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub y: Vec<HpComplex>,
}

/// Asymptotic solution next to the oracle, both scaled by `exp(-omega_k int rho)`.
#[derive(Clone, Debug)]
pub struct OracleComparison {
    pub k: usize,
    pub x0: f64,
    pub x1: f64,
    pub asym: Vec<HpComplex>,
    pub oracle: OracleRun,
    pub rel_dev: Vec<f64>,
}

impl OracleComparison {
    pub fn max_rel_dev(&self) -> f64 {
        self.rel_dev.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_csv(&self, digits: usize) -> String {
        let mut out = String::from("component,asym_re,asym_im,oracle_re,oracle_im,rel_dev\n");
        for (i, (a, o)) in self.asym.iter().zip(&self.oracle.y).enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{:.6e}",
                i + 1,
                a.re.to_string_radix(10, Some(digits)),
                a.im.to_string_radix(10, Some(digits)),
                o.re.to_string_radix(10, Some(digits)),
                o.im.to_string_radix(10, Some(digits)),
                self.rel_dev[i]
            )
            .unwrap();
        }
        out
    }

    pub fn to_json(&self, digits: u32) -> Value {
        json!({
            "k": self.k,
            "x0": self.x0,
            "x1": self.x1,
            "tol": self.oracle.tol,
            "steps": self.oracle.steps,
            "rejected": self.oracle.rejected,
            "evaluations": self.oracle.evaluations,
            "asym": self.asym.iter().map(|c| complex_json(c, digits)).collect::<Vec<_>>(),
            "oracle": self.oracle.y.iter().map(|c| complex_json(c, digits)).collect::<Vec<_>>(),
            "rel_dev": self.rel_dev,
            "max_rel_dev": self.max_rel_dev(),
        })
    }
}

/// One row of the residual decay table.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualPoint {
    pub x: f64,
    pub max_abs: f64,
    pub condition: f64,
}

pub fn residual_csv(rows: &[ResidualPoint]) -> String {
    let mut out = String::from("x,residual_max,condition\n");
    for r in rows {
        writeln!(out, "{},{:.6e},{:.6e}", r.x, r.max_abs, r.condition).unwrap();
    }
    out
}

/// Least-squares slope of `log r` against `log x`.
pub fn fit_slope(rows: &[ResidualPoint]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.x.ln(), r.max_abs.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Compiled numeric view of a pipeline at a fixed working precision.
pub struct Solver<'a> {
    pipe: &'a Pipeline,
    pub digits: u32,
    pub prec: u32,
    p: Vec<CompiledMatrix>,
    dp: Vec<CompiledMatrix>,
    system: CompiledMatrix,
    d_final: CompiledMatrix,
    rho: CompiledMatrix,
    /// `(d_k - omega_k) rho` for each `k`.
    shifted_exponents: Vec<CompiledMatrix>,
    gl: GaussLegendre,
}

impl<'a> Solver<'a> {
    pub fn new(pipe: &'a Pipeline, digits: u32) -> Result<Self> {
        let s = &pipe.scenario;
        let prec = bits_for_digits(digits);
        let field = s.field();
        let p: Vec<CompiledMatrix> = pipe.states.iter().map(|st| CompiledMatrix::new(&st.p, field, prec)).collect();
        let dp = pipe.states.iter().map(|st| CompiledMatrix::new(&st.p.differentiate(), field, prec)).collect();
        let system = s.d_matrix().add(&s.r_matrix()?);
        let rho = s.rho();
        let omegas = s.roots_of_unity();
        let shifted_exponents = pipe
            .final_diagonal()
            .iter()
            .zip(&omegas)
            .map(|(d, w)| {
                let e = d.sub(&ScalarExpr::constant(w.clone())).mul(&rho);
                CompiledMatrix::new(&FunMatrix::diagonal(vec![e]), field, prec)
            })
            .collect();
        Ok(Solver {
            pipe,
            digits,
            prec,
            p,
            dp,
            system: CompiledMatrix::new(&system, field, prec),
            d_final: CompiledMatrix::new(&pipe.d_final, field, prec),
            rho: CompiledMatrix::new(&FunMatrix::diagonal(vec![rho]), field, prec),
            shifted_exponents,
            gl: GaussLegendre::new(GL_ORDER, prec),
        })
    }

    pub fn pipeline(&self) -> &Pipeline {
        self.pipe
    }

    fn point(&self, x: &Float) -> Result<EvalPoint> {
        EvalPoint::bare(x, &self.pipe.scenario.f, self.prec)
    }

    fn float(&self, x: f64) -> Float {
        Float::with_val(self.prec, x)
    }

    fn omega(&self, k: usize) -> HpComplex {
        let zetas = self.pipe.scenario.field().zeta_powers(self.prec);
        self.pipe.scenario.roots_of_unity()[k].to_complex(&zetas)
    }

    /// `A(x) = (I + P_1)(I + P_2) ... (I + P_{M-1})`.
    pub fn back_transform(&self, x: f64) -> Result<HpMatrix> {
        let pt = self.point(&self.float(x))?;
        Ok(self.product(&pt))
    }

    fn product(&self, pt: &EvalPoint) -> HpMatrix {
        let n = self.pipe.scenario.n;
        let id = HpMatrix::identity(n, self.prec);
        self.p.iter().fold(id.clone(), |acc, p| acc.mul(&id.add(&p.eval(pt))))
    }

    /// `A'(x)` by the product rule on the symbolic derivatives of `P_m`.
    fn product_derivative(&self, pt: &EvalPoint) -> HpMatrix {
        let n = self.pipe.scenario.n;
        let id = HpMatrix::identity(n, self.prec);
        let factors: Vec<HpMatrix> = self.p.iter().map(|p| id.add(&p.eval(pt))).collect();
        let mut total = HpMatrix::zeros(n, self.prec);
        for (m, dp) in self.dp.iter().enumerate() {
            let mut term = id.clone();
            for (i, f) in factors.iter().enumerate() {
                term = if i == m { term.mul(&dp.eval(pt)) } else { term.mul(f) };
            }
            total = total.add(&term);
        }
        total
    }

    /// `E_M(x) = A^-1 [(D + R) A - rho^-1 A'] - D_M`, built from the original
    /// system and the numeric transformation only.
    pub fn residual(&self, x: f64) -> Result<(HpMatrix, f64)> {
        let pt = self.point(&self.float(x))?;
        let a = self.product(&pt);
        let ainv = a.inverse().ok_or(Error::IllConditioned { x, cond: f64::INFINITY })?;
        let n = self.pipe.scenario.n as f64;
        let cond = a.max_abs().to_f64() * ainv.max_abs().to_f64() * n;
        if cond.is_nan() || cond > MAX_CONDITION {
            return Err(Error::IllConditioned { x, cond });
        }
        let rho = self.rho.eval(&pt).get(0, 0).clone();
        let rho_inv = HpComplex::one(self.prec).div(&rho);
        let lhs = self.system.eval(&pt).mul(&a).sub(&self.product_derivative(&pt).scale(&rho_inv));
        Ok((ainv.mul(&lhs).sub(&self.d_final.eval(&pt)), cond))
    }

    pub fn residual_point(&self, x: f64) -> Result<ResidualPoint> {
        let (r, cond) = self.residual(x)?;
        Ok(ResidualPoint { x, max_abs: r.max_abs().to_f64(), condition: cond })
    }

    pub fn residual_table(&self, xs: &[f64]) -> Result<Vec<ResidualPoint>> {
        xs.iter().map(|&x| self.residual_point(x)).collect()
    }

    /// Adaptive Gauss-Legendre quadrature of a compiled `1 x 1` integrand.
    fn integrate(&self, integrand: &CompiledMatrix, a: f64, b: f64) -> Result<HpComplex> {
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::NonPositiveAbscissa(a.min(b)));
        }
        let g = |t: &Float| -> Result<HpComplex> { Ok(integrand.eval(&self.point(t)?).get(0, 0).clone()) };
        let eps = Float::with_val(self.prec, 10u32).pow(-(self.digits as i32) - 2);
        // panels no longer than one unit keep the periodic factor resolved
        let panels = (b - a).abs().ceil().max(1.0) as usize;
        let (lo, hi) = (self.float(a), self.float(b));
        let width = Float::with_val(self.prec, &hi - &lo) / panels as u32;
        let mut total = HpComplex::zero(self.prec + 32);
        for i in 0..panels {
            let pa = Float::with_val(self.prec, &width * i as u32) + &lo;
            let pb = if i + 1 == panels { hi.clone() } else { Float::with_val(self.prec, &width * (i + 1) as u32) + &lo };
            let whole = self.gl.apply(&pa, &pb, self.prec, &g)?;
            total = &total + &self.adapt(&pa, &pb, whole, &eps, 0, &g)?;
        }
        Ok(total)
    }

    fn adapt(
        &self,
        a: &Float,
        b: &Float,
        whole: HpComplex,
        eps: &Float,
        depth: u32,
        g: &dyn Fn(&Float) -> Result<HpComplex>,
    ) -> Result<HpComplex> {
        let mid = Float::with_val(self.prec + 32, a + b) / 2u32;
        let left = self.gl.apply(a, &mid, self.prec, g)?;
        let right = self.gl.apply(&mid, b, self.prec, g)?;
        let halves = &left + &right;
        let diff = (&halves - &whole).abs();
        let scale = Float::with_val(self.prec, halves.abs() + 1u32);
        if diff <= Float::with_val(self.prec, eps * &scale) {
            return Ok(halves);
        }
        if depth >= QUAD_MAX_DEPTH {
            return Err(Error::Quadrature(diff.to_f64()));
        }
        let l = self.adapt(a, &mid, left, eps, depth + 1, g)?;
        let r = self.adapt(&mid, b, right, eps, depth + 1, g)?;
        Ok(&l + &r)
    }

    /// `int_{a}^{b} rho`.
    pub fn rho_integral(&self, a: f64, b: f64) -> Result<HpComplex> {
        self.integrate(&self.rho, a, b)
    }

    /// `int_{a}^{b} d_k rho` with `d_k` the `k`-th (0-based) entry of `D_M`.
    pub fn exponent_integral(&self, k: usize, a: f64, b: f64) -> Result<HpComplex> {
        let shifted = self.integrate(&self.shifted_exponents[k], a, b)?;
        Ok(&shifted + &(&self.omega(k) * &self.rho_integral(a, b)?))
    }

    /// Column `k` (0-based) of `A(x)` times `exp(int_{x0}^{x} d_k rho)`,
    /// stored with the factor `exp(omega_k int rho)` split off.
    pub fn asymptotic_solution(&self, k: usize, x0: f64, x: f64) -> Result<AsymSolution> {
        let n = self.pipe.scenario.n;
        if k >= n {
            return Err(Error::InvalidScenario(format!("solution index {} outside 1..={n}", k + 1)));
        }
        let col = self.back_transform(x)?.column(k);
        let shifted = if x == x0 { HpComplex::zero(self.prec) } else { self.integrate(&self.shifted_exponents[k], x0, x)? };
        let factor = shifted.exp();
        let exponent = if x == x0 { HpComplex::zero(self.prec) } else { self.exponent_integral(k, x0, x)? };
        Ok(AsymSolution {
            k: k + 1,
            x0,
            x,
            digits: self.digits,
            scaled: col.iter().map(|c| c * &factor).collect(),
            column: col,
            exponent,
        })
    }

    /// Integrates `Y' = rho (D + R - omega_k I) Y` from `x0` to `x1`. Only the
    /// dominant direction is stable when integrating forward.
    pub fn oracle(&self, k: usize, y0: &[HpComplex], x0: f64, x1: f64, tol: f64) -> Result<OracleRun> {
        let n = self.pipe.scenario.n;
        let shift = HpMatrix::identity(n, self.prec).scale(&self.omega(k));
        let system = |x: &Float| -> Result<HpMatrix> {
            let pt = self.point(x)?;
            let rho = self.rho.eval(&pt).get(0, 0).clone();
            Ok(self.system.eval(&pt).sub(&shift).scale(&rho))
        };
        integrate_linear(&system, y0, x0, x1, tol, self.prec)
    }

    /// Starts the oracle on the asymptotic solution at `x0` and compares at `x1`.
    pub fn compare(&self, k: usize, x0: f64, x1: f64, tol: f64) -> Result<OracleComparison> {
        let start = self.asymptotic_solution(k, x0, x0)?;
        let end = self.asymptotic_solution(k, x0, x1)?;
        let oracle = self.oracle(k, &start.scaled, x0, x1, tol)?;
        let rel_dev = end
            .scaled
            .iter()
            .zip(&oracle.y)
            .map(|(a, o)| ((a - o).abs() / a.abs()).to_f64())
            .collect();
        Ok(OracleComparison { k: k + 1, x0, x1, asym: end.scaled, oracle, rel_dev })
    }
}

/// Integrates `y' = M(x) y` with a Gragg-Bulirsch-Stoer scheme at `prec`
/// bits, mixed absolute/relative local error `tol`.
pub fn integrate_linear(
    system: &dyn Fn(&Float) -> Result<HpMatrix>,
    y0: &[HpComplex],
    x0: f64,
    x1: f64,
    tol: f64,
    prec: u32,
) -> Result<OracleRun> {
    if x0 <= 0.0 || x1 <= 0.0 {
        return Err(Error::NonPositiveAbscissa(x0.min(x1)));
    }
    let rhs = |x: &Float, y: &[HpComplex]| -> Result<Vec<HpComplex>> { Ok(system(x)?.mul_vec(y)) };
    let mut gbs = Gbs::new(prec, tol);
    let start: Vec<HpComplex> = y0.iter().map(|v| v + &HpComplex::zero(prec)).collect();
    let y = gbs.integrate(&rhs, start, &Float::with_val(prec, x0), &Float::with_val(prec, x1))?;
    Ok(OracleRun { x0, x1, tol, steps: gbs.steps, rejected: gbs.rejected, evaluations: gbs.evaluations, y })
}

const GBS_STAGES: usize = 10;

struct Gbs {
    prec: u32,
    tol: Float,
    steps: usize,
    rejected: usize,
    evaluations: usize,
}

type Rhs<'r> = dyn Fn(&Float, &[HpComplex]) -> Result<Vec<HpComplex>> + 'r;

fn axpy(y: &[HpComplex], h: &Float, f: &[HpComplex]) -> Vec<HpComplex> {
    y.iter().zip(f).map(|(a, b)| a + &b.scale(h)).collect()
}

impl Gbs {
    fn new(prec: u32, tol: f64) -> Self {
        Gbs { prec, tol: Float::with_val(prec, tol), steps: 0, rejected: 0, evaluations: 0 }
    }

    fn eval(&mut self, f: &Rhs<'_>, x: &Float, y: &[HpComplex]) -> Result<Vec<HpComplex>> {
        self.evaluations += 1;
        f(x, y)
    }

    /// Modified midpoint rule with `steps` substeps over `[x, x + big_h]`.
    fn midpoint(
        &mut self,
        f: &Rhs<'_>,
        x: &Float,
        y: &[HpComplex],
        f0: &[HpComplex],
        big_h: &Float,
        steps: usize,
    ) -> Result<Vec<HpComplex>> {
        let h = Float::with_val(self.prec, big_h / steps as u32);
        let two_h = Float::with_val(self.prec, &h * 2u32);
        let mut z_prev = y.to_vec();
        let mut z = axpy(y, &h, f0);
        for i in 1..steps {
            let xi = Float::with_val(self.prec, &h * i as u32) + x;
            let fi = self.eval(f, &xi, &z)?;
            let z_next = axpy(&z_prev, &two_h, &fi);
            z_prev = std::mem::replace(&mut z, z_next);
        }
        let xe = Float::with_val(self.prec, x + big_h);
        let fe = self.eval(f, &xe, &z)?;
        let half = Float::with_val(self.prec, 0.5);
        Ok(z.iter()
            .zip(&z_prev)
            .zip(&fe)
            .map(|((a, b), c)| (&(a + b) + &c.scale(&h)).scale(&half))
            .collect())
    }

    fn error_ratio(&self, a: &[HpComplex], b: &[HpComplex], y: &[HpComplex]) -> f64 {
        a.iter()
            .zip(b)
            .zip(y)
            .map(|((p, q), s)| {
                let sc = Float::with_val(self.prec, s.abs() + 1u32) * &self.tol;
                ((p - q).abs() / sc).to_f64()
            })
            .fold(0.0, f64::max)
    }

    fn integrate(&mut self, f: &Rhs<'_>, mut y: Vec<HpComplex>, x0: &Float, x1: &Float) -> Result<Vec<HpComplex>> {
        let mut x = x0.clone();
        let span = Float::with_val(self.prec, x1 - x0);
        let dir = if span.is_sign_negative() { -1.0 } else { 1.0 };
        let mut h = Float::with_val(self.prec, dir * 0.05f64.min(span.to_f64().abs()));
        let min_h = x1.to_f64().abs().max(1.0) * 1e-14;
        while (Float::with_val(self.prec, x1 - &x) * dir).is_sign_positive() && x != *x1 {
            let remaining = Float::with_val(self.prec, x1 - &x);
            if Float::with_val(self.prec, &h * dir) > Float::with_val(self.prec, &remaining * dir) {
                h = remaining;
            }
            if h.to_f64().abs() < min_h {
                return Err(Error::StepUnderflow(x.to_f64()));
            }
            let f0 = self.eval(f, &x, &y)?;
            let mut table: Vec<Vec<Vec<HpComplex>>> = Vec::with_capacity(GBS_STAGES);
            let mut accepted = None;
            let mut last_err = f64::INFINITY;
            for j in 0..GBS_STAGES {
                let nj = 2 * (j + 1);
                let mut row = vec![self.midpoint(f, &x, &y, &f0, &h, nj)?];
                for k in 1..=j {
                    let nk = 2 * (j + 1 - k);
                    let ratio = (nj as f64 / nk as f64).powi(2) - 1.0;
                    let r = Float::with_val(self.prec, ratio).recip();
                    let next: Vec<HpComplex> = row[k - 1]
                        .iter()
                        .zip(&table[j - 1][k - 1])
                        .map(|(a, b)| a + &(a - b).scale(&r))
                        .collect();
                    row.push(next);
                }
                if j >= 2 {
                    let err = self.error_ratio(&row[j], &row[j - 1], &y);
                    last_err = err;
                    if err <= 1.0 {
                        let order = (2 * j + 1) as f64;
                        let fac = (0.94 * (0.65 / err.max(1e-300)).powf(1.0 / order)).clamp(0.2, 4.0);
                        accepted = Some((row[j].clone(), fac));
                        break;
                    }
                }
                table.push(row);
            }
            match accepted {
                Some((ynew, fac)) => {
                    x += &h;
                    y = ynew;
                    self.steps += 1;
                    h *= fac;
                }
                None => {
                    self.rejected += 1;
                    let order = (2 * GBS_STAGES - 1) as f64;
                    let fac = (0.94 * (0.65 / last_err).powf(1.0 / order)).clamp(0.1, 0.7);
                    h *= fac;
                }
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagflow::run_pipeline;
    use crate::scenario::{Overrides, Scenario};

    fn periodic() -> Scenario {
        let text = r#"{"name":"p","kind":"periodic","n":4,"alpha":4,"beta":1,"f":{"kind":"two_plus_sin"},
            "f_range":[1,3],"fp_bound":1,"X":40,"digits":30,"K":4}"#;
        Scenario::from_json_str(text, &Overrides::default()).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(GL_ORDER, 128);
        let g = |t: &Float| -> Result<HpComplex> { Ok(HpComplex::from_real(Float::with_val(160, t.clone().pow(7u32)))) };
        let v = gl.apply(&Float::with_val(128, 0), &Float::with_val(128, 2), 128, &g).unwrap();
        // int_0^2 t^7 = 32
        let err = Float::with_val(128, &v.re - 32u32).abs();
        assert!(err < 1e-30, "{err}");
    }

    #[test]
    fn quadrature_of_rho_matches_closed_form_for_power_kind() {
        let text = r#"{"name":"q","kind":"power","n":4,"gamma":"1","X":40,"digits":30}"#;
        let s = Scenario::from_json_str(text, &Overrides::default()).unwrap();
        let pipe = run_pipeline(&s).unwrap();
        let sol = Solver::new(&pipe, 30).unwrap();
        let v = sol.rho_integral(40.0, 60.0).unwrap();
        // int x dx = (3600 - 1600) / 2
        assert!((v.re.to_f64() - 1000.0).abs() < 1e-20);
    }

    #[test]
    fn residual_at_forty_is_small_and_well_conditioned() {
        let pipe = run_pipeline(&periodic()).unwrap();
        let sol = Solver::new(&pipe, 30).unwrap();
        let r = sol.residual_point(40.0).unwrap();
        assert!(r.max_abs < 1e-5, "{r:?}");
        assert!(r.condition < 10.0);
    }

    #[test]
    fn oracle_solves_decoupled_system_exactly() {
        // y' = x d y with d = (1, -1/2 + i): y(x1) = y(x0) exp(d (x1^2 - x0^2) / 2)
        let prec = 128;
        let d = [HpComplex::from_f64(prec, 1.0, 0.0), HpComplex::from_f64(prec, -0.5, 1.0)];
        let system = |x: &Float| -> Result<HpMatrix> {
            let mut m = HpMatrix::zeros(2, prec);
            for (i, di) in d.iter().enumerate() {
                m.set(i, i, di.scale(x));
            }
            Ok(m)
        };
        let y0 = vec![HpComplex::one(prec), HpComplex::from_f64(prec, 0.0, 2.0)];
        let run = integrate_linear(&system, &y0, 1.0, 3.0, 1e-20, prec).unwrap();
        for i in 0..2 {
            let exact = &y0[i] * &d[i].scale(&Float::with_val(prec, 4)).exp();
            let rel = ((&run.y[i] - &exact).abs() / exact.abs()).to_f64();
            assert!(rel < 1e-17, "component {i}: {rel:e}");
        }
    }

    #[test]
    fn slope_fit_recovers_power() {
        let rows: Vec<ResidualPoint> =
            [10.0, 20.0, 40.0].iter().map(|&x| ResidualPoint { x, max_abs: 3.0 * x.powf(-4.0), condition: 1.0 }).collect();
        assert!((fit_slope(&rows) + 4.0).abs() < 1e-12);
    }
}
