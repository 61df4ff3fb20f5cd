use std::fmt::Write as _;

use asympt_core::bounds::{bound_final_error, BoundStrategy};
use asympt_core::diagflow::{run_pipeline, Pipeline};
use asympt_core::hp::HpComplex;
use asympt_core::matrix::FunMatrix;
use asympt_core::ncalg::{build_templates, NCExpr};
use asympt_core::scenario::Scenario;
use asympt_core::solve::{fit_slope, residual_csv, Solver};
use asympt_core::Exponent;
use serde_json::{json, Value};

use crate::{Failure, Format};

/// Oracle tolerance and accepted deviation for `verify`.
const ORACLE_TOL: f64 = 1e-15;
const ORACLE_BUDGET: f64 = 1e-3;

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render(e: &NCExpr) -> String {
    if e.is_empty() {
        "0".into()
    } else {
        e.render()
    }
}

pub fn lattice(s: &Scenario, f: Format) -> String {
    let lat = &s.lattice;
    match f {
        Format::Text => {
            let thetas: Vec<String> = lat.thetas.iter().map(Exponent::to_string).collect();
            let mut out = format!("thetas  {}\nK       {}\nL       {}\nM       {}\n", thetas.join(", "), lat.k, lat.l, lat.m);
            for (i, sigma) in lat.sigmas.iter().enumerate() {
                writeln!(out, "sigma[{}] = {sigma}", i + 1).unwrap();
            }
            out
        }
        Format::Json => pretty(&json!({
            "scenario": s.name,
            "thetas": lat.thetas,
            "K": lat.k,
            "L": lat.l,
            "M": lat.m,
            "sigmas": lat.sigmas,
        })),
        Format::Csv => {
            let mut out = String::from("index,sigma\n");
            for (i, sigma) in lat.sigmas.iter().enumerate() {
                writeln!(out, "{},{sigma}", i + 1).unwrap();
            }
            out
        }
    }
}

pub fn templates(s: &Scenario, f: Format) -> Result<String, Failure> {
    let plan = build_templates(&s.lattice, s.l)?;
    let mut rows: Vec<(String, String)> = Vec::new();
    for st in &plan.stages {
        rows.push((format!("S[{}]", st.m + 1), render(&st.s_template())));
        for (k, e) in st.buckets.iter().filter(|(k, _)| **k >= 2) {
            rows.push((format!("V[{k},{}]", st.m + 1), render(e)));
        }
    }
    rows.push((format!("E[{}]", s.lattice.m), render(plan.final_error())));
    Ok(match f {
        Format::Text => rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect(),
        Format::Json => pretty(&plan.to_json()),
        Format::Csv => {
            let mut out = String::from("symbol,expression\n");
            for (k, v) in &rows {
                writeln!(out, "{},{}", csv_field(k), csv_field(v)).unwrap();
            }
            out
        }
    })
}

fn pipeline(s: &Scenario) -> Result<Pipeline, Failure> {
    Ok(run_pipeline(s)?)
}

/// `(symbol, matrix)` pairs of every stage, then `D[M]`.
fn stage_blocks(pipe: &Pipeline) -> Vec<(String, &FunMatrix)> {
    let mut out = Vec::new();
    for st in &pipe.states {
        let m = st.m;
        out.push((format!("D[{m}]"), &st.d));
        for (j, v) in &st.v {
            out.push((format!("V[{j},{m}]"), v));
        }
        out.push((format!("P[{m}]"), &st.p));
        out.push((format!("T[{m}]"), &st.t));
        for (j, w) in &st.w {
            out.push((format!("W[{j},{m}]"), w));
        }
    }
    out.push((format!("D[{}]", pipe.scenario.lattice.m), &pipe.d_final));
    out
}

pub fn stages(s: &Scenario, f: Format) -> Result<String, Failure> {
    let pipe = pipeline(s)?;
    let blocks = stage_blocks(&pipe);
    Ok(match f {
        Format::Text => {
            let mut out = String::new();
            for (name, m) in &blocks {
                writeln!(out, "{name}  ({} monomials)", m.monomial_count()).unwrap();
                if !m.is_zero() {
                    out.push_str(&m.to_string());
                }
            }
            out
        }
        Format::Json => pretty(&json!({
            "scenario": s.to_json(),
            "stages": pipe.states.iter().map(|st| st.to_json()).collect::<Vec<_>>(),
            "D_final": pipe.d_final.to_json(),
            "final_spill": pipe.final_spill.to_json(),
        })),
        Format::Csv => {
            let mut out = String::from("symbol,row,col,expression\n");
            for (name, m) in &blocks {
                for i in 0..m.dim() {
                    for j in 0..m.dim() {
                        let e = m.get(i, j);
                        if !e.is_zero() {
                            writeln!(out, "{},{},{},{}", csv_field(name), i + 1, j + 1, csv_field(&e.to_string())).unwrap();
                        }
                    }
                }
            }
            out
        }
    })
}

pub fn bound(s: &Scenario, f: Format) -> Result<String, Failure> {
    let pipe = pipeline(s)?;
    let report = bound_final_error(&pipe, s.x, BoundStrategy::IdentitySplit)?;
    Ok(match f {
        Format::Text => report.to_table(),
        Format::Json => pretty(&report.to_json()),
        Format::Csv => {
            let mut out = String::from("term,multiplicity,bound\n");
            for t in &report.terms {
                writeln!(out, "{},{},{:.6e}", csv_field(&t.term), t.multiplicity, t.bound.to_f64()).unwrap();
            }
            writeln!(out, "total,,{:.6e}", report.total.to_f64()).unwrap();
            out
        }
    })
}

fn digits_str(c: &HpComplex, digits: u32) -> (String, String) {
    let d = Some(digits as usize);
    (c.re.to_string_radix(10, d), c.im.to_string_radix(10, d))
}

pub fn solve(s: &Scenario, f: Format) -> Result<(String, bool), Failure> {
    let pipe = pipeline(s)?;
    let solver = Solver::new(&pipe, s.digits)?;
    let sols = (0..s.n).map(|k| solver.asymptotic_solution(k, s.x, s.x)).collect::<Result<Vec<_>, _>>()?;
    let out = match f {
        Format::Text => {
            let mut out = format!("scenario {}, X = {}, digits = {}\n", s.name, s.x, s.digits);
            out.push_str("Z[k](x) = A(x) e_k exp(int_X^x d_k rho), A = (I+P[1])...(I+P[M-1])\n");
            for sol in &sols {
                writeln!(out, "\nk = {}", sol.k).unwrap();
                for (i, c) in sol.values().iter().enumerate() {
                    let (re, im) = digits_str(c, s.digits);
                    writeln!(out, "  z[{}] = {re} {im}i", i + 1).unwrap();
                }
            }
            out
        }
        Format::Json => pretty(&json!({
            "scenario": s.name,
            "X": s.x,
            "digits": s.digits,
            "solutions": sols.iter().map(|sol| sol.to_json()).collect::<Vec<_>>(),
        })),
        Format::Csv => {
            let mut out = String::from("k,component,re,im\n");
            for sol in &sols {
                for (i, c) in sol.values().iter().enumerate() {
                    let (re, im) = digits_str(c, s.digits);
                    writeln!(out, "{},{},{re},{im}", sol.k, i + 1).unwrap();
                }
            }
            out
        }
    };
    Ok((out, true))
}

struct Check {
    name: &'static str,
    pass: bool,
    value: String,
}

pub fn verify(s: &Scenario, f: Format) -> Result<(String, bool), Failure> {
    let pipe = pipeline(s)?;
    let lat = &s.lattice;
    let d = s.d_matrix();
    let mut checks = Vec::new();

    let mut diag_ok = true;
    let mut comm_ok = true;
    let mut floor_ok = true;
    let mut classes_ok = true;
    for st in &pipe.states {
        let v1 = &st.v[&1];
        diag_ok &= v1.dg().is_zero() && st.p.dg().is_zero();
        comm_ok &= st.p.mul(&d).sub(&d.mul(&st.p)).sub(v1).is_zero();
        for (j, v) in &st.v {
            floor_ok &= v.min_order().is_none_or(|o| o >= lat.grade_floor(st.m + j - 1));
        }
        for (j, w) in &st.w {
            floor_ok &= w.min_order().is_none_or(|o| o >= lat.grade_floor(st.m + j));
            classes_ok &= w.split_by_order().len() == 1;
        }
        classes_ok &= st.w.len() <= s.l;
    }
    let stages = pipe.states.len();
    checks.push(Check { name: "diagonal-free V[1,m] and P[m]", pass: diag_ok, value: format!("{stages} stages") });
    checks.push(Check { name: "commutator residual", pass: comm_ok, value: "P D - D P - V[1,m]".into() });
    checks.push(Check { name: "grading floors", pass: floor_ok, value: format!("K = {}", lat.k) });
    checks.push(Check { name: "W order classes", pass: classes_ok, value: format!("l = {}", s.l) });

    let report = bound_final_error(&pipe, s.x, BoundStrategy::IdentitySplit)?;
    let total = report.total.to_f64();
    checks.push(Check { name: "bound total", pass: total.is_finite(), value: format!("{total:.6e}") });

    let solver = Solver::new(&pipe, s.digits)?;
    let sample = solver.residual_table(&[s.x, 1.5 * s.x, 2.5 * s.x])?;
    let worst = sample.iter().map(|r| r.max_abs).fold(0.0, f64::max);
    checks.push(Check { name: "residual within bound", pass: worst <= total, value: format!("{worst:.6e}") });

    let decay = solver.residual_table(&[s.x, 2.0 * s.x, 4.0 * s.x])?;
    let slope = fit_slope(&decay);
    let target = -(lat.k.to_f64() - 0.3);
    checks.push(Check { name: "decay slope", pass: slope <= target, value: format!("{slope:.4} (<= {target})") });

    let cmp = solver.compare(0, s.x, 1.5 * s.x, ORACLE_TOL)?;
    let dev = cmp.max_rel_dev();
    checks.push(Check { name: "oracle agreement", pass: dev <= ORACLE_BUDGET, value: format!("{dev:.3e}") });

    let all = checks.iter().all(|c| c.pass);
    let status = |c: &Check| if c.pass { "PASS" } else { "FAIL" };
    let out = match f {
        Format::Text => {
            let mut out = format!("scenario {}, X = {}, K = {}, digits = {}\n", s.name, s.x, lat.k, s.digits);
            for c in &checks {
                writeln!(out, "{} {:<32} {}", status(c), c.name, c.value).unwrap();
            }
            out.push_str("\nresidual decay\n");
            out.push_str(&residual_csv(&decay));
            out.push_str("\noracle comparison, k = 1\n");
            out.push_str(&cmp.to_csv(12));
            out
        }
        Format::Json => pretty(&json!({
            "scenario": s.name,
            "passed": all,
            "checks": checks.iter().map(|c| json!({"name": c.name, "pass": c.pass, "value": c.value})).collect::<Vec<_>>(),
            "bound_total": format!("{total:.6e}"),
            "residual_decay": decay.iter().map(|r| json!({"x": r.x, "max_abs": r.max_abs, "condition": r.condition})).collect::<Vec<_>>(),
            "decay_slope": slope,
            "oracle": cmp.to_json(s.digits),
        })),
        Format::Csv => {
            let mut out = String::from("check,status,value\n");
            for c in &checks {
                writeln!(out, "{},{},{}", csv_field(c.name), status(c), csv_field(&c.value)).unwrap();
            }
            out
        }
    };
    Ok((out, all))
}
