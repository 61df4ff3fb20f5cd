use std::path::PathBuf;

use asympt_core::bounds::{bound_final_error, BoundStrategy};
use asympt_core::diagflow::run_pipeline;
use asympt_core::scenario::{Overrides, Scenario};
use asympt_core::solve::{fit_slope, Solver};
use asympt_core::Error;

fn load(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::from_path(&path).unwrap()
}

#[test]
fn zero_perturbation_has_zero_residual() {
    let zero = r#"[[0,0],[0,0],[0,0],[0,0]]"#;
    let c = format!("[{zero},{zero},{zero},{zero}]");
    let text = format!(r#"{{"name":"z","kind":"power","n":4,"gamma":"1","C":{c}}}"#);
    let s = Scenario::from_json_str(&text, &Overrides::default()).unwrap();
    let pipe = run_pipeline(&s).unwrap();
    let sol = Solver::new(&pipe, 20).unwrap();
    for x in [3.0, 40.0] {
        let (r, _) = sol.residual(x).unwrap();
        assert!(r.max_abs().is_zero());
    }
}

#[test]
fn periodic_residual_halving_ratio() {
    let pipe = run_pipeline(&load("example3.json")).unwrap();
    let sol = Solver::new(&pipe, 30).unwrap();
    let r40 = sol.residual_point(40.0).unwrap().max_abs;
    let r80 = sol.residual_point(80.0).unwrap().max_abs;
    let ratio = r80 / r40 / 2f64.powi(-4);
    assert!((1.0 / 3.0..=3.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn power_scenario_end_to_end() {
    let s = load("example1.json");
    let pipe = run_pipeline(&s).unwrap();
    let report = bound_final_error(&pipe, s.x, BoundStrategy::IdentitySplit).unwrap();
    let sol = Solver::new(&pipe, s.digits).unwrap();
    let rows = sol.residual_table(&[40.0, 80.0, 160.0]).unwrap();
    for r in &rows {
        assert!(r.max_abs <= report.total.to_f64(), "{r:?} vs {}", report.total.to_f64());
    }
    let slope = fit_slope(&rows);
    assert!(slope <= -(s.lattice.k.to_f64() - 0.3), "slope {slope}");
}

#[test]
fn small_abscissa_is_a_rigor_failure() {
    let pipe = run_pipeline(&load("example3.json")).unwrap();
    match bound_final_error(&pipe, 1.0, BoundStrategy::IdentitySplit) {
        Err(Error::RigorFailure(_)) => {}
        other => panic!("expected rigor failure, got {other:?}"),
    }
}

#[test]
fn bound_decreases_with_abscissa() {
    let pipe = run_pipeline(&load("example3.json")).unwrap();
    let a = bound_final_error(&pipe, 40.0, BoundStrategy::IdentitySplit).unwrap().total;
    let b = bound_final_error(&pipe, 80.0, BoundStrategy::IdentitySplit).unwrap().total;
    assert!(b < a);
}
