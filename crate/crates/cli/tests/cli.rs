use std::path::PathBuf;
use std::process::{Command, Output};

use asympt_core::ncalg::NCExpr;
use asympt_core::{Exponent, SigmaLattice};
use serde_json::Value;

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).display().to_string()
}

fn asympt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asympt")).args(args).env_remove("ASYMPT_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn templates_reproduce_second_stage() {
    let o = asympt(&["templates", "--scenario", &scenario("example2.json")]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "S[2] = V[1,1]·P[1] + T[1] + V[2,1] − W[1,1]"), "{text}");
    assert!(text.lines().any(|l| l == "S[3] = T[2] + V[2,2] − W[1,2]"));
}

#[test]
fn small_target_emits_only_second_stage() {
    let o = asympt(&["templates", "--scenario", &scenario("example2.json"), "--K", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let s_lines: Vec<&str> = text.lines().filter(|l| l.starts_with("S[")).collect();
    assert_eq!(s_lines.len(), 1);
    assert!(s_lines[0].starts_with("S[2] ="));
}

#[test]
fn target_below_first_exponent_is_rejected() {
    for k in ["1", "1/2"] {
        let o = asympt(&["templates", "--scenario", &scenario("example2.json"), "--K", k]);
        assert_eq!(o.status.code(), Some(2));
        assert!(o.stdout.is_empty());
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn invalid_inputs_exit_with_two() {
    assert_eq!(asympt(&["lattice"]).status.code(), Some(2));
    assert_eq!(asympt(&["lattice", "--scenario", "/nonexistent.json"]).status.code(), Some(2));
    assert_eq!(asympt(&["lattice", "--scenario", &scenario("example2.json"), "--K", "x/y"]).status.code(), Some(2));
    assert_eq!(asympt(&["stages", "--scenario", &scenario("example2.json")]).status.code(), Some(2));
    assert_eq!(asympt(&["lattice", "--scenario", &scenario("example2.json"), "--X", "50"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name":"b","kind":"power","gamma":"1","colour":"red"}"#).unwrap();
    assert_eq!(asympt(&["lattice", "--scenario", bad.to_str().unwrap()]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_asympt"))
        .args(["lattice", "--scenario", &scenario("example1.json")])
        .env("ASYMPT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn small_abscissa_is_rigor_failure() {
    let o = asympt(&["bound", "--scenario", &scenario("example3.json"), "--X", "1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn output_is_byte_identical() {
    for cmd in ["stages", "bound", "solve"] {
        let args = ["--scenario", &scenario("example3.json"), "--format", "json"];
        let a = asympt(&[&[cmd][..], &args[..]].concat());
        let b = Command::new(env!("CARGO_BIN_EXE_asympt"))
            .arg(cmd)
            .args(args)
            .env("ASYMPT_THREADS", "1")
            .output()
            .unwrap();
        assert_eq!(a.status.code(), Some(0), "{cmd}");
        assert_eq!(a.stdout, b.stdout, "{cmd}");
    }
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lattice.csv");
    let o = asympt(&["lattice", "--scenario", &scenario("example1.json"), "--format", "csv", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(path).unwrap(), "index,sigma\n1,2\n2,4\n3,6\n4,8\n");
}

#[test]
fn template_json_round_trips() {
    let o = asympt(&["templates", "--scenario", &scenario("example2.json"), "--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let parse = |x: &Value| x.as_str().unwrap().parse::<Exponent>().unwrap();
    let thetas: Vec<Exponent> = v["lattice"]["thetas"].as_array().unwrap().iter().map(parse).collect();
    let lat = SigmaLattice::build(&thetas, parse(&v["lattice"]["K"])).unwrap();
    for st in v["stages"].as_array().unwrap() {
        let s = NCExpr::from_json(&lat, &st["S"]).unwrap();
        assert_eq!(s.render(), st["S_text"].as_str().unwrap());
        assert_eq!(s.to_json(), st["S"]);
        NCExpr::from_json(&lat, &st["E"]).unwrap();
    }
}

#[test]
fn solve_at_x_returns_back_transform_columns() {
    let o = asympt(&["solve", "--scenario", &scenario("example3.json"), "--format", "csv", "--digits", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 16);
    // A(X) is close to the identity at X = 40
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&first[..2], ["1", "1"]);
    let re: f64 = first[2].parse().unwrap();
    assert!((re - 1.0).abs() < 1e-2);
}

#[test]
fn verify_passes_on_periodic_scenario() {
    let o = asympt(&["verify", "--scenario", &scenario("example3.json"), "--format", "csv"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.lines().skip(1).all(|l| l.contains(",PASS,")));
}
