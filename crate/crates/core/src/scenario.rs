//! Scenario files: the system `Z' = rho (D + R) Z` to be treated, plus the
//! accuracy target and evaluation settings.

use std::path::Path;

use rug::Rational;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::cyclo::{Cyclo, CycloField};
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::grading::SigmaLattice;
use crate::matrix::FunMatrix;
use crate::scalar::{FModel, MonoKey, ScalarExpr};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    /// `rho = x^gamma`, `R = x^-(1+gamma) C`.
    Power,
    /// `y^(n) = x^alpha f(x) y` written as a first-order system.
    Periodic,
    /// Lattice and templates only; no concrete matrices.
    Symbolic,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Power => "power",
            ScenarioKind::Periodic => "periodic",
            ScenarioKind::Symbolic => "symbolic",
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    kind: String,
    n: Option<usize>,
    gamma: Option<Exponent>,
    alpha: Option<Exponent>,
    beta: Option<Exponent>,
    thetas: Option<Vec<Exponent>>,
    #[serde(rename = "K")]
    k: Option<Exponent>,
    l: Option<usize>,
    #[serde(rename = "C")]
    c: Option<Vec<Vec<[Value; 2]>>>,
    f: Option<RawF>,
    f_range: Option<[f64; 2]>,
    fp_bound: Option<f64>,
    #[serde(rename = "X")]
    x: Option<f64>,
    digits: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawF {
    kind: String,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub n: usize,
    /// Power of `x` in `rho`.
    pub gamma: Exponent,
    pub alpha: Option<Exponent>,
    pub beta: Exponent,
    pub lattice: SigmaLattice,
    /// Number of `W` blocks per stage.
    pub l: usize,
    pub c: Option<Vec<Vec<Cyclo>>>,
    pub f: FModel,
    pub x: f64,
    pub digits: u32,
}

/// Overrides from the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub k: Option<Exponent>,
    pub x: Option<f64>,
    pub digits: Option<u32>,
}

fn rational_from_json(v: &Value) -> Result<Rational> {
    let text = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(Error::InvalidScenario(format!("matrix entry {v} is not a number"))),
    };
    let e: Exponent = text.parse().map_err(|_| Error::InvalidScenario(format!("bad matrix entry `{text}`")))?;
    Ok(Rational::from((e.numer(), e.denom())))
}

fn rational_to_json(q: &Rational) -> Value {
    if *q.denom() == 1 {
        if let Some(v) = q.numer().to_i64() {
            return json!(v);
        }
    }
    json!(q.to_string())
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json_str(&text, &Overrides::default())
    }

    pub fn from_path_with(path: &Path, ov: &Overrides) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json_str(&text, ov)
    }

    pub fn from_json_str(text: &str, ov: &Overrides) -> Result<Scenario> {
        let raw: RawScenario = serde_json::from_str(text)?;
        Scenario::from_raw(raw, ov)
    }

    fn from_raw(raw: RawScenario, ov: &Overrides) -> Result<Scenario> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        let kind = match raw.kind.as_str() {
            "power" => ScenarioKind::Power,
            "periodic" => ScenarioKind::Periodic,
            "symbolic" => ScenarioKind::Symbolic,
            other => return bad(format!("unknown kind `{other}`")),
        };
        let n = raw.n.unwrap_or(4);
        if kind != ScenarioKind::Symbolic && n < 2 {
            return bad(format!("dimension n = {n} must be at least 2"));
        }
        let beta = raw.beta.unwrap_or(Exponent::ONE);

        let (gamma, derived_thetas, default_l) = match kind {
            ScenarioKind::Power => {
                if raw.alpha.is_some() {
                    return bad("power scenarios take gamma, not alpha".into());
                }
                let g = raw.gamma.ok_or_else(|| Error::InvalidScenario("power scenario needs gamma".into()))?;
                if g <= -Exponent::ONE {
                    return bad(format!("gamma = {g} must exceed -1"));
                }
                (g, Some(vec![Exponent::ONE + g]), 1)
            }
            ScenarioKind::Periodic => {
                if raw.gamma.is_some() {
                    return bad("periodic scenarios take alpha, not gamma".into());
                }
                let a = raw.alpha.ok_or_else(|| Error::InvalidScenario("periodic scenario needs alpha".into()))?;
                if beta != Exponent::ONE {
                    return bad(format!("beta = {beta} is not supported; the periodic model needs beta = 1"));
                }
                let g = a * Exponent::frac(1, n as i64);
                let t1 = Exponent::ONE + g - beta;
                if !t1.is_positive() {
                    return bad(format!("alpha = {a} gives a non-positive leading exponent"));
                }
                (g, Some(vec![t1, Exponent::ONE + g]), 2)
            }
            ScenarioKind::Symbolic => (raw.gamma.unwrap_or(Exponent::ONE), None, 1),
        };

        let thetas = match (raw.thetas, derived_thetas) {
            (Some(t), Some(d)) if t != d => {
                return bad(format!(
                    "thetas {t:?} disagree with the exponents {d:?} implied by the {} model",
                    kind.name()
                ))
            }
            (Some(t), _) => t,
            (None, Some(d)) => d,
            (None, None) => return bad("symbolic scenario needs thetas".into()),
        };
        let k = match ov.k.or(raw.k) {
            Some(k) => k,
            None => {
                // sigma_4; values theta1..4*theta1 guarantee it is present
                let probe = SigmaLattice::build(&thetas, thetas[0] * 4)?;
                probe.sigma(4).unwrap()
            }
        };
        let lattice = SigmaLattice::build(&thetas, k)?;
        let l = raw.l.unwrap_or(default_l);
        if l == 0 {
            return bad("l must be at least 1".into());
        }

        let field = CycloField::for_dimension(n);
        let c = match raw.c {
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return bad(format!("C must be {n}x{n}"));
                }
                let mut out = Vec::with_capacity(n);
                for row in rows {
                    let mut r = Vec::with_capacity(n);
                    for [re, im] in row {
                        r.push(Cyclo::from_re_im(field, rational_from_json(&re)?, rational_from_json(&im)?));
                    }
                    out.push(r);
                }
                Some(out)
            }
            None if kind == ScenarioKind::Symbolic => None,
            None if n == 4 => Some(default_c(field)),
            None => return bad("C is required unless n = 4".into()),
        };

        let f = match (kind, raw.f) {
            (ScenarioKind::Periodic, Some(rf)) => {
                if rf.kind != "two_plus_sin" {
                    return bad(format!("unknown f kind `{}`", rf.kind));
                }
                let [lo, hi] = raw.f_range.unwrap_or([1.0, 3.0]);
                FModel::two_plus_sin(lo, hi, raw.fp_bound.unwrap_or(1.0))?
            }
            (ScenarioKind::Periodic, None) => return bad("periodic scenario needs f".into()),
            (_, Some(_)) => return bad(format!("{} scenarios have no periodic factor f", kind.name())),
            (_, None) => FModel::unit(),
        };

        let x = ov.x.or(raw.x).unwrap_or(40.0);
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::NonPositiveAbscissa(x));
        }
        let digits = ov.digits.or(raw.digits).unwrap_or(30);
        if !(15..=2000).contains(&digits) {
            return bad(format!("digits = {digits} must lie in 15..=2000"));
        }

        let s = Scenario { name: raw.name, kind, n, gamma, alpha: raw.alpha, beta, lattice, l, c, f, x, digits };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.kind == ScenarioKind::Periodic {
            let c = self.c.as_ref().unwrap();
            let want = Cyclo::from_rational(self.field(), Rational::from((-(self.n as i64 - 1), 2 * self.n as i64)));
            for (i, row) in c.iter().enumerate() {
                if row[i] != want {
                    return Err(Error::InvalidScenario(format!(
                        "diagonal of C must be -(n-1)/(2n) = {want}, found {} at {}",
                        row[i],
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn field(&self) -> &'static CycloField {
        CycloField::for_dimension(self.n)
    }

    pub fn is_concrete(&self) -> bool {
        self.kind != ScenarioKind::Symbolic
    }

    pub fn require_concrete(&self) -> Result<()> {
        if self.is_concrete() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!(
                "scenario `{}` is symbolic only; no matrices to evaluate",
                self.name
            )))
        }
    }

    /// `omega_k = exp(2 pi i (k-1)/n)`.
    pub fn roots_of_unity(&self) -> Vec<Cyclo> {
        let field = self.field();
        let step = (field.order() as usize / self.n) as i64;
        (0..self.n).map(|k| Cyclo::zeta_pow(field, k as i64 * step)).collect()
    }

    pub fn d_matrix(&self) -> FunMatrix {
        FunMatrix::diagonal(self.roots_of_unity().into_iter().map(ScalarExpr::constant).collect())
    }

    fn mono(&self, c: Cyclo, a: Exponent, b: Exponent, fp: u32) -> ScalarExpr {
        ScalarExpr::monomial(c, MonoKey::new(a, b, fp))
    }

    fn q(&self, p: i64, q: i64) -> Cyclo {
        Cyclo::from_rational(self.field(), Rational::from((p, q)))
    }

    /// `rho(x)`.
    pub fn rho(&self) -> ScalarExpr {
        match self.kind {
            ScenarioKind::Periodic => {
                self.mono(self.q(1, 1), self.gamma, Exponent::frac(1, self.n as i64), 0)
            }
            _ => self.mono(self.q(1, 1), self.gamma, Exponent::ZERO, 0),
        }
    }

    /// `1/rho(x)`.
    pub fn rho_inverse(&self) -> ScalarExpr {
        match self.kind {
            ScenarioKind::Periodic => {
                self.mono(self.q(1, 1), -self.gamma, Exponent::frac(-1, self.n as i64), 0)
            }
            _ => self.mono(self.q(1, 1), -self.gamma, Exponent::ZERO, 0),
        }
    }

    /// `R(x)` of the original system, built straight from the model
    /// definition (for periodic kind from `Q'Q^(-1-1/n) C` with `Q = x^alpha f`).
    pub fn r_matrix(&self) -> Result<FunMatrix> {
        self.require_concrete()?;
        let c = self.c.as_ref().unwrap();
        let n = self.n as i64;
        let s = match self.kind {
            ScenarioKind::Power => self.mono(self.q(1, 1), -(Exponent::ONE + self.gamma), Exponent::ZERO, 0),
            ScenarioKind::Periodic => {
                let alpha = self.alpha.unwrap();
                // Q' = alpha x^(alpha-1) f + x^alpha f', times Q^(-1-1/n)
                let qpow = -(Exponent::ONE + Exponent::frac(1, n));
                let q_prime = self
                    .mono(self.q(alpha.numer(), alpha.denom()), alpha - Exponent::ONE, Exponent::ONE, 0)
                    .add(&self.mono(self.q(1, 1), alpha, Exponent::ZERO, 1));
                q_prime.mul(&self.mono(self.q(1, 1), alpha * qpow, qpow, 0))
            }
            ScenarioKind::Symbolic => unreachable!(),
        };
        Ok(FunMatrix::scalar_times_constant(&s, c))
    }

    pub fn to_json(&self) -> Value {
        let c = self.c.as_ref().map(|rows| {
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|z| match z.re_im() {
                            Some((re, im)) => json!([rational_to_json(&re), rational_to_json(&im)]),
                            None => json!(z.to_string()),
                        })
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        });
        let mut obj = json!({
            "name": self.name,
            "kind": self.kind.name(),
            "n": self.n,
            "beta": self.beta,
            "thetas": self.lattice.thetas,
            "K": self.lattice.k,
            "l": self.l,
            "X": self.x,
            "digits": self.digits,
        });
        let map = obj.as_object_mut().unwrap();
        match self.kind {
            ScenarioKind::Periodic => {
                map.insert("alpha".into(), json!(self.alpha));
                map.insert("f".into(), json!({"kind": "two_plus_sin"}));
                map.insert("f_range".into(), json!([self.f.f_lo, self.f.f_hi]));
                map.insert("fp_bound".into(), json!(self.f.fp_bound));
            }
            _ => {
                map.insert("gamma".into(), json!(self.gamma));
            }
        }
        if let Some(c) = c {
            map.insert("C".into(), json!(c));
        }
        obj
    }
}

/// The 4x4 constant matrix of the fourth-order periodic equation,
/// `C = -T^-1 diag(0, 1/4, 1/2, 3/4) T` with `T` the Vandermonde matrix of the
/// roots of unity.
pub fn default_c(field: &'static CycloField) -> Vec<Vec<Cyclo>> {
    let rows = [
        ["-3", "1+i", "1", "1-i"],
        ["1-i", "-3", "1+i", "1"],
        ["1", "1-i", "-3", "1+i"],
        ["1+i", "1", "1-i", "-3"],
    ];
    let eighth = Rational::from((1, 8));
    rows.iter()
        .map(|r| r.iter().map(|s| Cyclo::parse(field, s).unwrap().scale(&eighth)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PERIODIC: &str = r#"{"name":"p","kind":"periodic","n":4,"alpha":4,"beta":1,
        "f":{"kind":"two_plus_sin"},"f_range":[1,3],"fp_bound":1,"X":40,"digits":30,"K":4}"#;

    #[test]
    fn periodic_defaults() {
        let s = Scenario::from_json_str(PERIODIC, &Overrides::default()).unwrap();
        assert_eq!(s.lattice.sigmas, vec![1.into(), 2.into(), 3.into(), 4.into()]);
        assert_eq!(s.l, 2);
        assert_eq!(s.gamma, Exponent::ONE);
        let c = s.c.as_ref().unwrap();
        assert_eq!(c[0][0].to_string(), "-3/8");
        assert_eq!(c[0][1].to_string(), "1/8+1/8i");
        let d = s.roots_of_unity();
        assert_eq!(d.iter().map(|z| z.to_string()).collect::<Vec<_>>(), vec!["1", "i", "-1", "-i"]);
    }

    #[test]
    fn default_k_is_fourth_sigma() {
        let s = Scenario::from_json_str(r#"{"name":"q","kind":"power","n":4,"gamma":"1/2"}"#, &Overrides::default())
            .unwrap();
        assert_eq!(s.lattice.k, Exponent::integer(6));
        assert_eq!(s.lattice.thetas, vec![Exponent::frac(3, 2)]);
    }

    #[test]
    fn rejects_inconsistent_input() {
        let ov = Overrides::default();
        let wrong_theta = PERIODIC.replace(r#""K":4"#, r#""K":4,"thetas":[1,3]"#);
        assert!(Scenario::from_json_str(&wrong_theta, &ov).is_err());
        let beta = PERIODIC.replace(r#""beta":1"#, r#""beta":"1/2""#);
        assert!(Scenario::from_json_str(&beta, &ov).is_err());
        let bad_c = PERIODIC.replace(r#""K":4"#, r#""K":4,"C":[[[1,0],[0,0]],[[0,0],[1,0]]]"#);
        assert!(Scenario::from_json_str(&bad_c, &ov).is_err());
        let low_k = Overrides { k: Some(Exponent::ONE), ..Default::default() };
        assert!(Scenario::from_json_str(PERIODIC, &low_k).is_err());
    }

    #[test]
    fn original_r_matches_model() {
        // R = x^-1 f' f^(-5/4) C + 4 x^-2 f^(-1/4) C for n = alpha = 4
        let s = Scenario::from_json_str(PERIODIC, &Overrides::default()).unwrap();
        let r = s.r_matrix().unwrap();
        let c01 = s.c.as_ref().unwrap()[0][1].clone();
        let want = ScalarExpr::monomial(c01.clone(), MonoKey::new((-1).into(), Exponent::frac(-5, 4), 1))
            .add(&ScalarExpr::monomial(
                c01.scale(&Rational::from(4)),
                MonoKey::new((-2).into(), Exponent::frac(-1, 4), 0),
            ));
        assert_eq!(r.get(0, 1), &want);
    }
}
