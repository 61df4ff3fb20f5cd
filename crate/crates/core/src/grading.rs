//! The order-of-magnitude lattice.
//!
//! Every perturbation block is graded by the exponent `s` in `O(x^-s)`. The
//! admissible grades are the sums `n1*theta1 + ... + nN*thetaN` with `n1 >= 1`
//! and `nj >= 0`. The lattice keeps every such value below the accuracy
//! target `K` plus exactly one value at or above it, so that
//! `sigma_L < K <= sigma_{L+1}` and `M = L + 1`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::Exponent;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaLattice {
    pub thetas: Vec<Exponent>,
    /// Accuracy target `K`.
    #[serde(rename = "K")]
    pub k: Exponent,
    /// `sigma_1 < sigma_2 < ... < sigma_{L+1}`.
    pub sigmas: Vec<Exponent>,
    /// Number of lattice values strictly below `K`.
    #[serde(rename = "L")]
    pub l: usize,
    /// Index of the final system, `L + 1`.
    #[serde(rename = "M")]
    pub m: usize,
}

impl SigmaLattice {
    pub fn build(thetas: &[Exponent], k: Exponent) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::InvalidLattice("no exponents theta given".into()));
        }
        if let Some(t) = thetas.iter().find(|t| !t.is_positive()) {
            return Err(Error::InvalidLattice(format!("theta {t} is not positive")));
        }
        if thetas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidLattice("thetas must be strictly increasing".into()));
        }
        if !k.is_positive() {
            return Err(Error::InvalidLattice(format!("K = {k} must be positive")));
        }
        if k <= thetas[0] {
            return Err(Error::InvalidLattice(format!(
                "K = {k} does not exceed theta1 = {}; no transformation is needed",
                thetas[0]
            )));
        }

        // n1 = ceil(K/theta1), nj = 0 is a lattice value >= K, so enumerating
        // up to it always reaches sigma_{L+1}.
        let ceiling = thetas[0] * (k * thetas[0].recip().unwrap()).ceil();
        let mut sums = BTreeSet::new();
        enumerate_sums(thetas, 0, Exponent::ZERO, ceiling, &mut sums);

        let mut sigmas = Vec::new();
        for s in sums {
            sigmas.push(s);
            if s >= k {
                break;
            }
        }
        let l = sigmas.len() - 1;
        Ok(SigmaLattice { thetas: thetas.to_vec(), k, sigmas, l, m: l + 1 })
    }

    /// `sigma_index` for `1 <= index <= L + 1`.
    pub fn sigma(&self, index: usize) -> Option<Exponent> {
        index.checked_sub(1).and_then(|i| self.sigmas.get(i).copied())
    }

    /// A valid lower bound for `sigma_index` at any positive index. Beyond the
    /// stored range this is `sigma_{L+1}`, which already meets `K`.
    pub fn grade_floor(&self, index: usize) -> Exponent {
        assert!(index >= 1, "lattice indices start at 1");
        self.sigma(index).unwrap_or_else(|| *self.sigmas.last().unwrap())
    }

    /// Inverse lookup `sigma_k -> k`.
    pub fn order_index(&self, e: Exponent) -> Option<usize> {
        self.sigmas.binary_search(&e).ok().map(|i| i + 1)
    }

    pub fn below_target(&self, e: Exponent) -> bool {
        e < self.k
    }
}

fn enumerate_sums(
    thetas: &[Exponent],
    j: usize,
    partial: Exponent,
    ceiling: Exponent,
    out: &mut BTreeSet<Exponent>,
) {
    if j == thetas.len() {
        if partial.is_positive() && partial <= ceiling {
            out.insert(partial);
        }
        return;
    }
    // theta1 must appear at least once
    let mut n = if j == 0 { 1 } else { 0 };
    loop {
        let s = partial + thetas[j] * n;
        if s > ceiling {
            break;
        }
        enumerate_sums(thetas, j + 1, s, ceiling, out);
        n += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(s: &str) -> Exponent {
        s.parse().unwrap()
    }

    #[test]
    fn integer_pair_gives_consecutive_integers() {
        let lat = SigmaLattice::build(&[ex("1"), ex("2")], ex("4")).unwrap();
        assert_eq!(lat.sigmas, vec![ex("1"), ex("2"), ex("3"), ex("4")]);
        assert_eq!((lat.l, lat.m), (3, 4));
    }

    #[test]
    fn order_index_lookups() {
        let lat = SigmaLattice::build(&[ex("1"), ex("2")], ex("4")).unwrap();
        assert_eq!(lat.order_index(ex("3")), Some(3));
        assert_eq!(lat.order_index(ex("7/2")), None);
        let lat = SigmaLattice::build(&[ex("3/2"), ex("2")], ex("6")).unwrap();
        assert_eq!(lat.order_index(ex("7/2")), Some(3));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SigmaLattice::build(&[], ex("4")).is_err());
        assert!(SigmaLattice::build(&[ex("1")], ex("0")).is_err());
        assert!(SigmaLattice::build(&[ex("-1"), ex("2")], ex("4")).is_err());
        assert!(SigmaLattice::build(&[ex("2"), ex("1")], ex("4")).is_err());
        assert!(SigmaLattice::build(&[ex("1"), ex("2")], ex("1")).is_err());
        assert!(SigmaLattice::build(&[ex("1"), ex("2")], ex("1/2")).is_err());
    }

    #[test]
    fn grade_floor_clamps_above_range() {
        let lat = SigmaLattice::build(&[ex("1"), ex("2")], ex("4")).unwrap();
        assert_eq!(lat.grade_floor(2), ex("2"));
        assert_eq!(lat.grade_floor(9), ex("4"));
    }

    #[test]
    fn json_shape() {
        let lat = SigmaLattice::build(&[ex("3/2")], ex("3")).unwrap();
        let json = serde_json::to_string(&lat).unwrap();
        assert_eq!(json, r#"{"thetas":["3/2"],"K":"3","sigmas":["3/2","3"],"L":1,"M":2}"#);
    }
}
