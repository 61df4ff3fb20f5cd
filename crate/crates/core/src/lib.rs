//! Asymptotic solutions of `Z' = rho (D + R) Z` by repeated near-diagonalization.
//!
//! The crate is layered: [`grading`] builds the order lattice, [`ncalg`]
//! produces the stage templates over noncommuting symbols, [`diagflow`]
//! substitutes concrete matrices, [`bounds`] certifies the final error
//! matrix and [`solve`] evaluates solutions numerically.

pub mod bounds;
pub mod cyclo;
pub mod diagflow;
pub mod error;
pub mod exponent;
pub mod grading;
pub mod hp;
pub mod matrix;
pub mod ncalg;
pub mod scalar;
pub mod scenario;
pub mod solve;

pub use bounds::{bound_final_error, BoundReport, BoundStrategy};
pub use cyclo::{Cyclo, CycloField};
pub use diagflow::{run_pipeline, Pipeline, StageState};
pub use error::{Error, Result};
pub use exponent::Exponent;
pub use grading::SigmaLattice;
pub use hp::{HpComplex, HpMatrix, UpperBound};
pub use matrix::FunMatrix;
pub use ncalg::{build_templates, NCExpr, NCSymbol, StagePlan};
pub use scalar::{FModel, ScalarExpr};
pub use scenario::{Overrides, Scenario, ScenarioKind};
pub use solve::{AsymSolution, OracleComparison, Solver};
