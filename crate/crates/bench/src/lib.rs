//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use asympt_core::scenario::Scenario;

/// Loads one of the shipped scenario files by file name.
pub fn shipped(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
