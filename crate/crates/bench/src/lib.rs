//! Fixtures shared by the benchmarks.

use llab_core::potential::anderson_realization;
use llab_core::{DistributionSpec, PotentialField, TorusGrid};

/// Uniform Anderson realization on `[0, r0)^dim` with `n` points per unit.
pub fn uniform_fixture(dim: usize, r0: usize, n: usize) -> PotentialField {
    let grid = TorusGrid::new(dim, r0, n).expect("valid grid");
    anderson_realization(&grid, &DistributionSpec::Uniform01, 1, 0).expect("valid law")
}
