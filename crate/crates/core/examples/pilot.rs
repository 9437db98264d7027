//! Pilot constants for the landscape bounds on the 1D uniform fixture:
//! 20 realizations, R0 = 64, n = 8, μ ∈ [1/4096, 50].

use llab_core::counting::{fit_constant_upper, geometric_grid, ids_curve, DEFAULT_C_MAX, DEFAULT_POINTS_PER_DECADE};
use llab_core::landscape::solve_landscape;
use llab_core::lawcheck::{check_lower_general, fit_lower_c1, LowerConstants};
use llab_core::operator::eigen_dense;
use llab_core::potential::anderson_realization;
use llab_core::{DiscreteOperator, DistributionSpec, SolverOptions, TorusGrid};
use rayon::prelude::*;

const SEEDS: u64 = 20;
const ALPHA: f64 = 1.0 / 32.0;

fn main() -> llab_core::Result<()> {
    let grid = TorusGrid::new(1, 64, 8)?;
    let range = (1.0 / 4096.0, 50.0);
    let mus = geometric_grid(range.0, range.1, DEFAULT_POINTS_PER_DECADE)?;
    let fixtures: Vec<_> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let v = anderson_realization(&grid, &DistributionSpec::Uniform01, seed, 0)?;
            let op = DiscreteOperator::new(&v);
            let n = ids_curve(&eigen_dense(&op, 4096)?, &mus)?;
            let u = solve_landscape(&op, &SolverOptions::default())?;
            Ok((n, u))
        })
        .collect::<llab_core::Result<_>>()?;

    let c4: Vec<f64> = fixtures
        .iter()
        .map(|(n, u)| fit_constant_upper(n, u, range, DEFAULT_C_MAX))
        .collect::<llab_core::Result<_>>()?;
    println!("C4_hat per seed {c4:.4?}");
    println!("C4_hat max {:.6}", c4.iter().copied().fold(0.0, f64::max));

    // near argument = fraction * μ, far argument = fraction * α² μ
    for fraction in [1.0, 0.5, 0.25, 0.125] {
        let c2 = fraction / ALPHA.powi(3);
        for c3 in [0.0, 1.0] {
            let c1: Vec<f64> = fixtures
                .iter()
                .map(|(n, u)| fit_lower_c1(n, u, ALPHA, c2, c3, range))
                .collect::<llab_core::Result<_>>()?;
            let min = c1.iter().copied().fold(f64::INFINITY, f64::min);
            let checked = check_lower_general(&fixtures[0].0, &fixtures[0].1, LowerConstants { alpha: ALPHA, c1: min, c2, c3 }, range)?;
            println!(
                "fraction {fraction:<6} C2 {c2:<8} C3 {c3}: C1 min {min:.6} max {:.6}; rows {} excluded {}",
                c1.iter().copied().fold(0.0, f64::max),
                checked.rows.len(),
                checked.excluded.len()
            );
        }
    }
    Ok(())
}
