//! Counting functions per unit volume: the integrated density of states
//! `N(μ)`, the landscape cube count `N_u(μ)`, and the phase-space (Weyl)
//! predictors driven by `V` or by `W = 1/u`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CubePartition, Reduction, TorusGrid};
use crate::landscape::LandscapeField;
use crate::operator::Spectrum;

/// Relative tolerance of the constant fits.
pub const FIT_TOLERANCE: f64 = 1e-3;
/// Upper end of the constant search.
pub const DEFAULT_C_MAX: f64 = 1e3;
/// Default sampling density of geometric energy grids.
pub const DEFAULT_POINTS_PER_DECADE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Idos,
    LandscapeCount,
    WeylV,
    WeylW,
    EnsembleMean,
}

/// A counting function sampled on an ascending energy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingCurve {
    pub kind: CurveKind,
    pub mu: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<f64>>,
}

impl CountingCurve {
    pub fn new(kind: CurveKind, mu: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(mu.len(), values.len());
        Self { kind, mu, values, stderr: None }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Same curve multiplied by `factor` (e.g. `|Ω|` to undo normalization).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kind: self.kind,
            mu: self.mu.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            stderr: self.stderr.as_ref().map(|s| s.iter().map(|v| v * factor).collect()),
        }
    }

    /// `mu,value[,stderr]` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match &self.stderr {
            None => {
                writeln!(out, "mu,value")?;
                for (m, v) in self.mu.iter().zip(&self.values) {
                    writeln!(out, "{},{}", fmt17(*m), fmt17(*v))?;
                }
            }
            Some(se) => {
                writeln!(out, "mu,value,stderr")?;
                for ((m, v), s) in self.mu.iter().zip(&self.values).zip(se) {
                    writeln!(out, "{},{},{}", fmt17(*m), fmt17(*v), fmt17(*s))?;
                }
            }
        }
        Ok(())
    }
}

/// Decimal float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `count` energies from `lo` to `hi` (inclusive), geometrically spaced.
pub fn geometric_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && per_decade > 0) {
        return Err(Error::InvalidParameters(format!("bad energy grid [{lo}, {hi}] x {per_decade}/decade")));
    }
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).ceil().max(1.0) as usize;
    Ok((0..=steps)
        .map(|k| if k == steps { hi } else { lo * 10f64.powf(decades * k as f64 / steps as f64) })
        .collect())
}

/// Smallest energy whose counting cube fits in the domain, `1 / R0^2`.
pub fn smallest_admissible_mu(grid: &TorusGrid) -> f64 {
    let r0 = grid.side_length() as f64;
    1.0 / (r0 * r0)
}

/// `N(μ) = #{λ ≤ μ} / |Ω|`.
pub fn ids_curve(spectrum: &Spectrum, mu_grid: &[f64]) -> Result<CountingCurve> {
    if spectrum.dof() == 0 {
        return Err(Error::EmptySpectrum);
    }
    let volume = spectrum.grid().volume();
    let values = mu_grid.iter().map(|&m| spectrum.count_below(m) as f64 / volume).collect();
    Ok(CountingCurve::new(CurveKind::Idos, mu_grid.to_vec(), values))
}

/// Number of cubes `Q` of the partition at `μ` with `min_Q 1/u ≤ μ`.
///
/// When the cube side would fall below the grid spacing, every grid point
/// becomes its own cube.
pub fn landscape_cube_count(landscape: &LandscapeField, mu: f64) -> Result<usize> {
    let partition = CubePartition::new_saturating(landscape.grid(), mu)?;
    let w = landscape.effective_potential();
    let minima = partition.reduce_all(&w, Reduction::Min)?;
    Ok(minima.iter().filter(|&&m| m <= mu).count())
}

/// `N_u(μ)`: landscape cube count per unit volume.
pub fn landscape_count(landscape: &LandscapeField, mu: f64) -> Result<f64> {
    Ok(landscape_cube_count(landscape, mu)? as f64 / landscape.grid().volume())
}

pub fn landscape_curve(landscape: &LandscapeField, mu_grid: &[f64]) -> Result<CountingCurve> {
    let values = mu_grid.iter().map(|&m| landscape_count(landscape, m)).collect::<Result<_>>()?;
    Ok(CountingCurve::new(CurveKind::LandscapeCount, mu_grid.to_vec(), values))
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Phase-space predictor
/// `(2π)^{-d} ω_d |Ω|^{-1} ∫ (μ - W(x))_+^{d/2} dx`, as a Riemann sum over
/// grid points. With `W = V` this is the classical Weyl law, with
/// `W = 1/u` the landscape version.
pub fn weyl_predictor(grid: &TorusGrid, field: &[f64], mu: f64) -> Result<f64> {
    grid.check_len(field.len())?;
    let dim = grid.dim();
    let power = |x: f64| match dim {
        1 => x.sqrt(),
        2 => x,
        _ => x * x.sqrt(),
    };
    let coefficient = unit_ball_volume(dim) / (2.0 * std::f64::consts::PI).powi(dim as i32);
    // h^d * N / R0^d = 1, so the Riemann sum over |Ω| is the grid mean
    let mean = compensated_sum(field.iter().map(|w| power((mu - w).max(0.0)))) / field.len() as f64;
    Ok(coefficient * mean)
}

pub fn weyl_curve(grid: &TorusGrid, field: &[f64], mu_grid: &[f64], kind: CurveKind) -> Result<CountingCurve> {
    let values = mu_grid.iter().map(|&m| weyl_predictor(grid, field, m)).collect::<Result<_>>()?;
    Ok(CountingCurve::new(kind, mu_grid.to_vec(), values))
}

/// Smallest `C ∈ [1, c_max]` with `N(μ) ≤ N_u(Cμ)` at every sampled `μ`,
/// found by bisection to relative tolerance `rel_tol`.
pub fn fit_constant_upper_with<N, U>(
    mus: &[f64],
    counts: N,
    landscape_counts: U,
    c_max: f64,
    rel_tol: f64,
) -> Result<f64>
where
    N: Fn(usize) -> f64,
    U: Fn(f64) -> Result<f64>,
{
    let first_violation = |c: f64| -> Result<Option<f64>> {
        for (k, &mu) in mus.iter().enumerate() {
            if counts(k) > landscape_counts(c * mu)? {
                return Ok(Some(mu));
            }
        }
        Ok(None)
    };
    if first_violation(1.0)?.is_none() {
        return Ok(1.0);
    }
    if let Some(mu) = first_violation(c_max)? {
        return Err(Error::NoFiniteConstant { c_max, mu });
    }
    let (mut lo, mut hi) = (1.0, c_max);
    while (hi - lo) > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if first_violation(mid)?.is_none() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Fit the constant of the upper bound `N(μ) ≤ N_u(Cμ)` on
/// `μ ∈ [mu_range.0, mu_range.1]` of the given IDOS curve.
pub fn fit_constant_upper(
    curve_n: &CountingCurve,
    landscape: &LandscapeField,
    mu_range: (f64, f64),
    c_max: f64,
) -> Result<f64> {
    let (mus, values) = restrict(curve_n, mu_range);
    fit_constant_upper_with(&mus, |k| values[k], |m| landscape_count(landscape, m), c_max, FIT_TOLERANCE)
}

pub(crate) fn restrict(curve: &CountingCurve, (lo, hi): (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    curve
        .mu
        .iter()
        .zip(&curve.values)
        .filter(|(m, _)| **m >= lo && **m <= hi)
        .map(|(m, v)| (*m, *v))
        .unzip()
}

/// The two energies at which the lower bound reads `N_u`.
pub fn lower_bound_arguments(dim: usize, mu: f64, alpha: f64, c2: f64) -> (f64, f64) {
    let d = dim as i32;
    (c2 * alpha.powi(d + 2) * mu, c2 * alpha.powi(d + 4) * mu)
}

/// `C1 α^d N_u(C2 α^{d+2} μ) - C3 N_u(C2 α^{d+4} μ)`.
pub fn lower_bound_value(landscape: &LandscapeField, mu: f64, alpha: f64, c1: f64, c2: f64, c3: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0 / 16.0) {
        return Err(Error::InvalidParameters(format!("alpha must lie in (0, 1/16), got {alpha}")));
    }
    let dim = landscape.grid().dim();
    let (near, far) = lower_bound_arguments(dim, mu, alpha, c2);
    let first = landscape_count(landscape, near)?;
    let second = landscape_count(landscape, far)?;
    Ok(c1 * alpha.powi(dim as i32) * first - c3 * second)
}
