//! Verdicts for the two-sided landscape bounds, the doubling condition and
//! report-only diagnostics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::counting::{
    fit_constant_upper, landscape_count, lower_bound_arguments, restrict, CountingCurve, DEFAULT_C_MAX, FIT_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::grid::{CubePartition, TorusGrid};
use crate::landscape::{local_minima, LandscapeField};
use crate::operator::Spectrum;

/// Evaluate `N_u` at `mu`, mapping an inadmissible scale to `None`.
fn admissible_count(landscape: &LandscapeField, mu: f64) -> Result<Option<f64>> {
    match landscape_count(landscape, mu) {
        Ok(v) => Ok(Some(v)),
        Err(Error::ScaleExceedsDomain { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperRow {
    pub mu: f64,
    pub n: f64,
    pub argument: f64,
    pub n_u: f64,
    /// `N_u(C4 μ) - N(μ)`; nonnegative on pass.
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperCheck {
    pub c4: f64,
    pub rows: Vec<UpperRow>,
    /// Energies whose bound argument falls below the domain scale.
    pub excluded: Vec<f64>,
}

impl UpperCheck {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// `N(μ) ≤ N_u(C4 μ)` at every grid energy of `curve_n` inside `mu_range`.
pub fn check_upper(curve_n: &CountingCurve, landscape: &LandscapeField, c4: f64, mu_range: (f64, f64)) -> Result<UpperCheck> {
    if !(c4 > 0.0) {
        return Err(Error::NegativeConstant(c4));
    }
    let (mus, values) = restrict(curve_n, mu_range);
    let mut rows = Vec::with_capacity(mus.len());
    let mut excluded = Vec::new();
    for (mu, n) in mus.into_iter().zip(values) {
        let argument = c4 * mu;
        match admissible_count(landscape, argument)? {
            Some(n_u) => rows.push(UpperRow { mu, n, argument, n_u, slack: n_u - n, pass: n <= n_u }),
            None => excluded.push(mu),
        }
    }
    Ok(UpperCheck { c4, rows, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerConstants {
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl LowerConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0 / 16.0) {
            return Err(Error::InvalidParameters(format!("alpha must lie in (0, 1/16), got {}", self.alpha)));
        }
        for c in [self.c1, self.c2, self.c3] {
            if !(c >= 0.0) {
                return Err(Error::NegativeConstant(c));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerRow {
    pub mu: f64,
    pub n: f64,
    pub near_argument: f64,
    pub n_u_near: f64,
    pub far_argument: f64,
    pub n_u_far: f64,
    pub bound: f64,
    /// `N(μ) - bound`; nonnegative on pass.
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerCheck {
    pub constants: LowerConstants,
    pub rows: Vec<LowerRow>,
    pub excluded: Vec<f64>,
}

impl LowerCheck {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Rows of `(μ, N, N_u(near), N_u(far))` with both arguments admissible.
fn lower_reads(
    curve_n: &CountingCurve,
    landscape: &LandscapeField,
    alpha: f64,
    c2: f64,
    mu_range: (f64, f64),
) -> Result<(Vec<[f64; 6]>, Vec<f64>)> {
    let dim = landscape.grid().dim();
    let (mus, values) = restrict(curve_n, mu_range);
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (mu, n) in mus.into_iter().zip(values) {
        let (near, far) = lower_bound_arguments(dim, mu, alpha, c2);
        match (admissible_count(landscape, near)?, admissible_count(landscape, far)?) {
            (Some(a), Some(b)) => rows.push([mu, n, near, a, far, b]),
            _ => excluded.push(mu),
        }
    }
    Ok((rows, excluded))
}

/// `C1 α^d N_u(C2 α^{d+2} μ) - C3 N_u(C2 α^{d+4} μ) ≤ N(μ)` on `mu_range`.
pub fn check_lower_general(
    curve_n: &CountingCurve,
    landscape: &LandscapeField,
    constants: LowerConstants,
    mu_range: (f64, f64),
) -> Result<LowerCheck> {
    constants.validate()?;
    let LowerConstants { alpha, c1, c2, c3 } = constants;
    let scale = alpha.powi(landscape.grid().dim() as i32);
    let (reads, excluded) = lower_reads(curve_n, landscape, alpha, c2, mu_range)?;
    let rows = reads
        .into_iter()
        .map(|[mu, n, near_argument, n_u_near, far_argument, n_u_far]| {
            let bound = c1 * scale * n_u_near - c3 * n_u_far;
            LowerRow { mu, n, near_argument, n_u_near, far_argument, n_u_far, bound, slack: n - bound, pass: bound <= n }
        })
        .collect();
    Ok(LowerCheck { constants, rows, excluded })
}

/// Largest `C1` for which the lower bound holds at every admissible row,
/// given `α`, `C2`, `C3`. Infinite when `N_u` at the near argument vanishes
/// on the whole range.
pub fn fit_lower_c1(
    curve_n: &CountingCurve,
    landscape: &LandscapeField,
    alpha: f64,
    c2: f64,
    c3: f64,
    mu_range: (f64, f64),
) -> Result<f64> {
    LowerConstants { alpha, c1: 0.0, c2, c3 }.validate()?;
    let scale = alpha.powi(landscape.grid().dim() as i32);
    let (reads, _) = lower_reads(curve_n, landscape, alpha, c2, mu_range)?;
    Ok(reads
        .iter()
        .filter(|r| r[3] > 0.0)
        .map(|[_, n, _, near, _, far]| (n + c3 * far) / (scale * near))
        .fold(f64::INFINITY, f64::min))
}

/// Largest `C ∈ [c_min, 1]` with `N_u(C μ) ≤ N(μ)` at every row whose
/// argument is admissible, by bisection in `log C`.
pub fn fit_lower_c2_prime(
    curve_n: &CountingCurve,
    landscape: &LandscapeField,
    mu_range: (f64, f64),
    c_min: f64,
) -> Result<f64> {
    if !(c_min > 0.0 && c_min <= 1.0) {
        return Err(Error::InvalidParameters(format!("c_min must lie in (0, 1], got {c_min}")));
    }
    let (mus, values) = restrict(curve_n, mu_range);
    let violation = |c: f64| -> Result<Option<f64>> {
        for (&mu, &n) in mus.iter().zip(&values) {
            if let Some(n_u) = admissible_count(landscape, c * mu)? {
                if n_u > n {
                    return Ok(Some(mu));
                }
            }
        }
        Ok(None)
    };
    if violation(1.0)?.is_none() {
        return Ok(1.0);
    }
    if let Some(mu) = violation(c_min)? {
        return Err(Error::NoFiniteConstant { c_max: 1.0 / c_min, mu });
    }
    let (mut lo, mut hi) = (c_min.ln(), 0.0f64);
    while hi - lo > FIT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if violation(mid.exp())?.is_none() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.exp())
}

/// Number of grid points spanned by a cube of side `s`.
fn resolve_side(grid: &TorusGrid, s: f64) -> Result<usize> {
    let exact = s * grid.points_per_unit() as f64;
    let k = exact.round();
    if !(s > 0.0) || k < 1.0 || (exact - k).abs() > 1e-9 * exact.max(1.0) {
        return Err(Error::CubeUnresolvable(format!("side {s} is not a multiple of the spacing {}", grid.spacing())));
    }
    let k = k as usize;
    if 2 * k > grid.points_per_side() {
        return Err(Error::CubeUnresolvable(format!("doubled side {} exceeds the domain {}", 2.0 * s, grid.side_length())));
    }
    Ok(k)
}

/// `h^d Σ u²` over the cube with per-axis coordinate ranges
/// `[start_a, start_a + len_a)`, wrapped.
fn cube_sum_sq(grid: &TorusGrid, u: &[f64], start: &[isize], len: &[usize]) -> f64 {
    let dim = grid.dim();
    let total: usize = len[..dim].iter().product();
    let mut coords = [0isize; 3];
    let mut sum = 0.0;
    for flat in 0..total {
        let mut rest = flat;
        for a in (0..dim).rev() {
            coords[a] = start[a] + (rest % len[a]) as isize;
            rest /= len[a];
        }
        let v = u[grid.index_wrapped(&coords[..dim])];
        sum += v * v;
    }
    sum * grid.cell_volume()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingRow {
    pub center: usize,
    pub s: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub c_d_hat: f64,
    pub rows: Vec<DoublingRow>,
}

/// `∫_{Q_2s} u² / (∫_{Q_s} u² + s^{d+4})` for cubes of side `s` centered
/// at every point of the subgrid with stride `s` (or at `centers`, when
/// given). Both cubes share a center; an even point count puts the extra
/// point on the low side.
pub fn check_doubling(landscape: &LandscapeField, s_values: &[f64], centers: Option<&[usize]>) -> Result<DoublingReport> {
    let grid = landscape.grid();
    let dim = grid.dim();
    let u = landscape.u();
    let mut rows = Vec::new();
    for &s in s_values {
        let k = resolve_side(grid, s)?;
        let sampled: Vec<usize> = match centers {
            Some(c) => c.to_vec(),
            None => {
                let side = grid.points_per_side();
                (0..grid.total_points())
                    .filter(|&i| grid.coords(i)[..dim].iter().all(|&x| x % k == 0) && side > 0)
                    .collect()
            }
        };
        let floor = s.powi(dim as i32 + 4);
        for center in sampled {
            if center >= grid.total_points() {
                return Err(Error::InvalidParameters(format!("center {center} is off the grid")));
            }
            let c = grid.coords(center);
            let mut small = [0isize; 3];
            let mut large = [0isize; 3];
            for a in 0..dim {
                small[a] = c[a] as isize - (k / 2) as isize;
                large[a] = c[a] as isize - k as isize;
            }
            let inner = cube_sum_sq(grid, u, &small, &[k; 3]);
            let outer = cube_sum_sq(grid, u, &large, &[2 * k; 3]);
            rows.push(DoublingRow { center, s, ratio: outer / (inner + floor) });
        }
    }
    let c_d_hat = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(DoublingReport { c_d_hat, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimaRatio {
    pub index: usize,
    pub eigenvalue: f64,
    pub minimum: f64,
    pub ratio: f64,
}

/// `λ_j / ((1 + d/4) w_j)` with `w_j` the j-th smallest local minimum of
/// the effective potential.
pub fn minima_ratio_diagnostic(spectrum: &Spectrum, landscape: &LandscapeField, count: usize) -> Result<Vec<MinimaRatio>> {
    let grid = landscape.grid();
    let minima = local_minima(grid, &landscape.effective_potential())?;
    let available = minima.len().min(spectrum.dof());
    if count > available {
        return Err(Error::InsufficientMinima { requested: count, available });
    }
    let factor = 1.0 + grid.dim() as f64 / 4.0;
    Ok((0..count)
        .map(|j| {
            let (eigenvalue, minimum) = (spectrum.eigenvalues()[j], minima[j]);
            MinimaRatio { index: j, eigenvalue, minimum, ratio: eigenvalue / (factor * minimum) }
        })
        .collect())
}

/// `max_Q sup_Q u / ((|Q|^{-1} ∫_{2Q} u²)^{1/2} + l(Q)²)` over the cubes of
/// `partition`, where `2Q` is the concentric cube of twice the side.
pub fn moser_harnack_probe(landscape: &LandscapeField, partition: &CubePartition) -> Result<f64> {
    let grid = landscape.grid();
    if partition.grid() != grid {
        return Err(Error::GridMismatch { expected: grid.total_points(), found: partition.grid().total_points() });
    }
    let dim = grid.dim();
    let side = grid.points_per_side();
    let m = partition.cubes_per_side();
    let h = grid.spacing();
    let u = landscape.u();
    let sup = partition.reduce_all(u, crate::grid::Reduction::Max)?;
    let mut best = f64::NEG_INFINITY;
    for (cube, &top) in sup.iter().enumerate() {
        let mut rest = cube;
        let mut start = [0isize; 3];
        let mut len = [1usize; 3];
        let mut volume = 1.0;
        let mut longest = 0usize;
        for a in (0..dim).rev() {
            let b = rest % m;
            rest /= m;
            let (s, l) = partition.block_range(a, b);
            if 2 * l > side {
                return Err(Error::CubeUnresolvable(format!("doubled cube of {l} points exceeds the ring of {side}")));
            }
            start[a] = s as isize - (l / 2) as isize;
            len[a] = 2 * l;
            volume *= l as f64 * h;
            longest = longest.max(l);
        }
        let mass = cube_sum_sq(grid, u, &start, &len);
        let edge = longest as f64 * h;
        best = best.max(top / ((mass / volume).sqrt() + edge * edge));
    }
    Ok(best)
}

/// `C2 = α^{-(d+2)}`: the near argument of the lower bound is `μ` itself
/// and the far one `α² μ`.
pub fn unit_near_c2(dim: usize, alpha: f64) -> f64 {
    alpha.powi(-(dim as i32 + 2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawParams {
    pub mu_range: (f64, f64),
    /// Upper constant; fitted when absent.
    pub c4: Option<f64>,
    pub alpha: f64,
    /// Lower constant; fitted when absent.
    pub c1: Option<f64>,
    /// Defaults to `α^{-(d+2)}`, which places the near argument at `μ`.
    pub c2: Option<f64>,
    pub c3: f64,
    pub c_max: f64,
    pub c2_prime_min: f64,
    pub doubling_s: Vec<f64>,
    /// Energy fixing the partition of the Harnack probe.
    pub harnack_mu: Option<f64>,
}

impl Default for LawParams {
    fn default() -> Self {
        Self {
            mu_range: (0.0, f64::INFINITY),
            c4: None,
            alpha: 1.0 / 32.0,
            c1: None,
            c2: None,
            c3: 1.0,
            c_max: DEFAULT_C_MAX,
            c2_prime_min: 1e-6,
            doubling_s: Vec::new(),
            harnack_mu: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedConstants {
    pub c4_hat: Option<f64>,
    pub c1_hat: Option<f64>,
    pub c2_prime_hat: Option<f64>,
    pub c_d_hat: Option<f64>,
    pub c_h_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub upper: bool,
    pub lower: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub potential_sha256: Option<String>,
    pub landscape_sha256: Option<String>,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub realization: Option<u64>,
    pub solver_tolerance: f64,
    pub count_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub params: LawParams,
    pub upper: UpperCheck,
    pub lower: LowerCheck,
    pub constants: FittedConstants,
    pub verdicts: Verdicts,
    pub doubling: Option<DoublingReport>,
    pub provenance: ReportProvenance,
}

/// Evaluate both bounds, fitting whichever constants `params` leaves open,
/// and attach the doubling and Harnack probes when requested.
pub fn law_report(
    curve_n: &CountingCurve,
    landscape: &LandscapeField,
    params: &LawParams,
    provenance: ReportProvenance,
) -> Result<LawReport> {
    let fitted_c4 = fit_constant_upper(curve_n, landscape, params.mu_range, params.c_max).ok();
    let c4 = params.c4.or(fitted_c4).ok_or(Error::NoFiniteConstant { c_max: params.c_max, mu: params.mu_range.0 })?;
    let upper = check_upper(curve_n, landscape, c4, params.mu_range)?;

    let c2 = params.c2.unwrap_or_else(|| unit_near_c2(landscape.grid().dim(), params.alpha));
    let fitted_c1 = fit_lower_c1(curve_n, landscape, params.alpha, c2, params.c3, params.mu_range)?;
    // an unbounded fit means the near read vanishes everywhere; any C1 works
    let c1 = params.c1.unwrap_or(if fitted_c1.is_finite() { fitted_c1 } else { 0.0 });
    let constants = LowerConstants { alpha: params.alpha, c1, c2, c3: params.c3 };
    let lower = check_lower_general(curve_n, landscape, constants, params.mu_range)?;

    let c2_prime_hat = fit_lower_c2_prime(curve_n, landscape, params.mu_range, params.c2_prime_min).ok();
    let doubling = if params.doubling_s.is_empty() {
        None
    } else {
        Some(check_doubling(landscape, &params.doubling_s, None)?)
    };
    let c_h_hat = match params.harnack_mu {
        Some(mu) => Some(moser_harnack_probe(landscape, &CubePartition::new(landscape.grid(), mu)?)?),
        None => None,
    };
    let verdicts = Verdicts { upper: upper.passed(), lower: lower.passed() };
    Ok(LawReport {
        params: params.clone(),
        constants: FittedConstants {
            c4_hat: fitted_c4,
            c1_hat: fitted_c1.is_finite().then_some(fitted_c1),
            c2_prime_hat,
            c_d_hat: doubling.as_ref().map(|d| d.c_d_hat),
            c_h_hat,
        },
        upper,
        lower,
        verdicts,
        doubling,
        provenance,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"))
}

impl LawReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Aligned plain-text summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let c = &self.constants;
        let _ = writeln!(out, "upper bound     {}", if self.verdicts.upper { "PASS" } else { "FAIL" });
        let _ = writeln!(out, "lower bound     {}", if self.verdicts.lower { "PASS" } else { "FAIL" });
        let _ = writeln!(out, "C4 used         {:.6e}", self.upper.c4);
        let _ = writeln!(out, "C1 used         {:.6e}", self.lower.constants.c1);
        let _ = writeln!(out, "C4_hat          {}", opt(c.c4_hat));
        let _ = writeln!(out, "C1_hat          {}", opt(c.c1_hat));
        let _ = writeln!(out, "C2'_hat         {}", opt(c.c2_prime_hat));
        let _ = writeln!(out, "C_D_hat         {}", opt(c.c_d_hat));
        let _ = writeln!(out, "C_H_hat         {}", opt(c.c_h_hat));
        let _ = writeln!(out, "excluded        {} upper, {} lower", self.upper.excluded.len(), self.lower.excluded.len());
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:>14} {:>14} {:>14} {:>14} {:>14} {:>5}",
            "mu", "N", "N_u(C4 mu)", "upper slack", "lower slack", "ok"
        );
        for (k, row) in self.upper.rows.iter().enumerate() {
            let lower = self.lower.rows.iter().find(|r| r.mu == row.mu);
            let ok = row.pass && lower.is_none_or(|r| r.pass);
            let _ = writeln!(
                out,
                "{:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14} {:>5}",
                row.mu,
                row.n,
                row.n_u,
                row.slack,
                lower.map_or_else(|| "-".to_string(), |r| format!("{:.6e}", r.slack)),
                if ok { "yes" } else { "no" }
            );
            let _ = k;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::{geometric_grid, ids_curve};
    use crate::landscape::{solve_landscape, SolverOptions};
    use crate::operator::{eigen_dense, DiscreteOperator};
    use crate::potential::{anderson_realization, constant_potential, cosine_potential, DistributionSpec};
    use proptest::prelude::*;

    fn flat_landscape(dim: usize, r0: usize, n: usize, value: f64) -> LandscapeField {
        let g = TorusGrid::new(dim, r0, n).unwrap();
        LandscapeField::from_parts(g, vec![value; g.total_points()], 0.0, 0).unwrap()
    }

    fn uniform_fixture(seed: u64) -> (CountingCurve, LandscapeField, Spectrum) {
        let g = TorusGrid::new(1, 64, 8).unwrap();
        let v = anderson_realization(&g, &DistributionSpec::Uniform01, seed, 0).unwrap();
        let op = DiscreteOperator::new(&v);
        let s = eigen_dense(&op, 4096).unwrap();
        let u = solve_landscape(&op, &SolverOptions::default()).unwrap();
        let mus = geometric_grid(1.0 / 4096.0, 50.0, 16).unwrap();
        (ids_curve(&s, &mus).unwrap(), u, s)
    }

    #[test]
    fn fitted_upper_constant_passes_and_tiny_constant_fails() {
        let (n, u, _) = uniform_fixture(4);
        let range = (1.0 / 4096.0, 50.0);
        let c4 = fit_constant_upper(&n, &u, range, DEFAULT_C_MAX).unwrap();
        let check = check_upper(&n, &u, c4, range).unwrap();
        assert!(check.passed());
        assert!(check.excluded.is_empty());
        let tiny = check_upper(&n, &u, 0.01, range).unwrap();
        assert!(!tiny.passed());
        // the smallest energies drop out once scaled below the domain scale
        assert!(!tiny.excluded.is_empty());
        assert!(tiny.rows.iter().all(|r| r.argument >= 1.0 / 4096.0));
    }

    #[test]
    fn flat_potential_below_spectrum_passes_trivially() {
        let g = TorusGrid::new(1, 16, 4).unwrap();
        let op = DiscreteOperator::new(&constant_potential(&g, 1.0).unwrap());
        let u = solve_landscape(&op, &SolverOptions::default()).unwrap();
        let s = eigen_dense(&op, 4096).unwrap();
        let mus = geometric_grid(0.01, 0.5, 8).unwrap();
        let n = ids_curve(&s, &mus).unwrap();
        let check = check_upper(&n, &u, 1.5, (0.0, 1.0)).unwrap();
        assert!(check.passed());
        assert!(check.rows.iter().all(|r| r.n == 0.0 && r.n_u == 0.0));
    }

    #[test]
    fn lower_bound_degenerate_constants() {
        let (n, u, _) = uniform_fixture(2);
        let range = (1.0 / 4096.0, 50.0);
        let zero = LowerConstants { alpha: 1.0 / 32.0, c1: 0.0, c2: 32f64.powi(5), c3: 1.0 };
        let check = check_lower_general(&n, &u, zero, range).unwrap();
        assert!(check.passed());
        assert!(check.rows.iter().all(|r| r.bound <= 0.0));
        let bad = LowerConstants { alpha: 1.0 / 16.0, ..zero };
        assert!(check_lower_general(&n, &u, bad, range).is_err());
    }

    #[test]
    fn fitted_lower_constant_is_tight() {
        let (n, u, _) = uniform_fixture(3);
        let range = (1.0 / 4096.0, 50.0);
        let c2 = unit_near_c2(1, 1.0 / 32.0);
        let c1 = fit_lower_c1(&n, &u, 1.0 / 32.0, c2, 1.0, range).unwrap();
        assert!(c1.is_finite() && c1 > 0.0);
        let at = |c1| check_lower_general(&n, &u, LowerConstants { alpha: 1.0 / 32.0, c1, c2, c3: 1.0 }, range).unwrap();
        assert!(at(c1).passed());
        assert!(!at(c1 * 1.001).passed());
    }

    #[test]
    fn lower_bound_zero_reads() {
        // N_u vanishes below min W = 1, so a small window is trivially fine
        let g = TorusGrid::new(1, 64, 8).unwrap();
        let op = DiscreteOperator::new(&constant_potential(&g, 1.0).unwrap());
        let u = solve_landscape(&op, &SolverOptions::default()).unwrap();
        let mus = vec![1e-3, 1e-4 * 5.0];
        let n = CountingCurve::new(crate::counting::CurveKind::Idos, vec![1.0 / 4096.0, 5e-4], vec![0.0, 0.0]);
        let _ = mus;
        let c = LowerConstants { alpha: 1.0 / 32.0, c1: 1e6, c2: 1.0, c3: 1.0 };
        let check = check_lower_general(&n, &u, c, (0.0, 1.0)).unwrap();
        assert!(check.passed());
        assert!(check.rows.iter().all(|r| r.n_u_near == 0.0 && r.n_u_far == 0.0));
    }

    #[test]
    fn doubling_closed_form() {
        for dim in 1..=3 {
            let u = flat_landscape(dim, 8, 4, 1.0);
            let s_values = [0.25, 0.5, 1.0, 1.5, 2.0, 4.0];
            let report = check_doubling(&u, &s_values, None).unwrap();
            for row in &report.rows {
                let expect = 2f64.powi(dim as i32) / (1.0 + row.s.powi(4));
                assert!((row.ratio - expect).abs() <= 1e-12 * expect, "d {dim} s {}: {}", row.s, row.ratio);
            }
            let best = 2f64.powi(dim as i32) / (1.0 + 0.25f64.powi(4));
            assert!((report.c_d_hat - best).abs() <= 1e-12 * best);
        }
    }

    #[test]
    fn doubling_small_side_limit() {
        let u = flat_landscape(1, 4, 1024, 1.0);
        let mut prev = 0.0;
        for k in [64, 16, 4, 1] {
            let s = k as f64 / 1024.0;
            let r = check_doubling(&u, &[s], Some(&[0])).unwrap().c_d_hat;
            assert!(r > prev && r < 2.0);
            prev = r;
        }
        assert!(2.0 - prev < 1e-10);
    }

    #[test]
    fn doubling_rejects_unresolvable_sides() {
        let u = flat_landscape(1, 4, 4, 1.0);
        assert!(matches!(check_doubling(&u, &[0.3], None), Err(Error::CubeUnresolvable(_))));
        assert!(matches!(check_doubling(&u, &[2.25], None), Err(Error::CubeUnresolvable(_))));
        assert!(check_doubling(&u, &[2.0], None).is_ok());
    }

    #[test]
    fn doubling_is_stable_under_refinement() {
        let at = |n: usize| {
            let g = TorusGrid::new(1, 8, n).unwrap();
            let op = DiscreteOperator::new(&cosine_potential(&g, 1.0).unwrap());
            let u = solve_landscape(&op, &SolverOptions::default()).unwrap();
            check_doubling(&u, &[0.5, 1.0, 2.0], None).unwrap().c_d_hat
        };
        let (coarse, fine) = (at(8), at(16));
        assert!((coarse / fine - 1.0).abs() < 0.1, "{coarse} vs {fine}");
    }

    #[test]
    fn minima_ratio_flat_ground_state() {
        for dim in 1..=2 {
            let g = TorusGrid::new(dim, 4, 2).unwrap();
            let op = DiscreteOperator::new(&constant_potential(&g, 0.7).unwrap());
            let s = eigen_dense(&op, 4096).unwrap();
            let u = solve_landscape(&op, &SolverOptions::default()).unwrap();
            let table = minima_ratio_diagnostic(&s, &u, 1).unwrap();
            assert!((table[0].minimum - 0.7).abs() < 1e-9);
            assert!((table[0].eigenvalue - 0.7).abs() < 1e-9);
            assert!((table[0].ratio - 1.0 / (1.0 + dim as f64 / 4.0)).abs() < 1e-8);
            assert!(matches!(minima_ratio_diagnostic(&s, &u, 2), Err(Error::InsufficientMinima { .. })));
        }
    }

    #[test]
    fn harnack_constant_function() {
        for dim in 1..=2 {
            // R0 = 4 and μ = 1 give unit cubes
            let u = flat_landscape(dim, 4, 4, 1.0);
            let p = CubePartition::new(u.grid(), 1.0).unwrap();
            assert_eq!(p.nominal_side(), 1.0);
            let got = moser_harnack_probe(&u, &p).unwrap();
            let expect = 1.0 / (2f64.powf(dim as f64 / 2.0) + 1.0);
            assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
        }
        // large constant: the side correction becomes negligible
        let u = flat_landscape(1, 4, 4, 1e8);
        let p = CubePartition::new(u.grid(), 1.0).unwrap();
        let got = moser_harnack_probe(&u, &p).unwrap();
        assert!((got * 2f64.sqrt() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn harnack_anderson_is_finite_and_stable() {
        let at = |n: usize| {
            let g = TorusGrid::new(1, 32, n).unwrap();
            let v = anderson_realization(&g, &DistributionSpec::Uniform01, 8, 0).unwrap();
            let u = solve_landscape(&DiscreteOperator::new(&v), &SolverOptions::default()).unwrap();
            moser_harnack_probe(&u, &CubePartition::new(&g, 1.0 / 16.0).unwrap()).unwrap()
        };
        let (a, b) = (at(10), at(20));
        assert!(a.is_finite() && b.is_finite());
        assert!((a / b - 1.0).abs() < 0.1, "{a} vs {b}");
    }

    #[test]
    fn report_is_deterministic() {
        let (n, u, _) = uniform_fixture(5);
        let params = LawParams { mu_range: (1.0 / 4096.0, 50.0), doubling_s: vec![1.0, 2.0], harnack_mu: Some(0.01), ..LawParams::default() };
        let a = law_report(&n, &u, &params, ReportProvenance::default()).unwrap();
        let b = law_report(&n, &u, &params, ReportProvenance::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.summary(), b.summary());
        assert!(a.verdicts.upper && a.verdicts.lower);
        let back: LawReport = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn fitted_upper_always_checks(seed in 0u64..1000) {
            let g = TorusGrid::new(1, 16, 4).unwrap();
            let v = anderson_realization(&g, &DistributionSpec::Uniform01, seed, 0).unwrap();
            let op = DiscreteOperator::new(&v);
            let s = eigen_dense(&op, 4096).unwrap();
            let u = solve_landscape(&op, &SolverOptions::default()).unwrap();
            let mus = geometric_grid(1.0 / 256.0, 20.0, 16).unwrap();
            let n = ids_curve(&s, &mus).unwrap();
            let range = (1.0 / 256.0, 20.0);
            let c4 = fit_constant_upper(&n, &u, range, DEFAULT_C_MAX).unwrap();
            prop_assert!(check_upper(&n, &u, c4, range).unwrap().passed());
        }
    }
}
