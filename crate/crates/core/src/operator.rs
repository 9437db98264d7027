//! Second-order finite-difference discretization of `L = -Δ + V` on the
//! periodic grid.
//!
//! `(Lf)_i = h^{-2} (2d f_i - Σ_{j~i} f_j) + V_i f_i`, with inner product
//! `<f, g> = h^d Σ f_i g_i`. Every grid point has `2d` neighbors (counted
//! with multiplicity when the grid has two points per side).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::inertia::InertiaCounter;
use crate::potential::PotentialField;

/// Default ceiling on degrees of freedom for the dense eigensolver.
pub const DEFAULT_DENSE_DOF_LIMIT: usize = 4096;

/// Relative tolerance (times the spectral radius bound) used for `λ ≤ μ`.
pub const COUNT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: TorusGrid,
    potential: PotentialField,
    inv_h2: f64,
}

impl DiscreteOperator {
    pub fn new(potential: &PotentialField) -> Self {
        let h = potential.grid().spacing();
        Self { grid: *potential.grid(), potential: potential.clone(), inv_h2: 1.0 / (h * h) }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn potential(&self) -> &PotentialField {
        &self.potential
    }

    /// `2d / h^2 + V_i`.
    pub fn diagonal(&self) -> Vec<f64> {
        let off = 2.0 * self.grid.dim() as f64 * self.inv_h2;
        self.potential.values().iter().map(|v| off + v).collect()
    }

    /// Gershgorin bound on the largest eigenvalue, `4d / h^2 + max V`.
    pub fn spectral_radius_bound(&self) -> f64 {
        4.0 * self.grid.dim() as f64 * self.inv_h2 + self.potential.max()
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.grid.check_len(f.len())?;
        let mut out = vec![0.0; f.len()];
        self.apply_into(f, &mut out);
        Ok(out)
    }

    /// Matrix-free stencil; `f` and `out` must have `total_points` entries.
    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let dim = g.dim();
        let side = g.points_per_side();
        let centre = 2.0 * dim as f64 * self.inv_h2;
        let v = self.potential.values();
        out.iter_mut()
            .zip(f.iter().zip(v))
            .for_each(|(o, (fi, vi))| *o = (centre + vi) * fi);
        for axis in 0..dim {
            let stride = g.stride(axis);
            let block = stride * side;
            // walk each periodic line along `axis`
            for base in (0..f.len()).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    let at = |k: usize| start + k * stride;
                    for k in 0..side {
                        let up = if k + 1 == side { 0 } else { k + 1 };
                        let down = if k == 0 { side - 1 } else { k - 1 };
                        out[at(k)] -= self.inv_h2 * (f[at(up)] + f[at(down)]);
                    }
                }
            }
        }
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.grid.cell_volume() * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `<Lf, f>` evaluated edge by edge:
    /// `h^d [ Σ_edges h^{-2} (f_i - f_j)^2 + Σ_i V_i f_i^2 ]`.
    pub fn quadratic_form(&self, f: &[f64]) -> Result<f64> {
        self.grid.check_len(f.len())?;
        let mut gradient = 0.0;
        for i in 0..f.len() {
            for axis in 0..self.grid.dim() {
                let j = self.grid.neighbor(i, axis, true);
                let d = f[i] - f[j];
                gradient += d * d;
            }
        }
        let potential: f64 = f.iter().zip(self.potential.values()).map(|(x, v)| v * x * x).sum();
        Ok(self.grid.cell_volume() * (self.inv_h2 * gradient + potential))
    }

    /// `<Lf, f>` through the stencil.
    pub fn form_via_apply(&self, f: &[f64]) -> Result<f64> {
        let lf = self.apply(f)?;
        Ok(self.inner(&lf, f))
    }

    /// Nonzero entries of the assembled matrix as `(row, col, value)`,
    /// duplicates merged, sorted by row then column.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let diag = self.diagonal();
        let mut entries = Vec::with_capacity(diag.len() * (2 * self.grid.dim() + 1));
        for (i, &d) in diag.iter().enumerate() {
            let mut row = vec![(i, d)];
            for axis in 0..self.grid.dim() {
                for forward in [true, false] {
                    let j = self.grid.neighbor(i, axis, forward);
                    match row.iter_mut().find(|(c, _)| *c == j) {
                        Some(e) => e.1 -= self.inv_h2,
                        None => row.push((j, -self.inv_h2)),
                    }
                }
            }
            row.sort_by_key(|e| e.0);
            entries.extend(row.into_iter().map(|(j, v)| (i, j, v)));
        }
        entries
    }

    /// Coordinate text dump, one `row col value` line per nonzero.
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(out, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }

    fn dense_matrix(&self) -> faer::Mat<f64> {
        let n = self.grid.total_points();
        let mut m = faer::Mat::<f64>::zeros(n, n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    Dense,
}

/// Sorted eigenvalues of the discrete operator, with multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: TorusGrid,
    eigenvalues: Vec<f64>,
    method: SpectrumMethod,
    tolerance: f64,
}

impl Spectrum {
    pub fn from_eigenvalues(grid: TorusGrid, mut eigenvalues: Vec<f64>, radius: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Self { grid, eigenvalues, method: SpectrumMethod::Dense, tolerance: COUNT_TOLERANCE * radius })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn method(&self) -> SpectrumMethod {
        self.method
    }

    pub fn dof(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Absolute slack used when comparing eigenvalues against `μ`.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Number of eigenvalues `≤ μ` (with multiplicity).
    pub fn count_below(&self, mu: f64) -> usize {
        let cut = mu + self.tolerance;
        self.eigenvalues.partition_point(|&l| l <= cut)
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

/// Full symmetric eigendecomposition of the assembled matrix.
pub fn eigen_dense(op: &DiscreteOperator, dof_limit: usize) -> Result<Spectrum> {
    let dof = op.grid().total_points();
    if dof > dof_limit {
        return Err(Error::TooLargeForDense { dof, limit: dof_limit });
    }
    let eigenvalues = op
        .dense_matrix()
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::EigenFailure(format!("{e:?}")))?;
    Spectrum::from_eigenvalues(*op.grid(), eigenvalues, op.spectral_radius_bound())
}

/// How `#{λ ≤ μ}` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum CountingBackend {
    /// Dense eigendecomposition, refused above `dof_limit`.
    Dense { dof_limit: usize },
    /// Sylvester inertia of a banded `LDLᵀ` factorization of `L - μ`.
    Inertia,
}

impl Default for CountingBackend {
    fn default() -> Self {
        Self::Dense { dof_limit: DEFAULT_DENSE_DOF_LIMIT }
    }
}

pub fn count_eigenvalues_below(op: &DiscreteOperator, mu: f64, backend: CountingBackend) -> Result<usize> {
    match backend {
        CountingBackend::Dense { dof_limit } => Ok(eigen_dense(op, dof_limit)?.count_below(mu)),
        CountingBackend::Inertia => Ok(InertiaCounter::new(op).count_below(mu)),
    }
}

/// Counts at many energies, reusing one factorization strategy.
pub fn counts_at(op: &DiscreteOperator, mus: &[f64], backend: CountingBackend) -> Result<Vec<usize>> {
    match backend {
        CountingBackend::Dense { dof_limit } => {
            let s = eigen_dense(op, dof_limit)?;
            Ok(mus.iter().map(|&m| s.count_below(m)).collect())
        }
        CountingBackend::Inertia => {
            let c = InertiaCounter::new(op);
            Ok(mus.iter().map(|&m| c.count_below(m)).collect())
        }
    }
}
