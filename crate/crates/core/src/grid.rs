//! Periodic lattice geometry and the cube partitions used by the landscape
//! counting function.
//!
//! Grid points are stored in row-major order: the last axis varies fastest.
//! A point with lattice coordinates `(c_0, .., c_{d-1})` sits at physical
//! position `c_k * h` along axis `k`, where `h = 1 / n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Lattice coordinates; entries beyond `dim` are zero.
pub type Coords = [usize; MAX_DIM];

/// Uniform periodic grid on the torus `[0, R0)^d` with spacing `1/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    side_length: usize,
    points_per_unit: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, side_length: usize, points_per_unit: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        if side_length < 1 {
            return Err(Error::InvalidResolution(format!(
                "side length R0 must be at least 1 (got {side_length})"
            )));
        }
        if points_per_unit < 2 {
            return Err(Error::InvalidResolution(format!(
                "points per unit length must be at least 2 (got {points_per_unit})"
            )));
        }
        let side = side_length
            .checked_mul(points_per_unit)
            .and_then(|l| l.checked_pow(dim as u32))
            .ok_or_else(|| Error::InvalidResolution("grid size overflows".into()))?;
        if side > u32::MAX as usize {
            return Err(Error::InvalidResolution(format!("{side} grid points is too many")));
        }
        Ok(Self { dim, side_length, points_per_unit })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `R0`, the side length of the torus in length units.
    pub fn side_length(&self) -> usize {
        self.side_length
    }

    /// `n`, grid points per unit length.
    pub fn points_per_unit(&self) -> usize {
        self.points_per_unit
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.points_per_unit as f64
    }

    /// Grid points along one axis, `R0 * n`.
    pub fn points_per_side(&self) -> usize {
        self.side_length * self.points_per_unit
    }

    pub fn total_points(&self) -> usize {
        self.points_per_side().pow(self.dim as u32)
    }

    /// `h^d`, the quadrature weight of one grid point.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// `|Omega| = R0^d`.
    pub fn volume(&self) -> f64 {
        (self.side_length as f64).powi(self.dim as i32)
    }

    /// Index distance between neighbors along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_side().pow((self.dim - 1 - axis) as u32)
    }

    pub fn coords(&self, index: usize) -> Coords {
        let side = self.points_per_side();
        let mut c = [0; MAX_DIM];
        let mut rest = index;
        for axis in (0..self.dim).rev() {
            c[axis] = rest % side;
            rest /= side;
        }
        c
    }

    /// Linear index of (possibly out-of-range) coordinates, wrapped periodically.
    pub fn index_wrapped(&self, coords: &[isize]) -> usize {
        let side = self.points_per_side() as isize;
        coords[..self.dim]
            .iter()
            .fold(0usize, |acc, &c| acc * side as usize + c.rem_euclid(side) as usize)
    }

    pub fn index(&self, coords: &Coords) -> usize {
        let side = self.points_per_side();
        coords[..self.dim].iter().fold(0, |acc, &c| acc * side + c)
    }

    /// Neighbor of `index` one step forward (`forward = true`) or backward
    /// along `axis`, with periodic wrap.
    #[inline]
    pub fn neighbor(&self, index: usize, axis: usize, forward: bool) -> usize {
        let side = self.points_per_side();
        let stride = self.stride(axis);
        let c = (index / stride) % side;
        if forward {
            if c + 1 == side {
                index + stride - side * stride
            } else {
                index + stride
            }
        } else if c == 0 {
            index + (side - 1) * stride
        } else {
            index - stride
        }
    }

    /// Physical position of a grid point along each axis.
    pub fn position(&self, index: usize) -> [f64; MAX_DIM] {
        let c = self.coords(index);
        let h = self.spacing();
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = c[axis] as f64 * h;
        }
        x
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len == self.total_points() {
            Ok(())
        } else {
            Err(Error::GridMismatch { expected: self.total_points(), found: len })
        }
    }
}

/// Number of counting cubes per side at energy `mu`: `floor(R0 * sqrt(mu))`.
///
/// The nominal cube side is then `kappa * mu^{-1/2} = R0 / m` with
/// `kappa = R0 * sqrt(mu) / m` in `[1, 2)`.
pub fn cubes_per_side(side_length: usize, mu: f64) -> Result<usize> {
    let scaled = side_length as f64 * mu.sqrt();
    if !(scaled >= 1.0) || !scaled.is_finite() {
        return Err(Error::ScaleExceedsDomain { mu, scaled });
    }
    Ok(scaled.floor() as usize)
}

/// Reduction applied over the grid points of a cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Min,
    Max,
    /// Riemann sum, `h^d * sum`.
    Sum,
}

/// Disjoint cover of the grid by `m^d` cubes built from contiguous index
/// blocks along every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CubePartition {
    grid: TorusGrid,
    mu: f64,
    cubes_per_side: usize,
    kappa: f64,
    /// Start of every block along an axis, before translation; blocks are
    /// `[starts[b], starts[b + 1])` with `starts[m] = L`.
    starts: Vec<usize>,
    offsets: [usize; MAX_DIM],
    /// Block label of each coordinate along each axis (translation applied).
    block_of: Vec<Vec<usize>>,
}

impl CubePartition {
    /// Partition at energy `mu` following the kappa rule.
    pub fn new(grid: &TorusGrid, mu: f64) -> Result<Self> {
        let m = cubes_per_side(grid.side_length(), mu)?;
        let side = grid.points_per_side();
        if m > side {
            return Err(Error::ScaleBelowResolution { mu, cubes: m, points: side });
        }
        Ok(Self::with_cubes(grid, mu, m))
    }

    /// Like [`CubePartition::new`], but when the cubes would be smaller than
    /// a grid cell the finest partition (one grid point per cube) is used.
    pub fn new_saturating(grid: &TorusGrid, mu: f64) -> Result<Self> {
        let m = cubes_per_side(grid.side_length(), mu)?;
        Ok(Self::with_cubes(grid, mu, m.min(grid.points_per_side())))
    }

    fn with_cubes(grid: &TorusGrid, mu: f64, m: usize) -> Self {
        let side = grid.points_per_side();
        let (q, r) = (side / m, side % m);
        // larger blocks first
        let starts: Vec<usize> = (0..=m).map(|b| b * q + b.min(r)).collect();
        let mut labels = vec![0; side];
        for b in 0..m {
            labels[starts[b]..starts[b + 1]].iter_mut().for_each(|l| *l = b);
        }
        let kappa = grid.side_length() as f64 * mu.sqrt() / m as f64;
        Self {
            grid: *grid,
            mu,
            cubes_per_side: m,
            kappa,
            starts,
            offsets: [0; MAX_DIM],
            block_of: vec![labels; grid.dim()],
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn cubes_per_side(&self) -> usize {
        self.cubes_per_side
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Nominal cube side `kappa * mu^{-1/2} = R0 / m`.
    pub fn nominal_side(&self) -> f64 {
        self.grid.side_length() as f64 / self.cubes_per_side as f64
    }

    pub fn cube_count(&self) -> usize {
        self.cubes_per_side.pow(self.grid.dim() as u32)
    }

    /// Per-axis block sizes in grid points.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.starts.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Translation applied along each axis, in grid points.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets[..self.grid.dim()]
    }

    /// Grid-coordinate range `[start, start + len)` (before wrapping) of
    /// block `b` along `axis`.
    pub fn block_range(&self, axis: usize, b: usize) -> (usize, usize) {
        let start = self.starts[b] + self.offsets[axis];
        (start, self.starts[b + 1] - self.starts[b])
    }

    /// Label of the cube holding grid point `index`.
    #[inline]
    pub fn cube_of(&self, index: usize) -> usize {
        let c = self.grid.coords(index);
        (0..self.grid.dim()).fold(0, |acc, axis| acc * self.cubes_per_side + self.block_of[axis][c[axis]])
    }

    /// Labels of all grid points, in index order.
    pub fn labels(&self) -> Vec<usize> {
        let side = self.grid.points_per_side();
        let m = self.cubes_per_side;
        match self.grid.dim() {
            1 => self.block_of[0].clone(),
            2 => {
                let mut out = Vec::with_capacity(side * side);
                for &a in &self.block_of[0] {
                    out.extend(self.block_of[1].iter().map(|&b| a * m + b));
                }
                out
            }
            _ => (0..self.grid.total_points()).map(|i| self.cube_of(i)).collect(),
        }
    }

    /// Grid-point indices of every cube, cubes in label order.
    pub fn cube_cells(&self) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new(); self.cube_count()];
        for (i, label) in self.labels().into_iter().enumerate() {
            cells[label].push(i);
        }
        cells
    }

    /// Reduce `values` over every cube at once.
    pub fn reduce_all(&self, values: &[f64], reduction: Reduction) -> Result<Vec<f64>> {
        self.grid.check_len(values.len())?;
        let init = match reduction {
            Reduction::Min => f64::INFINITY,
            Reduction::Max => f64::NEG_INFINITY,
            Reduction::Sum => 0.0,
        };
        let mut acc = vec![init; self.cube_count()];
        for (label, &v) in self.labels().into_iter().zip(values) {
            let a = &mut acc[label];
            *a = match reduction {
                Reduction::Min => a.min(v),
                Reduction::Max => a.max(v),
                Reduction::Sum => *a + v,
            };
        }
        if reduction == Reduction::Sum {
            let w = self.grid.cell_volume();
            acc.iter_mut().for_each(|a| *a *= w);
        }
        Ok(acc)
    }

    /// Shift every cube by `offset` grid points along each axis (periodic).
    pub fn translate(&self, offset: &[isize]) -> Result<Self> {
        let dim = self.grid.dim();
        if offset.len() != dim {
            return Err(Error::InvalidParameters(format!(
                "offset has {} components for a {dim}-dimensional grid",
                offset.len()
            )));
        }
        let side = self.grid.points_per_side() as isize;
        let mut out = self.clone();
        for axis in 0..dim {
            let total = (self.offsets[axis] as isize + offset[axis]).rem_euclid(side) as usize;
            out.offsets[axis] = total;
            let labels = &mut out.block_of[axis];
            for c in 0..side as usize {
                let source = (c as isize - total as isize).rem_euclid(side) as usize;
                // untranslated labels are monotone blocks
                labels[c] = self.starts.partition_point(|&s| s <= source) - 1;
            }
        }
        Ok(out)
    }
}

/// Build a grid; thin wrapper kept for symmetry with the other constructors.
pub fn build_grid(dim: usize, side_length: usize, points_per_unit: usize) -> Result<TorusGrid> {
    TorusGrid::new(dim, side_length, points_per_unit)
}

/// Reduce a field over one cube of a partition.
pub fn cube_reduce(
    values: &[f64],
    partition: &CubePartition,
    cube: usize,
    reduction: Reduction,
) -> Result<f64> {
    partition.grid().check_len(values.len())?;
    if cube >= partition.cube_count() {
        return Err(Error::InvalidParameters(format!(
            "cube {cube} out of range ({} cubes)",
            partition.cube_count()
        )));
    }
    let points = partition
        .labels()
        .into_iter()
        .enumerate()
        .filter(|&(_, l)| l == cube)
        .map(|(i, _)| values[i]);
    Ok(match reduction {
        Reduction::Min => points.fold(f64::INFINITY, f64::min),
        Reduction::Max => points.fold(f64::NEG_INFINITY, f64::max),
        Reduction::Sum => points.sum::<f64>() * partition.grid().cell_volume(),
    })
}
