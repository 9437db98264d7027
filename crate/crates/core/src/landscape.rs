//! The landscape `u` solving `Lu = 1`, its reciprocal `W = 1/u`, and the
//! discrete ground-state transform.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::operator::DiscreteOperator;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual target `‖Lu - 1‖ / ‖1‖`.
    pub tolerance: f64,
    /// `None` picks `10 * dof + 1000`.
    pub max_iterations: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: DEFAULT_TOLERANCE, max_iterations: None, preconditioner: Preconditioner::Jacobi }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeField {
    grid: TorusGrid,
    u: Vec<f64>,
    residual_norm: f64,
    iterations: usize,
}

impl LandscapeField {
    pub fn from_parts(grid: TorusGrid, u: Vec<f64>, residual_norm: f64, iterations: usize) -> Result<Self> {
        grid.check_len(u.len())?;
        if let Some((index, &value)) = u.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonPositiveLandscape { index, value });
        }
        Ok(Self { grid, u, residual_norm, iterations })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn min(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `W = 1/u`, computed on demand.
    pub fn effective_potential(&self) -> Vec<f64> {
        self.u.iter().map(|u| 1.0 / u).collect()
    }
}

/// Solve `Lu = 1` by (preconditioned) conjugate gradients.
pub fn solve_landscape(op: &DiscreteOperator, options: &SolverOptions) -> Result<LandscapeField> {
    if op.potential().is_identically_zero() {
        return Err(Error::SingularOperator);
    }
    let n = op.grid().total_points();
    let max_iterations = options.max_iterations.unwrap_or(10 * n + 1000);
    let inv_diag: Vec<f64> = match options.preconditioner {
        Preconditioner::Jacobi => op.diagonal().iter().map(|d| 1.0 / d).collect(),
        Preconditioner::None => vec![1.0; n],
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let rhs_norm = (n as f64).sqrt();
    let target = options.tolerance * rhs_norm;

    let mut u = vec![0.0; n];
    let mut r = vec![1.0; n];
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut residual = rhs_norm;
    while iterations < max_iterations {
        if residual <= target {
            // confirm against the true residual before stopping
            op.apply_into(&u, &mut ap);
            r.iter_mut().zip(&ap).for_each(|(ri, a)| *ri = 1.0 - a);
            residual = dot(&r, &r).sqrt();
            if residual <= target {
                break;
            }
            z.iter_mut().zip(r.iter().zip(&inv_diag)).for_each(|(zi, (ri, d))| *zi = ri * d);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SingularOperator);
        }
        let alpha = rz / pap;
        u.iter_mut().zip(&p).for_each(|(ui, pi)| *ui += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, a)| *ri -= alpha * a);
        z.iter_mut().zip(r.iter().zip(&inv_diag)).for_each(|(zi, (ri, d))| *zi = ri * d);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        residual = dot(&r, &r).sqrt();
        iterations += 1;
    }
    op.apply_into(&u, &mut ap);
    let true_residual = ap.iter().map(|a| (1.0 - a).powi(2)).sum::<f64>().sqrt() / rhs_norm;
    if !(true_residual <= options.tolerance) {
        return Err(Error::NotConverged { iterations, residual: true_residual });
    }
    LandscapeField::from_parts(*op.grid(), u, true_residual, iterations)
}

/// Pointwise reciprocal of `u`.
pub fn effective_potential(landscape: &LandscapeField) -> Result<Vec<f64>> {
    if let Some((index, &value)) = landscape.u().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveLandscape { index, value });
    }
    Ok(landscape.effective_potential())
}

/// A local minimum: a plateau (maximal connected set of equal values) with
/// no strictly smaller neighbor, represented by its lowest index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimum {
    pub index: usize,
    pub value: f64,
}

/// Local minima of a field, sorted by value (ties by index).
pub fn local_minima_sites(grid: &TorusGrid, field: &[f64]) -> Result<Vec<LocalMinimum>> {
    grid.check_len(field.len())?;
    let mut visited = vec![false; field.len()];
    let mut minima = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..field.len() {
        if visited[start] {
            continue;
        }
        let value = field[start];
        let mut is_min = true;
        visited[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for axis in 0..grid.dim() {
                for forward in [true, false] {
                    let j = grid.neighbor(i, axis, forward);
                    if field[j] < value {
                        is_min = false;
                    } else if field[j] == value && !visited[j] {
                        visited[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        // `start` is the lowest index of its plateau: earlier members would
        // have claimed it already
        if is_min {
            minima.push(LocalMinimum { index: start, value });
        }
    }
    minima.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.index.cmp(&b.index)));
    Ok(minima)
}

/// Values of the local minima in nondecreasing order.
pub fn local_minima(grid: &TorusGrid, field: &[f64]) -> Result<Vec<f64>> {
    Ok(local_minima_sites(grid, field)?.into_iter().map(|m| m.value).collect())
}

/// Both sides of the discrete ground-state transform for `f = u g`:
/// `<Lf, f>` and `h^{d-2} Σ_edges u_i u_j (g_i - g_j)^2 + h^d Σ f_i^2 / u_i`.
pub fn ground_state_sides(op: &DiscreteOperator, landscape: &LandscapeField, f: &[f64]) -> Result<(f64, f64)> {
    let grid = op.grid();
    grid.check_len(f.len())?;
    if landscape.grid() != grid {
        return Err(Error::GridMismatch { expected: grid.total_points(), found: landscape.grid().total_points() });
    }
    let u = landscape.u();
    let lhs = op.form_via_apply(f)?;
    let g: Vec<f64> = f.iter().zip(u).map(|(a, b)| a / b).collect();
    let mut kinetic = 0.0;
    for i in 0..f.len() {
        for axis in 0..grid.dim() {
            let j = grid.neighbor(i, axis, true);
            let d = g[i] - g[j];
            kinetic += u[i] * u[j] * d * d;
        }
    }
    let h = grid.spacing();
    let potential: f64 = f.iter().zip(u).map(|(a, b)| a * a / b).sum();
    let rhs = grid.cell_volume() * (kinetic / (h * h) + potential);
    Ok((lhs, rhs))
}

/// Relative mismatch of the ground-state transform identity.
pub fn ground_state_identity_residual(op: &DiscreteOperator, landscape: &LandscapeField, f: &[f64]) -> Result<f64> {
    let (lhs, rhs) = ground_state_sides(op, landscape, f)?;
    let diff = (lhs - rhs).abs();
    Ok(if lhs == 0.0 { diff } else { diff / lhs.abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{anderson_realization, constant_potential, DistributionSpec, PotentialField, Provenance};
    use faer::linalg::solvers::Solve;
    use faer::Mat;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn dense_solve(op: &DiscreteOperator) -> Vec<f64> {
        let n = op.grid().total_points();
        let mut a = Mat::<f64>::zeros(n, n);
        for (i, j, v) in op.triplets() {
            a[(i, j)] = v;
        }
        let b = Mat::<f64>::from_fn(n, 1, |_, _| 1.0);
        let x = a.partial_piv_lu().solve(&b);
        (0..n).map(|i| x[(i, 0)]).collect()
    }

    #[test]
    fn constant_potential_gives_constant_landscape() {
        for (dim, c) in [(1, 0.25), (2, 1.0), (1, 4.0)] {
            let g = TorusGrid::new(dim, 6, 4).unwrap();
            let op = DiscreteOperator::new(&constant_potential(&g, c).unwrap());
            let l = solve_landscape(&op, &SolverOptions::default()).unwrap();
            assert!(l.u().iter().all(|u| (u - 1.0 / c).abs() * c <= 1e-8));
        }
    }

    #[test]
    fn zero_potential_is_singular() {
        let g = TorusGrid::new(1, 4, 2).unwrap();
        let op = DiscreteOperator::new(&constant_potential(&g, 0.0).unwrap());
        assert!(matches!(solve_landscape(&op, &SolverOptions::default()), Err(Error::SingularOperator)));
    }

    #[test]
    fn matches_dense_direct_solve() {
        let g = TorusGrid::new(1, 4, 2).unwrap();
        let mut v = vec![0.0; 8];
        v[5] = 1.0;
        let op = DiscreteOperator::new(&PotentialField::new(g, v, Provenance::default()).unwrap());
        let oracle = dense_solve(&op);
        for pre in [Preconditioner::Jacobi, Preconditioner::None] {
            let options = SolverOptions { preconditioner: pre, ..Default::default() };
            let l = solve_landscape(&op, &options).unwrap();
            for (a, b) in l.u().iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-10 * b.abs(), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let g = TorusGrid::new(1, 32, 8).unwrap();
        let v = anderson_realization(&g, &DistributionSpec::Uniform01, 4, 0).unwrap();
        let op = DiscreteOperator::new(&v);
        let options = SolverOptions { max_iterations: Some(3), ..Default::default() };
        assert!(matches!(solve_landscape(&op, &options), Err(Error::NotConverged { iterations: 3, .. })));
    }

    #[test]
    fn effective_potential_examples() {
        let g = TorusGrid::new(1, 2, 2).unwrap();
        let l = LandscapeField::from_parts(g, vec![2.0; 4], 0.0, 0).unwrap();
        assert_eq!(effective_potential(&l).unwrap(), vec![0.5; 4]);
        let l = LandscapeField::from_parts(g, vec![1.0, 2.0, 3.0, 4.0], 0.0, 0).unwrap();
        let w = effective_potential(&l).unwrap();
        assert!(w.windows(2).all(|p| p[0] > p[1]));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let u: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..100.0)).collect();
        let l = LandscapeField::from_parts(g, u.clone(), 0.0, 0).unwrap();
        for (a, b) in effective_potential(&l).unwrap().iter().zip(&u) {
            assert!((a * b - 1.0).abs() <= f64::EPSILON);
        }
        assert!(matches!(
            LandscapeField::from_parts(g, vec![1.0, 0.0, 1.0, 1.0], 0.0, 0),
            Err(Error::NonPositiveLandscape { index: 1, .. })
        ));
    }

    fn brute_force_minima(values: &[f64]) -> Vec<f64> {
        let n = values.len();
        let mut out: Vec<f64> = (0..n)
            .filter(|&i| values[(i + 1) % n] > values[i] && values[(i + n - 1) % n] > values[i])
            .map(|i| values[i])
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    #[test]
    fn minima_on_a_ring() {
        let g = TorusGrid::new(1, 4, 2).unwrap();
        let ring = [3.0, 1.0, 2.0, 5.0, 4.0, 6.0, 2.0, 3.0];
        let found = local_minima(&g, &ring).unwrap();
        assert_eq!(found, brute_force_minima(&ring));
        assert_eq!(found, vec![1.0, 2.0, 4.0]);

        assert_eq!(local_minima(&g, &[0.3; 8]).unwrap(), vec![0.3]);
        let sites = local_minima_sites(&g, &[0.3; 8]).unwrap();
        assert_eq!(sites[0].index, 0);

        let unique = [5.0, 4.0, 3.0, 0.5, 3.0, 4.0, 1.0, 4.5];
        assert_eq!(local_minima(&g, &unique).unwrap()[0], 0.5);
    }

    #[test]
    fn plateaus_count_once() {
        let g = TorusGrid::new(1, 4, 2).unwrap();
        let field = [2.0, 1.0, 1.0, 1.0, 3.0, 0.5, 0.5, 3.0];
        let sites = local_minima_sites(&g, &field).unwrap();
        assert_eq!(sites, vec![LocalMinimum { index: 5, value: 0.5 }, LocalMinimum { index: 1, value: 1.0 }]);
        // a plateau touching a smaller value is not a minimum
        let field = [2.0, 1.0, 1.0, 0.5, 3.0, 3.0, 3.0, 3.0];
        assert_eq!(local_minima(&g, &field).unwrap(), vec![0.5]);
    }

    #[test]
    fn ground_state_identity() {
        let g = TorusGrid::new(2, 5, 3).unwrap();
        let v = anderson_realization(&g, &DistributionSpec::Uniform01, 8, 0).unwrap();
        let op = DiscreteOperator::new(&v);
        let l = solve_landscape(&op, &SolverOptions::default()).unwrap();
        let (lhs, rhs) = ground_state_sides(&op, &l, l.u()).unwrap();
        let expect = g.cell_volume() * l.u().iter().sum::<f64>();
        assert!((lhs - expect).abs() <= 1e-9 * expect);
        assert!((rhs - expect).abs() <= 1e-12 * expect);

        let c = DiscreteOperator::new(&constant_potential(&g, 0.6).unwrap());
        let lc = solve_landscape(&c, &SolverOptions::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let f: Vec<f64> = (0..g.total_points()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(ground_state_identity_residual(&c, &lc, &f).unwrap() <= 1e-8);
            let r = ground_state_identity_residual(&op, &l, &f).unwrap();
            assert!(r <= 1e-6, "residual {r}");
            // landscape uncertainty principle
            let (lhs, _) = ground_state_sides(&op, &l, &f).unwrap();
            let floor = g.cell_volume() * f.iter().zip(l.u()).map(|(a, b)| a * a / b).sum::<f64>();
            assert!(lhs >= floor * (1.0 - 1e-8));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn anderson_landscape_floor_and_comparison(seed in 0u64..10_000) {
            let g = TorusGrid::new(1, 12, 4).unwrap();
            let v = anderson_realization(&g, &DistributionSpec::Uniform01, seed, 0).unwrap();
            prop_assume!(!v.is_identically_zero());
            let base = solve_landscape(&DiscreteOperator::new(&v), &SolverOptions::default()).unwrap();
            prop_assert!(base.min() >= 1.0 - 1e-9);
            let raised: Vec<f64> = v.values().iter().enumerate().map(|(i, x)| x + if i % 5 == 0 { 0.3 } else { 0.0 }).collect();
            let raised = PotentialField::new(g, raised, Provenance::default()).unwrap();
            let up = solve_landscape(&DiscreteOperator::new(&raised), &SolverOptions::default()).unwrap();
            for (a, b) in up.u().iter().zip(base.u()) {
                prop_assert!(*a <= b * (1.0 + 1e-8));
            }
        }
    }
}
