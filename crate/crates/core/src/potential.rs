//! Nonnegative potentials on the torus: Anderson-type random fields built
//! from i.i.d. site amplitudes, and deterministic presets.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{TorusGrid, MAX_DIM};

/// Smallest resolution (points per unit length) that resolves the bump.
pub const BUMP_RESOLUTION: usize = 10;

/// Radial bump `phi(r) = exp(1 - 1 / (1 - (r / radius)^2))` for `r < radius`,
/// zero outside. `phi(0) = 1` and `0 <= phi <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpProfile {
    pub radius: f64,
}

impl Default for BumpProfile {
    fn default() -> Self {
        Self { radius: 0.1 }
    }
}

impl BumpProfile {
    pub fn eval(&self, r: f64) -> f64 {
        let t = r / self.radius;
        if t.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - t * t)).exp()
        }
    }
}

/// Law of the site amplitudes `omega_j` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DistributionSpec {
    /// `omega = 1` with probability `p`, else `0`.
    Bernoulli { p: f64 },
    Uniform01,
    /// `F(delta) = delta^beta`.
    Power { beta: f64 },
    /// `F(delta) = min(1, exp(-c * delta^{-a}))`; the remaining mass sits at 1.
    ExpTail { c: f64, a: f64 },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Bernoulli { p } => (0.0..=1.0).contains(&p),
            Self::Uniform01 => true,
            Self::Power { beta } => beta.is_finite() && beta > 0.0,
            Self::ExpTail { c, a } => c.is_finite() && c > 0.0 && a.is_finite() && a > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameters(format!("invalid distribution {self:?}")))
        }
    }

    /// `F(delta) = P{omega <= delta}`.
    pub fn cdf(&self, delta: f64) -> Result<f64> {
        self.validate()?;
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::OutOfRange(delta));
        }
        Ok(self.cdf_unchecked(delta))
    }

    pub(crate) fn cdf_unchecked(&self, delta: f64) -> f64 {
        let delta = delta.clamp(0.0, 1.0);
        match *self {
            Self::Bernoulli { p } => {
                if delta >= 1.0 {
                    1.0
                } else {
                    1.0 - p
                }
            }
            Self::Uniform01 => delta,
            Self::Power { beta } => delta.powf(beta),
            Self::ExpTail { c, a } => {
                if delta >= 1.0 || delta <= 0.0 {
                    if delta >= 1.0 { 1.0 } else { 0.0 }
                } else {
                    (-c * delta.powf(-a)).exp().min(1.0)
                }
            }
        }
    }

    /// Inverse-CDF transform of a uniform variate in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Self::Bernoulli { p } => {
                if u < p {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Uniform01 => u,
            Self::Power { beta } => u.powf(1.0 / beta),
            Self::ExpTail { c, a } => {
                if u <= 0.0 {
                    0.0
                } else {
                    // F(delta) = u  <=>  delta = (c / -ln u)^{1/a}, clipped at the atom
                    (c / -u.ln()).powf(1.0 / a).min(1.0)
                }
            }
        }
    }

    /// True when the law puts positive mass on `omega = 0`, so a realization
    /// can vanish identically.
    pub fn has_atom_at_zero(&self) -> bool {
        matches!(*self, Self::Bernoulli { p } if p < 1.0)
    }
}

/// `F(delta)` for a distribution; see [`DistributionSpec::cdf`].
pub fn eval_f(spec: &DistributionSpec, delta: f64) -> Result<f64> {
    spec.cdf(delta)
}

/// Draw `site_count` i.i.d. amplitudes.
///
/// Site `j` of realization `r` reads the `j`-th 64-bit word of the ChaCha8
/// stream `r` keyed by `seed`, so any subset of sites or realizations can
/// be regenerated independently of the others.
pub fn sample_omegas(
    spec: &DistributionSpec,
    site_count: usize,
    seed: u64,
    realization: u64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng.set_word_pos(0);
    Ok((0..site_count)
        .map(|_| spec.quantile(unit_f64(rng.next_u64())))
        .collect())
}

/// Amplitude of a single site, regenerated from its counter position.
pub fn sample_site(spec: &DistributionSpec, seed: u64, realization: u64, site: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng.set_word_pos(2 * site as u128);
    spec.quantile(unit_f64(rng.next_u64()))
}

#[inline]
fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Where a potential came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realization: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
}

impl Provenance {
    pub fn tag(source: &str) -> Self {
        Self { source: source.to_string(), ..Default::default() }
    }
}

/// Sampled nonnegative potential `V` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    grid: TorusGrid,
    values: Vec<f64>,
    omegas: Option<Vec<f64>>,
    provenance: Provenance,
}

impl PotentialField {
    pub fn new(grid: TorusGrid, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        Self::with_omegas(grid, values, None, provenance)
    }

    pub fn with_omegas(
        grid: TorusGrid,
        values: Vec<f64>,
        omegas: Option<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        grid.check_len(values.len())?;
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativePotential { index, value });
        }
        if let Some(w) = &omegas {
            let sites = grid.side_length().pow(grid.dim() as u32);
            if w.len() != sites {
                return Err(Error::SiteCountMismatch { expected: sites, found: w.len() });
            }
        }
        Ok(Self { grid, values, omegas, provenance })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn omegas(&self) -> Option<&[f64]> {
        self.omegas.as_deref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `h^d * sum V`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// `V(x) = sum_j omega_j * phi(x - j)` over the integer sites of the torus.
///
/// Amplitudes are indexed row-major over `{0, .., R0 - 1}^d`.
pub fn assemble_anderson(
    grid: &TorusGrid,
    omegas: &[f64],
    bump: &BumpProfile,
    provenance: Provenance,
) -> Result<PotentialField> {
    let dim = grid.dim();
    let r0 = grid.side_length();
    let n = grid.points_per_unit();
    let sites = r0.pow(dim as u32);
    if omegas.len() != sites {
        return Err(Error::SiteCountMismatch { expected: sites, found: omegas.len() });
    }
    if n < BUMP_RESOLUTION {
        log::warn!("{n} points per unit under-resolve the bump of radius {}", bump.radius);
    }
    let h = grid.spacing();
    // offsets (in grid points) that fall strictly inside the bump support
    let reach = (bump.radius / h).ceil() as isize;
    let mut stencil: Vec<([isize; MAX_DIM], f64)> = Vec::new();
    let span = |axis: usize| if axis < dim { -reach..=reach } else { 0..=0 };
    for a in span(0) {
        for b in span(1) {
            for c in span(2) {
                let r = ((a * a + b * b + c * c) as f64).sqrt() * h;
                let w = bump.eval(r);
                if w > 0.0 {
                    stencil.push(([a, b, c], w));
                }
            }
        }
    }
    let mut values = vec![0.0; grid.total_points()];
    for (site, &omega) in omegas.iter().enumerate() {
        if omega == 0.0 {
            continue;
        }
        let mut rest = site;
        let mut centre = [0isize; MAX_DIM];
        for axis in (0..dim).rev() {
            centre[axis] = ((rest % r0) * n) as isize;
            rest /= r0;
        }
        for (off, w) in &stencil {
            let mut c = [0isize; MAX_DIM];
            for axis in 0..dim {
                c[axis] = centre[axis] + off[axis];
            }
            // supports are disjoint, so accumulation never overlaps
            values[grid.index_wrapped(&c)] += omega * w;
        }
    }
    PotentialField::with_omegas(*grid, values, Some(omegas.to_vec()), provenance)
}

/// Sample amplitudes and assemble the Anderson potential of one realization.
pub fn anderson_realization(
    grid: &TorusGrid,
    spec: &DistributionSpec,
    seed: u64,
    realization: u64,
) -> Result<PotentialField> {
    let sites = grid.side_length().pow(grid.dim() as u32);
    let omegas = sample_omegas(spec, sites, seed, realization)?;
    let provenance = Provenance {
        source: "anderson".into(),
        distribution: Some(*spec),
        seed: Some(seed),
        realization: Some(realization),
        parameter: None,
    };
    assemble_anderson(grid, &omegas, &BumpProfile::default(), provenance)
}

pub fn constant_potential(grid: &TorusGrid, c: f64) -> Result<PotentialField> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::NegativeConstant(c));
    }
    let provenance = Provenance { parameter: Some(c), ..Provenance::tag("constant") };
    PotentialField::new(*grid, vec![c; grid.total_points()], provenance)
}

/// Smooth unit-periodic potential `amplitude * mean_k (1 + cos(2 pi x_k)) / 2`.
pub fn cosine_potential(grid: &TorusGrid, amplitude: f64) -> Result<PotentialField> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::NegativeConstant(amplitude));
    }
    let dim = grid.dim();
    let values = (0..grid.total_points())
        .map(|i| {
            let x = grid.position(i);
            let s: f64 = x[..dim]
                .iter()
                .map(|&xk| 0.5 * (1.0 + (2.0 * std::f64::consts::PI * xk).cos()))
                .sum();
            amplitude * s / dim as f64
        })
        .collect();
    let provenance = Provenance { parameter: Some(amplitude), ..Provenance::tag("cosine") };
    PotentialField::new(*grid, values, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shipped() -> Vec<DistributionSpec> {
        vec![
            DistributionSpec::Bernoulli { p: 0.5 },
            DistributionSpec::Bernoulli { p: 0.2 },
            DistributionSpec::Uniform01,
            DistributionSpec::Power { beta: 2.0 },
            DistributionSpec::Power { beta: 0.5 },
            DistributionSpec::ExpTail { c: 1.0, a: 1.0 },
            DistributionSpec::ExpTail { c: 0.3, a: 2.0 },
        ]
    }

    #[test]
    fn bump_shape() {
        let b = BumpProfile::default();
        assert_eq!(b.eval(0.0), 1.0);
        assert_eq!(b.eval(0.1), 0.0);
        assert_eq!(b.eval(0.25), 0.0);
        for k in 0..100 {
            let v = b.eval(k as f64 * 0.001);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn eval_f_examples() {
        assert_eq!(eval_f(&DistributionSpec::Uniform01, 0.3).unwrap(), 0.3);
        assert_eq!(eval_f(&DistributionSpec::Bernoulli { p: 0.5 }, 0.5).unwrap(), 0.5);
        let v = eval_f(&DistributionSpec::ExpTail { c: 1.0, a: 1.0 }, 0.5).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.135335).abs() < 1e-6);
        assert!(matches!(eval_f(&DistributionSpec::Uniform01, 1.5), Err(Error::OutOfRange(_))));
        assert!(matches!(
            eval_f(&DistributionSpec::Bernoulli { p: 1.5 }, 0.5),
            Err(Error::InvalidParameters(_))
        ));
    }

    #[test]
    fn cdf_monotone_with_unit_mass() {
        for spec in shipped() {
            let mut prev = 0.0;
            for k in 0..=1000 {
                let f = spec.cdf(k as f64 / 1000.0).unwrap();
                assert!(f >= prev, "{spec:?} decreases at {k}");
                prev = f;
            }
            assert_eq!(spec.cdf(1.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn sampling_examples() {
        let ones = sample_omegas(&DistributionSpec::Bernoulli { p: 1.0 }, 100, 3, 0).unwrap();
        assert!(ones.iter().all(|&w| w == 1.0));

        let spec = DistributionSpec::Bernoulli { p: 0.5 };
        let w = sample_omegas(&spec, 100_000, 11, 4).unwrap();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let se = (0.25 / w.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se, "mean {mean}");

        assert_eq!(w, sample_omegas(&spec, 100_000, 11, 4).unwrap());
        assert_ne!(w, sample_omegas(&spec, 100_000, 11, 5).unwrap());
        assert!(matches!(
            sample_omegas(&DistributionSpec::Bernoulli { p: -0.1 }, 3, 0, 0),
            Err(Error::InvalidParameters(_))
        ));
    }

    #[test]
    fn site_draws_are_counter_based() {
        let spec = DistributionSpec::Uniform01;
        let all = sample_omegas(&spec, 50, 99, 7).unwrap();
        for site in [0u64, 1, 17, 49] {
            assert_eq!(sample_site(&spec, 99, 7, site), all[site as usize]);
        }
        // a longer draw extends a shorter one
        assert_eq!(&sample_omegas(&spec, 80, 99, 7).unwrap()[..50], &all[..]);
    }

    #[test]
    fn empirical_cdf_within_dkw_band() {
        let samples = 100_000usize;
        // DKW: P(sup |F_n - F| > eps) <= 2 exp(-2 n eps^2), confidence 0.999
        let eps = ((2.0f64 / 0.001).ln() / (2.0 * samples as f64)).sqrt();
        for (k, spec) in shipped().into_iter().enumerate() {
            let mut w = sample_omegas(&spec, samples, 2024, k as u64).unwrap();
            w.sort_by(f64::total_cmp);
            let mut sup: f64 = 0.0;
            for i in 0..=200 {
                let d = i as f64 / 200.0;
                let below = w.partition_point(|&x| x <= d) as f64 / samples as f64;
                sup = sup.max((below - spec.cdf(d).unwrap()).abs());
            }
            assert!(sup <= eps, "{spec:?}: sup {sup} > {eps}");
        }
    }

    #[test]
    fn assemble_examples() {
        let g = TorusGrid::new(1, 4, 20).unwrap();
        let b = BumpProfile::default();
        let zero = assemble_anderson(&g, &[0.0; 4], &b, Provenance::default()).unwrap();
        assert!(zero.is_identically_zero());

        let single = assemble_anderson(&g, &[0.0, 0.0, 1.0, 0.0], &b, Provenance::default()).unwrap();
        for i in 0..g.total_points() {
            let x = i as f64 * g.spacing();
            assert!((single.values()[i] - b.eval((x - 2.0).abs())).abs() < 1e-12);
        }

        let first = assemble_anderson(&g, &[0.0, 1.0, 0.0, 0.0], &b, Provenance::default()).unwrap();
        let second = assemble_anderson(&g, &[0.0, 0.0, 1.0, 0.0], &b, Provenance::default()).unwrap();
        let both = assemble_anderson(&g, &[0.0, 1.0, 1.0, 0.0], &b, Provenance::default()).unwrap();
        for i in 0..g.total_points() {
            let (a, c) = (first.values()[i], second.values()[i]);
            assert_eq!(a.max(c), a + c);
            assert_eq!(both.values()[i], a + c);
        }

        assert!(matches!(
            assemble_anderson(&g, &[1.0; 3], &b, Provenance::default()),
            Err(Error::SiteCountMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn bump_wraps_periodically() {
        let g = TorusGrid::new(1, 3, 20).unwrap();
        let v = assemble_anderson(&g, &[1.0, 0.0, 0.0], &BumpProfile::default(), Provenance::default())
            .unwrap();
        let last = g.total_points() - 1;
        assert!(v.values()[last] > 0.0);
        assert_eq!(v.values()[last], v.values()[1]);
    }

    #[test]
    fn constant_examples() {
        let g = TorusGrid::new(2, 3, 4).unwrap();
        assert!(constant_potential(&g, 1.0).unwrap().values().iter().all(|&v| v == 1.0));
        assert!(constant_potential(&g, 0.0).unwrap().is_identically_zero());
        let q = constant_potential(&g, 0.25).unwrap();
        assert!((q.integral() - 0.25 * 9.0).abs() < 1e-12);
        assert!(matches!(constant_potential(&g, -1.0), Err(Error::NegativeConstant(_))));
    }

    proptest! {
        #[test]
        fn anderson_is_translation_equivariant(seed in 0u64..1000, shift in 0usize..5, other in 0usize..5) {
            let g = TorusGrid::new(2, 5, 10).unwrap();
            let omegas = sample_omegas(&DistributionSpec::Uniform01, 25, seed, 0).unwrap();
            let base = assemble_anderson(&g, &omegas, &BumpProfile::default(), Provenance::default()).unwrap();
            // relabel: omega'_{j + s} = omega_j
            let mut moved = vec![0.0; 25];
            for a in 0..5 {
                for b in 0..5 {
                    moved[((a + shift) % 5) * 5 + (b + other) % 5] = omegas[a * 5 + b];
                }
            }
            let shifted = assemble_anderson(&g, &moved, &BumpProfile::default(), Provenance::default()).unwrap();
            let side = g.points_per_side() as isize;
            for i in 0..g.total_points() {
                let c = g.coords(i);
                let back = g.index_wrapped(&[
                    c[0] as isize + (shift * 10) as isize,
                    (c[1] as isize + (other * 10) as isize) % side,
                ]);
                prop_assert_eq!(base.values()[i], shifted.values()[back]);
            }
            prop_assert!(base.max() <= omegas.iter().copied().fold(0.0, f64::max));
        }
    }
}
