//! Ensembles of Anderson realizations, tail estimates and the binomial
//! large-deviation bound on the number of weak sites.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{landscape_curve, CountingCurve, CurveKind};
use crate::error::{Error, Result};
use crate::fld::payload_digest;
use crate::grid::TorusGrid;
use crate::landscape::{solve_landscape, SolverOptions};
use crate::operator::{counts_at, CountingBackend, DiscreteOperator};
use crate::potential::{anderson_realization, DistributionSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub distribution: DistributionSpec,
    pub dim: usize,
    pub side_length: usize,
    pub points_per_unit: usize,
    pub realization_count: usize,
    pub base_seed: u64,
    pub mu_grid: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub backend: CountingBackend,
}

impl EnsembleConfig {
    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.dim, self.side_length, self.points_per_unit)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.distribution.validate()?;
        if self.realization_count == 0 {
            return Err(Error::InvalidParameters("at least one realization is required".into()));
        }
        if self.mu_grid.is_empty() || self.mu_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameters("energy grid must be nonempty and ascending".into()));
        }
        Ok(())
    }
}

/// Mean and standard error of a counting function over realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCurve {
    pub mu: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub realization_count: usize,
}

impl EnsembleCurve {
    /// Aggregate per-realization samples (outer index: realization) in the
    /// given order.
    pub fn from_samples(mu: &[f64], samples: &[Vec<f64>]) -> Self {
        let count = samples.len();
        let mut mean = vec![0.0; mu.len()];
        let mut stderr = vec![0.0; mu.len()];
        for k in 0..mu.len() {
            // Welford
            let (mut m, mut s2) = (0.0, 0.0);
            for (r, row) in samples.iter().enumerate() {
                let x = row[k];
                let delta = x - m;
                m += delta / (r + 1) as f64;
                s2 += delta * (x - m);
            }
            mean[k] = m;
            stderr[k] = if count > 1 { (s2 / (count - 1) as f64).sqrt() / (count as f64).sqrt() } else { 0.0 };
        }
        Self { mu: mu.to_vec(), mean, stderr, realization_count: count }
    }

    pub fn to_curve(&self) -> CountingCurve {
        CountingCurve {
            kind: CurveKind::EnsembleMean,
            mu: self.mu.clone(),
            values: self.mean.clone(),
            stderr: Some(self.stderr.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub realization: u64,
    /// Digest of the potential payload, or `None` when skipped.
    pub potential_sha256: Option<String>,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub ids: EnsembleCurve,
    pub landscape: EnsembleCurve,
    pub realizations: Vec<RealizationRecord>,
    pub skipped: usize,
}

struct Outcome {
    ids: Vec<f64>,
    landscape: Vec<f64>,
}

/// Counting curves of one realization, or `None` when its potential
/// vanishes identically (possible only for laws with an atom at zero).
pub fn realization_curves(
    config: &EnsembleConfig,
    realization: u64,
) -> Result<(RealizationRecord, Option<(Vec<f64>, Vec<f64>)>)> {
    let grid = config.grid()?;
    let v = anderson_realization(&grid, &config.distribution, config.base_seed, realization)?;
    let digest = payload_digest(v.values(), v.omegas().unwrap_or(&[]));
    if v.is_identically_zero() && config.distribution.has_atom_at_zero() {
        log::info!("realization {realization} has V = 0; skipped");
        let record = RealizationRecord { realization, potential_sha256: Some(digest), skipped: true };
        return Ok((record, None));
    }
    let op = DiscreteOperator::new(&v);
    let landscape = solve_landscape(&op, &config.solver)?;
    let volume = grid.volume();
    let ids = counts_at(&op, &config.mu_grid, config.backend)?
        .into_iter()
        .map(|c| c as f64 / volume)
        .collect();
    let nu = landscape_curve(&landscape, &config.mu_grid)?.values;
    let record = RealizationRecord { realization, potential_sha256: Some(digest), skipped: false };
    Ok((record, Some((ids, nu))))
}

/// `N^E` and `N_u^E` over `realization_count` realizations of the stream
/// `base_seed`. Realizations run in parallel; aggregation follows the
/// realization index, so results do not depend on scheduling.
pub fn expectation_curves(config: &EnsembleConfig) -> Result<EnsembleResult> {
    config.validate()?;
    let runs: Vec<_> = (0..config.realization_count as u64)
        .into_par_iter()
        .map(|r| realization_curves(config, r))
        .collect::<Result<_>>()?;
    aggregate(config, runs)
}

fn aggregate(
    config: &EnsembleConfig,
    mut runs: Vec<(RealizationRecord, Option<(Vec<f64>, Vec<f64>)>)>,
) -> Result<EnsembleResult> {
    runs.sort_by_key(|(record, _)| record.realization);
    let mut records = Vec::with_capacity(runs.len());
    let mut outcomes = Vec::new();
    for (record, data) in runs {
        if let Some((ids, landscape)) = data {
            outcomes.push(Outcome { ids, landscape });
        }
        records.push(record);
    }
    let skipped = records.iter().filter(|r| r.skipped).count();
    if outcomes.is_empty() {
        return Err(Error::SingularOperator);
    }
    let ids: Vec<Vec<f64>> = outcomes.iter().map(|o| o.ids.clone()).collect();
    let nu: Vec<Vec<f64>> = outcomes.iter().map(|o| o.landscape.clone()).collect();
    Ok(EnsembleResult {
        ids: EnsembleCurve::from_samples(&config.mu_grid, &ids),
        landscape: EnsembleCurve::from_samples(&config.mu_grid, &nu),
        realizations: records,
        skipped,
    })
}

/// `H(μ) = (μ^μ (1-μ)^{1-μ})^{-1}`.
pub fn entropy_factor(mu: f64) -> f64 {
    (-(mu * mu.ln() + (1.0 - mu) * (1.0 - mu).ln())).exp()
}

/// `(H(μ) F^μ)^N`, the bound on `P{#{j : ω_j ≤ δ} ≥ μ N}` for `N` i.i.d.
/// sites with `F = F(δ)`; requires `0 < F < μ < 1`.
pub fn chernoff_bound(mu: f64, f_value: f64, sites: usize) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidParameters(format!("fraction must lie in (0, 1), got {mu}")));
    }
    if !(f_value > 0.0) {
        return Err(Error::InvalidParameters(format!("F must be positive, got {f_value}")));
    }
    if f_value >= mu {
        return Err(Error::ConditionViolated { mu, f_value });
    }
    let log_base = -(mu * mu.ln() + (1.0 - mu) * (1.0 - mu).ln()) + mu * f_value.ln();
    Ok((sites as f64 * log_base).exp())
}

/// `P{Bin(N, p) ≥ k}` accumulated in log space.
pub fn binomial_tail_exact(trials: usize, p: f64, k: usize) -> Result<f64> {
    if k > trials || !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameters(format!("need 0 <= k <= N and p in [0, 1]; got N={trials}, k={k}, p={p}")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    // ln C(N, j), built up from j = 0
    let mut log_choose = 0.0;
    let mut logs = Vec::with_capacity(trials + 1 - k);
    for j in 0..=trials {
        if j > 0 {
            log_choose += ((trials - j + 1) as f64).ln() - (j as f64).ln();
        }
        if j >= k {
            logs.push(log_choose + j as f64 * lp + (trials - j) as f64 * lq);
        }
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((top.exp() * logs.iter().map(|l| (l - top).exp()).sum::<f64>()).min(1.0))
}

/// Constants of the tail envelope `γ μ^{d/2} F(c μ)^{γ' μ^{-d/2}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEnvelopeParams {
    pub gamma_pre: f64,
    pub gamma_exp: f64,
    pub c_scale: f64,
    pub dim: usize,
}

impl TailEnvelopeParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_pre > 0.0 && self.gamma_exp > 0.0 && self.c_scale > 0.0 && (1..=3).contains(&self.dim) {
            Ok(())
        } else {
            Err(Error::InvalidParameters(format!("envelope parameters must be positive: {self:?}")))
        }
    }
}

/// `γ μ^{d/2} F(c μ)^{γ' μ^{-d/2}}`, evaluated in log space. `F` is read at
/// `min(cμ, 1)`.
pub fn tail_envelope(params: &TailEnvelopeParams, cdf: &dyn Fn(f64) -> f64, mu: f64) -> f64 {
    let half = params.dim as f64 / 2.0;
    let f = cdf((params.c_scale * mu).min(1.0));
    if f <= 0.0 {
        return 0.0;
    }
    let log = params.gamma_pre.ln() + half * mu.ln() + params.gamma_exp * mu.powf(-half) * f.ln();
    log.exp()
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InvalidParameters(format!("need at least two paired points, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameters("regressor is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LinearFit { slope, intercept, r_squared })
}

/// Double-log slope of a tail, `log|log N|` against `-log μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifschitzFit {
    pub exponent: f64,
    pub r_squared: f64,
    /// R² of a plain power law `log N` against `log μ` on the same window.
    pub power_law_r_squared: f64,
    /// False when a power law explains the window at least as well, i.e.
    /// `|log N|` is not diverging like a power of `1/μ`.
    pub tail_regime: bool,
}

pub fn lifschitz_fit(mu: &[f64], values: &[f64], window: (f64, f64)) -> Result<LifschitzFit> {
    let (mut x, mut y, mut log_mu, mut log_v) = (vec![], vec![], vec![], vec![]);
    for (&m, &v) in mu.iter().zip(values) {
        if m < window.0 || m > window.1 {
            continue;
        }
        if !(v > 0.0) || v.ln() == 0.0 {
            return Err(Error::NonPositiveCurve { mu: m, value: v });
        }
        x.push(-m.ln());
        y.push(v.ln().abs().ln());
        log_mu.push(m.ln());
        log_v.push(v.ln());
    }
    let tail = linear_fit(&x, &y)?;
    let power = linear_fit(&log_mu, &log_v)?;
    Ok(LifschitzFit {
        exponent: tail.slope,
        r_squared: tail.r_squared,
        power_law_r_squared: power.r_squared,
        tail_regime: tail.r_squared > power.r_squared,
    })
}

/// Regression of `log N^E` against `μ^{-d/2}` on the widest contiguous
/// window where the mean is positive and its relative standard error is
/// below `max_rel_stderr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailShapeFit {
    pub first: usize,
    pub last: usize,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub fit: LinearFit,
}

pub fn tail_shape_regression(curve: &EnsembleCurve, dim: usize, max_rel_stderr: f64) -> Result<TailShapeFit> {
    let ok: Vec<bool> = curve
        .mean
        .iter()
        .zip(&curve.stderr)
        .map(|(&m, &s)| m > 0.0 && s / m < max_rel_stderr)
        .collect();
    let (mut best, mut start) = (None::<(usize, usize)>, None);
    for k in 0..=ok.len() {
        match (k < ok.len() && ok[k], start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| k - s > b - a + 1) {
                    best = Some((s, k - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    let (first, last) = best.ok_or_else(|| Error::InvalidParameters("no window with a resolved mean".into()))?;
    if last - first + 1 < 3 {
        return Err(Error::InvalidParameters(format!("window of {} points is too short", last - first + 1)));
    }
    let half = dim as f64 / 2.0;
    let x: Vec<f64> = curve.mu[first..=last].iter().map(|m| m.powf(-half)).collect();
    let y: Vec<f64> = curve.mean[first..=last].iter().map(|v| v.ln()).collect();
    Ok(TailShapeFit { first, last, mu_lo: curve.mu[first], mu_hi: curve.mu[last], fit: linear_fit(&x, &y)? })
}

/// Least-squares fit of the envelope shape to a positive curve, scanning
/// `c_scale` over the given candidates. For each candidate,
/// `log N - (d/2) log μ = log γ + γ' μ^{-d/2} log F(cμ)` is linear in the
/// bracketed regressor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub params: TailEnvelopeParams,
    pub r_squared: f64,
}

pub fn fit_tail_envelope(
    mu: &[f64],
    values: &[f64],
    dim: usize,
    distribution: &DistributionSpec,
    c_candidates: &[f64],
) -> Result<EnvelopeFit> {
    let half = dim as f64 / 2.0;
    let points: Vec<(f64, f64)> = mu.iter().zip(values).filter(|(_, v)| **v > 0.0).map(|(m, v)| (*m, *v)).collect();
    let mut best: Option<EnvelopeFit> = None;
    for &c in c_candidates {
        let x: Vec<f64> = points
            .iter()
            .map(|(m, _)| m.powf(-half) * distribution.cdf_unchecked((c * m).min(1.0)).ln())
            .collect();
        if x.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let y: Vec<f64> = points.iter().map(|(m, v)| v.ln() - half * m.ln()).collect();
        let Ok(fit) = linear_fit(&x, &y) else { continue };
        if fit.slope <= 0.0 {
            continue;
        }
        let candidate = EnvelopeFit {
            params: TailEnvelopeParams { gamma_pre: fit.intercept.exp(), gamma_exp: fit.slope, c_scale: c, dim },
            r_squared: fit.r_squared,
        };
        if best.is_none_or(|b| candidate.r_squared > b.r_squared) {
            best = Some(candidate);
        }
    }
    best.ok_or_else(|| Error::InvalidParameters("no admissible envelope fit".into()))
}

/// Envelope shape fitted to `N_u^E`, then refitted to `N^E`, with the
/// multiplicative band that brackets `N^E` under the landscape-fitted
/// exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeComparison {
    pub landscape: EnvelopeFit,
    pub ids: EnvelopeFit,
    /// `min` and `max` over the window of `N^E / envelope_u`.
    pub bracket: (f64, f64),
    /// Points of the window lying outside the nominal validity range
    /// `μ < μ*`, `R0 > (μ m)^{-1/2}`.
    pub outside_validity: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn compare_envelopes(
    ensemble: &EnsembleResult,
    dim: usize,
    side_length: usize,
    distribution: &DistributionSpec,
    window: (f64, f64),
    c_candidates: &[f64],
    mu_star: f64,
    m: f64,
) -> Result<EnvelopeComparison> {
    let pick = |c: &EnsembleCurve| -> (Vec<f64>, Vec<f64>) {
        c.mu.iter()
            .zip(&c.mean)
            .filter(|(mu, v)| **mu >= window.0 && **mu <= window.1 && **v > 0.0)
            .map(|(a, b)| (*a, *b))
            .unzip()
    };
    let (mu_u, nu) = pick(&ensemble.landscape);
    let (mu_n, n) = pick(&ensemble.ids);
    let landscape = fit_tail_envelope(&mu_u, &nu, dim, distribution, c_candidates)?;
    let ids = fit_tail_envelope(&mu_n, &n, dim, distribution, c_candidates)?;
    let cdf = |d: f64| distribution.cdf_unchecked(d);
    let ratios: Vec<f64> = mu_n.iter().zip(&n).map(|(m, v)| v / tail_envelope(&landscape.params, &cdf, *m)).collect();
    let bracket = (
        ratios.iter().copied().fold(f64::INFINITY, f64::min),
        ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let r0 = side_length as f64;
    let outside_validity = mu_n.iter().filter(|&&mu| !(mu < mu_star && r0 > (mu * m).powf(-0.5))).count();
    Ok(EnvelopeComparison { landscape, ids, bracket, outside_validity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::{geometric_grid, smallest_admissible_mu};

    fn config(dist: DistributionSpec, realizations: usize, seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            distribution: dist,
            dim: 1,
            side_length: 64,
            points_per_unit: 8,
            realization_count: realizations,
            base_seed: seed,
            mu_grid: geometric_grid(1.0 / 4096.0, 50.0, 8).unwrap(),
            solver: SolverOptions::default(),
            backend: CountingBackend::default(),
        }
    }

    #[test]
    fn deterministic_law_has_zero_stderr() {
        let r = expectation_curves(&config(DistributionSpec::Bernoulli { p: 1.0 }, 4, 1)).unwrap();
        assert!(r.ids.stderr.iter().all(|&s| s == 0.0));
        assert!(r.landscape.stderr.iter().all(|&s| s == 0.0));
        assert_eq!(r.skipped, 0);
    }

    #[test]
    fn doubling_realizations_extends_the_stream() {
        let dist = DistributionSpec::Uniform01;
        let a = config(dist, 3, 9);
        let b = config(dist, 6, 9);
        for r in 0..3 {
            let (ra, ca) = realization_curves(&a, r).unwrap();
            let (rb, cb) = realization_curves(&b, r).unwrap();
            assert_eq!(ra, rb);
            assert_eq!(ca, cb);
        }
        let full = expectation_curves(&b).unwrap();
        assert_eq!(full.realizations.len(), 6);
        assert_eq!(&full.realizations[..3], &expectation_curves(&a).unwrap().realizations[..]);
    }

    #[test]
    fn aggregation_ignores_execution_order() {
        let cfg = config(DistributionSpec::Uniform01, 5, 3);
        let mut runs: Vec<_> = (0..5).map(|r| realization_curves(&cfg, r).unwrap()).collect();
        let ordered = aggregate(&cfg, runs.clone()).unwrap();
        runs.reverse();
        runs.swap(0, 2);
        assert_eq!(aggregate(&cfg, runs).unwrap(), ordered);
        assert_eq!(expectation_curves(&cfg).unwrap(), ordered);
    }

    #[test]
    fn independent_seeds_agree_statistically() {
        let a = expectation_curves(&config(DistributionSpec::Uniform01, 32, 100)).unwrap();
        let b = expectation_curves(&config(DistributionSpec::Uniform01, 32, 200)).unwrap();
        for (x, y) in [(&a.ids, &b.ids), (&a.landscape, &b.landscape)] {
            for k in 0..x.mu.len() {
                let pooled = (x.stderr[k].powi(2) + y.stderr[k].powi(2)).sqrt();
                let diff = (x.mean[k] - y.mean[k]).abs();
                assert!(diff <= 3.0 * pooled + 1e-12, "mu {}: {diff} vs {pooled}", x.mu[k]);
            }
        }
    }

    #[test]
    fn vanishing_realizations_are_skipped() {
        let mut cfg = config(DistributionSpec::Bernoulli { p: 0.05 }, 12, 5);
        cfg.side_length = 2;
        cfg.mu_grid = geometric_grid(0.25, 10.0, 4).unwrap();
        let r = expectation_curves(&cfg).unwrap();
        assert!(r.skipped > 0);
        assert_eq!(r.realizations.iter().filter(|x| x.skipped).count(), r.skipped);
        assert_eq!(r.ids.realization_count, 12 - r.skipped);
    }

    #[test]
    fn chernoff_examples() {
        assert!((entropy_factor(0.5) - 2.0).abs() < 1e-15);
        let bound = chernoff_bound(0.9, 0.3, 20).unwrap();
        assert!((bound / 2.6e-7 - 1.0).abs() < 0.01, "{bound}");
        let tail = binomial_tail_exact(20, 0.3, 18).unwrap();
        assert!((tail / 3.7e-8 - 1.0).abs() < 0.02, "{tail}");
        assert!(tail <= bound);
        let mut prev = 0.0;
        for k in 1..89 {
            let b = chernoff_bound(0.9, k as f64 / 100.0, 20).unwrap();
            assert!(b >= prev);
            prev = b;
        }
        assert!(matches!(chernoff_bound(0.3, 0.3, 5), Err(Error::ConditionViolated { .. })));
        assert!(matches!(chernoff_bound(1.0, 0.3, 5), Err(Error::InvalidParameters(_))));
    }

    /// Direct summation with exact integer binomial coefficients.
    fn binomial_oracle(n: usize, p: f64, k: usize) -> f64 {
        let mut choose = vec![1u128; n + 1];
        for j in 1..=n {
            choose[j] = choose[j - 1] * (n - j + 1) as u128 / j as u128;
        }
        (k..=n).map(|j| choose[j] as f64 * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32)).sum()
    }

    #[test]
    fn binomial_tail_examples() {
        assert_eq!(binomial_tail_exact(10, 0.4, 0).unwrap(), 1.0);
        assert_eq!(binomial_tail_exact(10, 0.0, 1).unwrap(), 0.0);
        for (n, p, k) in [(20, 0.3, 18), (50, 0.05, 30), (7, 0.5, 3), (40, 0.45, 21)] {
            let got = binomial_tail_exact(n, p, k).unwrap();
            let oracle = binomial_oracle(n, p, k);
            assert!((got - oracle).abs() <= 1e-12 * oracle, "{n} {p} {k}: {got} vs {oracle}");
        }
        assert!(binomial_tail_exact(5, 0.5, 6).is_err());
    }

    #[test]
    fn envelope_examples() {
        let bern = DistributionSpec::Bernoulli { p: 0.5 };
        let params = TailEnvelopeParams { gamma_pre: 2.0, gamma_exp: 0.7, c_scale: 0.5, dim: 1 };
        let cdf = |d: f64| bern.cdf_unchecked(d);
        for mu in [0.01f64, 0.1, 1.0] {
            let expect = 2.0 * mu.sqrt() * 2f64.powf(-0.7 / mu.sqrt());
            assert!((tail_envelope(&params, &cdf, mu) - expect).abs() <= 1e-14 * expect.max(1e-300));
        }
        let uni = DistributionSpec::Uniform01;
        let cdf = |d: f64| uni.cdf_unchecked(d);
        for mu in [0.05f64, 0.3] {
            let expect = 2.0 * mu.sqrt() * (0.7 / mu.sqrt() * (0.5 * mu).ln()).exp();
            assert!((tail_envelope(&params, &cdf, mu) / expect - 1.0).abs() < 1e-12);
        }
        let one = |_: f64| 1.0;
        assert!((tail_envelope(&params, &one, 0.3) - 2.0 * 0.3f64.sqrt()).abs() < 1e-15);
        // nonincreasing in the exponent constant when F < 1
        let mut prev = f64::INFINITY;
        for g in 1..20 {
            let p = TailEnvelopeParams { gamma_exp: g as f64 * 0.2, ..params };
            let v = tail_envelope(&p, &cdf, 0.2);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn lifschitz_fit_examples() {
        let mu = geometric_grid(1e-4, 1e-2, 20).unwrap();
        let v: Vec<f64> = mu.iter().map(|m| (-m.powf(-0.5)).exp()).collect();
        let f = lifschitz_fit(&mu, &v, (0.0, 1.0)).unwrap();
        assert!((f.exponent - 0.5).abs() < 1e-3 && f.tail_regime);

        let mu = geometric_grid(0.05, 0.5, 20).unwrap();
        let v: Vec<f64> = mu.iter().map(|m| (-m.powf(-1.5)).exp()).collect();
        let f = lifschitz_fit(&mu, &v, (0.0, 1.0)).unwrap();
        assert!((f.exponent - 1.5).abs() < 1e-3 && f.tail_regime);

        let mu = geometric_grid(1e-4, 1e-2, 20).unwrap();
        let v: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
        assert!(!lifschitz_fit(&mu, &v, (0.0, 1.0)).unwrap().tail_regime);

        assert!(matches!(lifschitz_fit(&[0.1, 0.2], &[0.0, 0.1], (0.0, 1.0)), Err(Error::NonPositiveCurve { .. })));
    }

    #[test]
    fn envelope_fit_recovers_synthetic_constants() {
        let bern = DistributionSpec::Bernoulli { p: 0.5 };
        let truth = TailEnvelopeParams { gamma_pre: 0.8, gamma_exp: 1.3, c_scale: 0.5, dim: 1 };
        let cdf = |d: f64| bern.cdf_unchecked(d);
        let mu = geometric_grid(0.01, 0.5, 16).unwrap();
        let v: Vec<f64> = mu.iter().map(|&m| tail_envelope(&truth, &cdf, m)).collect();
        let fit = fit_tail_envelope(&mu, &v, 1, &bern, &[0.5, 1.0]).unwrap();
        assert!((fit.params.gamma_exp - 1.3).abs() < 1e-9);
        assert!((fit.params.gamma_pre - 0.8).abs() < 1e-9);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn tail_window_selection() {
        let mu = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let mut curve = EnsembleCurve {
            mu: mu.clone(),
            mean: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            stderr: vec![0.0, 0.01, 0.02, 0.02, 0.2, 0.01],
            realization_count: 10,
        };
        let fit = tail_shape_regression(&curve, 1, 0.3).unwrap();
        assert_eq!((fit.first, fit.last), (1, 3));
        assert_eq!((fit.mu_lo, fit.mu_hi), (0.2, 0.4));
        // isolated resolved points do not make a window
        curve.stderr[2] = 0.1;
        assert!(tail_shape_regression(&curve, 1, 0.3).is_err());
        assert!(smallest_admissible_mu(&TorusGrid::new(1, 4, 2).unwrap()) == 1.0 / 16.0);
    }
}
