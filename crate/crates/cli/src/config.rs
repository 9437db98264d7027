//! Versioned run configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use llab_core::counting::{geometric_grid, smallest_admissible_mu, DEFAULT_C_MAX, DEFAULT_POINTS_PER_DECADE};
use llab_core::{CountingBackend, DistributionSpec, SolverOptions, TorusGrid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    GenPotential,
    Landscape,
    Spectrum,
    Curves,
    Lawcheck,
    Doubling,
    Ensemble,
    Figure1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub dim: usize,
    pub side_length: usize,
    pub points_per_unit: usize,
}

impl GridParams {
    pub fn build(&self) -> llab_core::Result<TorusGrid> {
        TorusGrid::new(self.dim, self.side_length, self.points_per_unit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum Preset {
    Constant { value: f64 },
    Cosine { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PotentialSource {
    Preset(Preset),
    File { path: PathBuf },
    Random { distribution: DistributionSpec, seed: u64, realization: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuGrid {
    pub min: f64,
    pub max: f64,
    pub points_per_decade: usize,
}

impl MuGrid {
    pub fn values(&self) -> llab_core::Result<Vec<f64>> {
        geometric_grid(self.min, self.max, self.points_per_decade)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    /// Upper constant; fitted when absent.
    pub c4: Option<f64>,
    pub alpha: f64,
    /// Lower constant; fitted when absent.
    pub c1: Option<f64>,
    /// Defaults to `alpha^{-(d+2)}`.
    pub c2: Option<f64>,
    pub c3: f64,
    pub c_max: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self { c4: None, alpha: 1.0 / 32.0, c1: None, c2: None, c3: 1.0, c_max: DEFAULT_C_MAX }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub experiment: Experiment,
    pub grid: GridParams,
    pub potential: PotentialSource,
    pub mu_grid: MuGrid,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub backend: CountingBackend,
    #[serde(default)]
    pub constants: Constants,
    /// Cube sides for the doubling check.
    #[serde(default)]
    pub doubling_s: Vec<f64>,
    /// Energy fixing the partition of the Harnack probe.
    #[serde(default)]
    pub harnack_mu: Option<f64>,
    /// Number of minima/eigenvalue pairs in the ratio diagnostic.
    #[serde(default)]
    pub minima_count: usize,
    #[serde(default = "default_realizations")]
    pub realization_count: usize,
    #[serde(default)]
    pub dump_matrix: bool,
    pub output_dir: PathBuf,
}

fn default_realizations() -> usize {
    16
}

impl RunConfig {
    pub fn default_for(experiment: Experiment) -> Self {
        let figure = experiment == Experiment::Figure1;
        let grid = if figure {
            GridParams { dim: 1, side_length: 512, points_per_unit: 8 }
        } else {
            GridParams { dim: 1, side_length: 64, points_per_unit: 8 }
        };
        let r0 = grid.side_length as f64;
        Self {
            version: SCHEMA_VERSION,
            experiment,
            grid,
            potential: PotentialSource::Random { distribution: DistributionSpec::Uniform01, seed: 0, realization: 0 },
            mu_grid: MuGrid { min: 1.0 / (r0 * r0), max: 50.0, points_per_decade: DEFAULT_POINTS_PER_DECADE },
            solver: SolverOptions::default(),
            backend: CountingBackend::default(),
            constants: Constants::default(),
            doubling_s: Vec::new(),
            harnack_mu: None,
            minima_count: 0,
            realization_count: default_realizations(),
            dump_matrix: false,
            output_dir: PathBuf::from("llab-out"),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// Canonical echo: the exact bytes written to `config_echo.json`.
    pub fn echo(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.echo().as_bytes()))
    }

    /// Check everything that can be checked without computing.
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |m: String| Err(CliError::Validation(m));
        if self.version != SCHEMA_VERSION {
            return invalid(format!("unsupported config version {} (expected {SCHEMA_VERSION})", self.version));
        }
        let grid = self.grid.build()?;
        match &self.potential {
            PotentialSource::Preset(Preset::Constant { value }) if !(value.is_finite() && *value >= 0.0) => {
                return invalid(format!("constant potential must be finite and nonnegative, got {value}"));
            }
            PotentialSource::Preset(Preset::Cosine { amplitude }) if !(amplitude.is_finite() && *amplitude >= 0.0) => {
                return invalid(format!("cosine amplitude must be finite and nonnegative, got {amplitude}"));
            }
            PotentialSource::Random { distribution, .. } => distribution.validate()?,
            _ => {}
        }
        let m = &self.mu_grid;
        if !(m.min > 0.0 && m.min < m.max && m.max.is_finite()) || m.points_per_decade == 0 {
            return invalid(format!("energy grid needs 0 < min < max and points per decade > 0: {m:?}"));
        }
        let floor = smallest_admissible_mu(&grid);
        if m.min < floor * (1.0 - 1e-12) {
            return invalid(format!(
                "mu_min = {} is below 1/R0^2 = {floor}: cubes would exceed the domain (R0*sqrt(mu_min) < 1)",
                m.min
            ));
        }
        if !(self.solver.tolerance > 0.0) {
            return invalid(format!("solver tolerance must be positive, got {}", self.solver.tolerance));
        }
        let c = &self.constants;
        if !(c.alpha > 0.0 && c.alpha < 1.0 / 16.0) {
            return invalid(format!("alpha must lie in (0, 1/16), got {}", c.alpha));
        }
        for (name, v) in [("c4", c.c4), ("c1", c.c1), ("c2", c.c2), ("c3", Some(c.c3)), ("c_max", Some(c.c_max))] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return invalid(format!("{name} must be finite and nonnegative, got {v}"));
                }
            }
        }
        if self.doubling_s.iter().any(|s| !(*s > 0.0)) {
            return invalid("doubling sides must be positive".into());
        }
        match self.experiment {
            Experiment::Doubling if self.doubling_s.is_empty() => {
                return invalid("doubling needs at least one cube side".into());
            }
            Experiment::Ensemble => {
                if !matches!(self.potential, PotentialSource::Random { .. }) {
                    return invalid("ensemble runs need a random potential source".into());
                }
                if self.realization_count == 0 {
                    return invalid("ensemble runs need at least one realization".into());
                }
            }
            Experiment::Figure1 => {
                if self.grid.dim != 1 {
                    return invalid("figure1 is one-dimensional".into());
                }
                if !matches!(self.potential, PotentialSource::Random { distribution: DistributionSpec::Uniform01, .. }) {
                    return invalid("figure1 needs a uniform random potential".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// `bernoulli:P`, `uniform`, `power:BETA`, `exptail:C:A`.
pub fn parse_distribution(s: &str) -> Result<DistributionSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| -> Result<f64, String> {
        parts
            .get(i)
            .ok_or_else(|| format!("missing parameter in '{s}'"))?
            .parse::<f64>()
            .map_err(|e| format!("'{s}': {e}"))
    };
    let spec = match (parts[0], parts.len()) {
        ("bernoulli", 2) => DistributionSpec::Bernoulli { p: num(1)? },
        ("uniform", 1) => DistributionSpec::Uniform01,
        ("power", 2) => DistributionSpec::Power { beta: num(1)? },
        ("exptail", 3) => DistributionSpec::ExpTail { c: num(1)?, a: num(2)? },
        _ => return Err(format!("unknown distribution '{s}' (bernoulli:P, uniform, power:BETA, exptail:C:A)")),
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

/// `constant:VALUE` or `cosine:AMPLITUDE`.
pub fn parse_preset(s: &str) -> Result<Preset, String> {
    let (kind, value) = s.split_once(':').ok_or_else(|| format!("expected KIND:VALUE, got '{s}'"))?;
    let value = f64::from_str(value).map_err(|e| format!("'{s}': {e}"))?;
    match kind {
        "constant" => Ok(Preset::Constant { value }),
        "cosine" => Ok(Preset::Cosine { amplitude: value }),
        _ => Err(format!("unknown preset '{kind}' (constant, cosine)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    Dense,
    Inertia,
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dense" => Ok(Self::Dense),
            "inertia" => Ok(Self::Inertia),
            _ => Err(format!("unknown backend '{s}' (dense, inertia)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::default_for(Experiment::Curves);
        let back: RunConfig = serde_json::from_str(&c.echo()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.sha256(), c.sha256());
    }

    #[test]
    fn rejects_energies_below_domain_scale() {
        let mut c = RunConfig::default_for(Experiment::Curves);
        c.mu_grid.min = 1.0 / 8192.0;
        assert!(matches!(c.validate(), Err(CliError::Validation(_))));
        c.mu_grid.min = 1.0 / 4096.0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn parses_flags() {
        assert_eq!(parse_distribution("bernoulli:0.5").unwrap(), DistributionSpec::Bernoulli { p: 0.5 });
        assert_eq!(parse_distribution("uniform").unwrap(), DistributionSpec::Uniform01);
        assert_eq!(parse_distribution("exptail:1:2").unwrap(), DistributionSpec::ExpTail { c: 1.0, a: 2.0 });
        assert!(parse_distribution("bernoulli:2").is_err());
        assert!(parse_distribution("gauss").is_err());
        assert_eq!(parse_preset("constant:1.5").unwrap(), Preset::Constant { value: 1.5 });
        assert!(parse_preset("cosine").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = serde_json::to_value(RunConfig::default_for(Experiment::Landscape)).unwrap();
        v["grid"]["spacing"] = 0.1.into();
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }
}
