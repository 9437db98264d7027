//! Execute a validated configuration and persist its artifacts.
//!
//! Every run directory holds `config_echo.json`, the artifacts, and a
//! `manifest.json` listing the SHA-256 of each file together with the echo
//! hash. `.fld` provenance and JSON reports carry the echo hash as well.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use llab_core::counting::{fmt17, ids_curve, landscape_curve, weyl_curve, CountingCurve, CurveKind};
use llab_core::fld;
use llab_core::landscape::solve_landscape;
use llab_core::lawcheck::{check_doubling, law_report, minima_ratio_diagnostic, LawParams, ReportProvenance};
use llab_core::operator::{counts_at, eigen_dense, COUNT_TOLERANCE};
use llab_core::potential::{anderson_realization, constant_potential, cosine_potential};
use llab_core::stochastic::expectation_curves;
use llab_core::{
    CountingBackend, DiscreteOperator, EnsembleConfig, LandscapeField, PotentialField, TorusGrid,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{Experiment, PotentialSource, Preset, RunConfig};
use crate::error::CliError;

pub const ECHO_FILE: &str = "config_echo.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub files: BTreeMap<String, String>,
}

struct Writer {
    dir: PathBuf,
    config_sha256: String,
    files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Writer {
    fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Artifact(e.to_string()))?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    fn curve(&mut self, name: &str, curve: &CountingCurve) -> Result<(), CliError> {
        let mut buf = Vec::new();
        curve.write_csv(&mut buf)?;
        self.bytes(name, &buf)
    }

    /// `mu,<names..>` with one row per energy.
    fn table(&mut self, name: &str, mu: &[f64], columns: &[(&str, &[f64])]) -> Result<(), CliError> {
        let mut out = String::from("mu");
        for (label, _) in columns {
            out.push(',');
            out.push_str(label);
        }
        out.push('\n');
        for (k, m) in mu.iter().enumerate() {
            out.push_str(&fmt17(*m));
            for (_, values) in columns {
                out.push(',');
                out.push_str(&fmt17(values[k]));
            }
            out.push('\n');
        }
        self.bytes(name, out.as_bytes())
    }

    fn field(&mut self, name: &str, field: &PotentialField) -> Result<String, CliError> {
        let path = self.dir.join(name);
        let digest = fld::save_field_with(&path, field, Some(&self.config_sha256))?;
        self.files.insert(name.to_string(), sha256_hex(&fs::read(&path)?));
        Ok(digest)
    }

    fn landscape(&mut self, name: &str, u: &LandscapeField, potential_sha256: &str) -> Result<String, CliError> {
        let path = self.dir.join(name);
        let digest = fld::save_landscape(&path, u, potential_sha256, Some(&self.config_sha256))?;
        self.files.insert(name.to_string(), sha256_hex(&fs::read(&path)?));
        Ok(digest)
    }

    fn finish(self) -> Result<RunSummary, CliError> {
        let manifest = Manifest { config_sha256: self.config_sha256.clone(), files: self.files };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Artifact(e.to_string()))?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST_FILE), text)?;
        Ok(RunSummary { output_dir: self.dir, config_sha256: manifest.config_sha256, files: manifest.files.into_keys().collect() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub config_sha256: String,
    pub files: Vec<String>,
}

/// Load a potential file, checking it against the config echo of the run
/// that produced it when that echo sits alongside.
pub fn load_potential_checked(path: &Path) -> Result<PotentialField, CliError> {
    let record = fld::read(path)?;
    if let Some(expected) = record.provenance.get("config_sha256").and_then(|v| v.as_str()) {
        let echo = path.with_file_name(ECHO_FILE);
        if echo.exists() {
            let found = sha256_hex(&fs::read(&echo)?);
            if found != expected {
                return Err(CliError::Artifact(format!(
                    "{} was produced by config {expected}, but {} hashes to {found}",
                    path.display(),
                    echo.display()
                )));
            }
        }
    }
    Ok(fld::load_field(path)?)
}

fn build_potential(config: &RunConfig, grid: &TorusGrid) -> Result<PotentialField, CliError> {
    Ok(match &config.potential {
        PotentialSource::Preset(Preset::Constant { value }) => constant_potential(grid, *value)?,
        PotentialSource::Preset(Preset::Cosine { amplitude }) => cosine_potential(grid, *amplitude)?,
        PotentialSource::Random { distribution, seed, realization } => {
            anderson_realization(grid, distribution, *seed, *realization)?
        }
        PotentialSource::File { path } => {
            let v = load_potential_checked(path)?;
            if v.grid() != grid {
                return Err(CliError::Validation(format!(
                    "{} holds a {:?} field, but the config asks for {:?}",
                    path.display(),
                    v.grid(),
                    grid
                )));
            }
            v
        }
    })
}

fn counting_curve(op: &DiscreteOperator, mu: &[f64], backend: CountingBackend) -> Result<CountingCurve, CliError> {
    let volume = op.grid().volume();
    let values = counts_at(op, mu, backend)?.into_iter().map(|c| c as f64 / volume).collect();
    Ok(CountingCurve::new(CurveKind::Idos, mu.to_vec(), values))
}

struct Curves {
    n: CountingCurve,
    n_u: CountingCurve,
    n_v: CountingCurve,
    n_w: CountingCurve,
}

fn all_curves(op: &DiscreteOperator, u: &LandscapeField, mu: &[f64], backend: CountingBackend) -> Result<Curves, CliError> {
    let grid = op.grid();
    Ok(Curves {
        n: counting_curve(op, mu, backend)?,
        n_u: landscape_curve(u, mu)?,
        n_v: weyl_curve(grid, op.potential().values(), mu, CurveKind::WeylV)?,
        n_w: weyl_curve(grid, &u.effective_potential(), mu, CurveKind::WeylW)?,
    })
}

fn write_curves(w: &mut Writer, c: &Curves) -> Result<(), CliError> {
    w.curve("N.csv", &c.n)?;
    w.curve("N_u.csv", &c.n_u)?;
    w.curve("N_V.csv", &c.n_v)?;
    w.curve("N_W.csv", &c.n_w)?;
    w.table(
        "curves.csv",
        &c.n.mu,
        &[("N", &c.n.values), ("N_u", &c.n_u.values), ("N_V", &c.n_v.values), ("N_W", &c.n_w.values)],
    )
}

/// Validate, compute and write every artifact of `config`.
pub fn run(config: &RunConfig) -> Result<RunSummary, CliError> {
    config.validate()?;
    let grid = config.grid.build()?;
    let mu = config.mu_grid.values()?;
    fs::create_dir_all(&config.output_dir)?;
    let echo = config.echo();
    let config_sha256 = sha256_hex(echo.as_bytes());
    fs::write(config.output_dir.join(ECHO_FILE), &echo)?;
    let mut w = Writer { dir: config.output_dir.clone(), config_sha256: config_sha256.clone(), files: BTreeMap::new() };

    if config.experiment == Experiment::Ensemble {
        let PotentialSource::Random { distribution, seed, .. } = config.potential else {
            unreachable!("validated")
        };
        let ensemble = EnsembleConfig {
            distribution,
            dim: grid.dim(),
            side_length: grid.side_length(),
            points_per_unit: grid.points_per_unit(),
            realization_count: config.realization_count,
            base_seed: seed,
            mu_grid: mu.clone(),
            solver: config.solver,
            backend: config.backend,
        };
        let result = expectation_curves(&ensemble)?;
        w.json(
            "ensemble.json",
            &json!({
                "config_sha256": config_sha256,
                "config": config,
                "ids": result.ids,
                "landscape": result.landscape,
                "realizations": result.realizations,
                "skipped": result.skipped,
            }),
        )?;
        w.curve("N_E.csv", &result.ids.to_curve())?;
        w.curve("N_u_E.csv", &result.landscape.to_curve())?;
        return w.finish();
    }

    let potential = build_potential(config, &grid)?;
    let potential_sha256 = w.field("potential.fld", &potential)?;
    if config.experiment == Experiment::GenPotential {
        return w.finish();
    }
    let op = DiscreteOperator::new(&potential);
    if config.dump_matrix {
        let mut buf = Vec::new();
        op.write_coo(&mut buf)?;
        w.bytes("operator.coo", &buf)?;
    }

    if config.experiment == Experiment::Spectrum {
        let n = match config.backend {
            CountingBackend::Dense { dof_limit } => {
                let s = eigen_dense(&op, dof_limit)?;
                w.json(
                    "spectrum.json",
                    &json!({
                        "config_sha256": config_sha256,
                        "potential_sha256": potential_sha256,
                        "method": s.method(),
                        "dof": s.dof(),
                        "count_tolerance": s.tolerance(),
                        "trace": s.trace(),
                        "eigenvalues": s.eigenvalues(),
                    }),
                )?;
                ids_curve(&s, &mu)?
            }
            CountingBackend::Inertia => counting_curve(&op, &mu, config.backend)?,
        };
        w.curve("N.csv", &n)?;
        return w.finish();
    }

    let u = solve_landscape(&op, &config.solver)?;
    let landscape_sha256 = w.landscape("landscape.fld", &u, &potential_sha256)?;
    let provenance = ReportProvenance {
        potential_sha256: Some(potential_sha256.clone()),
        landscape_sha256: Some(landscape_sha256.clone()),
        config_sha256: Some(config_sha256.clone()),
        seed: potential.provenance().seed,
        realization: potential.provenance().realization,
        solver_tolerance: config.solver.tolerance,
        count_tolerance: COUNT_TOLERANCE,
    };

    match config.experiment {
        Experiment::Landscape => {
            w.json(
                "landscape.json",
                &json!({
                    "config_sha256": config_sha256,
                    "potential_sha256": potential_sha256,
                    "landscape_sha256": landscape_sha256,
                    "min_u": u.min(),
                    "max_u": u.max(),
                    "residual_norm": u.residual_norm(),
                    "iterations": u.iterations(),
                }),
            )?;
        }
        Experiment::Curves => {
            let curves = all_curves(&op, &u, &mu, config.backend)?;
            write_curves(&mut w, &curves)?;
        }
        Experiment::Lawcheck => {
            let curves = all_curves(&op, &u, &mu, config.backend)?;
            write_curves(&mut w, &curves)?;
            let c = &config.constants;
            let params = LawParams {
                mu_range: (mu[0], mu[mu.len() - 1]),
                c4: c.c4,
                alpha: c.alpha,
                c1: c.c1,
                c2: c.c2,
                c3: c.c3,
                c_max: c.c_max,
                doubling_s: config.doubling_s.clone(),
                harnack_mu: config.harnack_mu,
                ..LawParams::default()
            };
            let report = law_report(&curves.n, &u, &params, provenance)?;
            w.json("law_report.json", &report)?;
            w.bytes("law_summary.txt", report.summary().as_bytes())?;
            if config.minima_count > 0 {
                let limit = match config.backend {
                    CountingBackend::Dense { dof_limit } => dof_limit,
                    CountingBackend::Inertia => llab_core::operator::DEFAULT_DENSE_DOF_LIMIT,
                };
                let s = eigen_dense(&op, limit)?;
                let table = minima_ratio_diagnostic(&s, &u, config.minima_count)?;
                w.json("minima_ratios.json", &json!({ "config_sha256": config_sha256, "rows": table }))?;
            }
        }
        Experiment::Doubling => {
            let report = check_doubling(&u, &config.doubling_s, None)?;
            w.json(
                "doubling.json",
                &json!({ "config_sha256": config_sha256, "provenance": provenance, "report": report }),
            )?;
        }
        Experiment::Figure1 => {
            let volume = grid.volume();
            let curves = all_curves(&op, &u, &mu, config.backend)?;
            let scale = |c: &CountingCurve| c.scaled(volume).values;
            let (n, n_v, n_w) = (scale(&curves.n), scale(&curves.n_v), scale(&curves.n_w));
            w.table("figure1.csv", &mu, &[("N", &n), ("N_V", &n_v), ("N_W", &n_w)])?;
            // window holding the first half of the states
            let half = (grid.total_points() as f64 / 2.0).ceil();
            let rows: Vec<usize> = (0..mu.len()).filter(|&k| n[k] <= half).collect();
            let sup = |p: &[f64]| rows.iter().map(|&k| (p[k] - n[k]).abs()).fold(0.0, f64::max);
            let (sup_v, sup_w) = (sup(&n_v), sup(&n_w));
            w.json(
                "figure1.json",
                &json!({
                    "config_sha256": config_sha256,
                    "provenance": provenance,
                    "window_rows": rows.len(),
                    "sup_distance_v": sup_v,
                    "sup_distance_w": sup_w,
                    "landscape_closer": sup_w < sup_v,
                }),
            )?;
        }
        Experiment::GenPotential | Experiment::Spectrum | Experiment::Ensemble => unreachable!("handled above"),
    }
    w.finish()
}

/// Re-validate a run directory: the echo hash, every file hash in the
/// manifest, and the config hash embedded in fields and JSON reports.
pub fn verify_run(dir: &Path) -> Result<Manifest, CliError> {
    let echo = fs::read(dir.join(ECHO_FILE))?;
    let config_sha256 = sha256_hex(&echo);
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Artifact(format!("manifest: {e}")))?;
    if manifest.config_sha256 != config_sha256 {
        return Err(CliError::Artifact(format!(
            "config echo hashes to {config_sha256}, manifest records {}",
            manifest.config_sha256
        )));
    }
    for (name, expected) in &manifest.files {
        let path = dir.join(name);
        let bytes = fs::read(&path)?;
        let found = sha256_hex(&bytes);
        if &found != expected {
            return Err(CliError::Artifact(format!("{name}: sha256 {found}, manifest records {expected}")));
        }
        let embedded = if name.ends_with(".fld") {
            let record = fld::decode(&bytes)?;
            record.provenance.get("config_sha256").and_then(|v| v.as_str()).map(str::to_owned)
        } else if name.ends_with(".json") {
            let value: serde_json::Value =
                serde_json::from_slice(&bytes).map_err(|e| CliError::Artifact(format!("{name}: {e}")))?;
            value
                .get("config_sha256")
                .or_else(|| value.pointer("/provenance/config_sha256"))
                .and_then(|v| v.as_str())
                .map(str::to_owned)
        } else {
            None
        };
        if let Some(h) = embedded {
            if h != config_sha256 {
                return Err(CliError::Artifact(format!("{name} carries config hash {h}, expected {config_sha256}")));
            }
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use llab_core::fld::payload_digest;
    use llab_core::potential::Provenance;

    #[test]
    fn payload_digest_matches_written_field() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TorusGrid::new(1, 4, 2).unwrap();
        let v = PotentialField::new(grid, vec![0.5; 8], Provenance::tag("test")).unwrap();
        let mut w = Writer { dir: dir.path().to_path_buf(), config_sha256: "00".repeat(32), files: BTreeMap::new() };
        let digest = w.field("v.fld", &v).unwrap();
        assert_eq!(digest, payload_digest(v.values(), &[]));
        assert!(w.files.contains_key("v.fld"));
    }
}
