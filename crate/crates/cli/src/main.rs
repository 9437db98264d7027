use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use llab_cli::config::{parse_distribution, parse_preset, BackendChoice, Experiment, PotentialSource, RunConfig};
use llab_cli::{run, verify_run, CliError};
use llab_core::operator::DEFAULT_DENSE_DOF_LIMIT;
use llab_core::{CountingBackend, DistributionSpec};

#[derive(Parser)]
#[command(name = "llab", version, about = "Localization landscape laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample or build a potential and write it as a field file.
    GenPotential(RunArgs),
    /// Solve for the landscape u with Lu = 1.
    Landscape(RunArgs),
    /// Eigenvalues and the integrated density of states.
    Spectrum(RunArgs),
    /// N, N_u and both phase-space predictors on the energy grid.
    Curves(RunArgs),
    /// Evaluate the two-sided landscape bounds and diagnostics.
    Lawcheck(RunArgs),
    /// Doubling ratios of u² over grid-aligned cubes.
    Doubling(RunArgs),
    /// Ensemble means over random realizations.
    Ensemble(RunArgs),
    /// Unnormalized N, N_V, N_W for the one-dimensional uniform comparison.
    Figure1(RunArgs),
    /// Re-check the hashes of a finished run directory.
    Verify { dir: PathBuf },
}

/// Flags override the corresponding fields of `--config`.
#[derive(Args, Default)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    /// Side length R0 of the torus.
    #[arg(long)]
    r0: Option<usize>,
    /// Grid points per unit length.
    #[arg(long)]
    n: Option<usize>,
    /// `constant:VALUE` or `cosine:AMPLITUDE`.
    #[arg(long, value_parser = parse_preset, conflicts_with_all = ["distribution", "potential_file"])]
    preset: Option<llab_cli::config::Preset>,
    /// `bernoulli:P`, `uniform`, `power:BETA`, `exptail:C:A`.
    #[arg(long, value_parser = parse_distribution, conflicts_with = "potential_file")]
    distribution: Option<DistributionSpec>,
    #[arg(long)]
    potential_file: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realization: Option<u64>,
    #[arg(long)]
    mu_min: Option<f64>,
    #[arg(long)]
    mu_max: Option<f64>,
    #[arg(long)]
    per_decade: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// `dense` or `inertia`.
    #[arg(long)]
    backend: Option<BackendChoice>,
    #[arg(long)]
    dense_limit: Option<usize>,
    #[arg(long)]
    c4: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c3: Option<f64>,
    #[arg(long)]
    c_max: Option<f64>,
    /// Comma-separated cube sides for the doubling check.
    #[arg(long, value_delimiter = ',')]
    s: Option<Vec<f64>>,
    #[arg(long)]
    harnack_mu: Option<f64>,
    #[arg(long)]
    minima_count: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Also write the assembled matrix in coordinate format.
    #[arg(long)]
    dump_matrix: bool,
}

fn merge(experiment: Experiment, args: RunArgs) -> Result<RunConfig, CliError> {
    let mut c = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default_for(experiment),
    };
    c.experiment = experiment;
    let grid_changed = args.r0.is_some();
    if let Some(v) = args.dim {
        c.grid.dim = v;
    }
    if let Some(v) = args.r0 {
        c.grid.side_length = v;
    }
    if let Some(v) = args.n {
        c.grid.points_per_unit = v;
    }
    if args.config.is_none() && grid_changed && args.mu_min.is_none() {
        let r0 = c.grid.side_length as f64;
        c.mu_grid.min = 1.0 / (r0 * r0);
    }
    if let Some(p) = args.preset {
        c.potential = PotentialSource::Preset(p);
    }
    if let Some(path) = args.potential_file {
        c.potential = PotentialSource::File { path };
    }
    if let Some(d) = args.distribution {
        c.potential = match c.potential {
            PotentialSource::Random { seed, realization, .. } => PotentialSource::Random { distribution: d, seed, realization },
            _ => PotentialSource::Random { distribution: d, seed: 0, realization: 0 },
        };
    }
    if args.seed.is_some() || args.realization.is_some() {
        match &mut c.potential {
            PotentialSource::Random { seed, realization, .. } => {
                *seed = args.seed.unwrap_or(*seed);
                *realization = args.realization.unwrap_or(*realization);
            }
            _ => return Err(CliError::Validation("--seed and --realization need a random potential".into())),
        }
    }
    if let Some(v) = args.mu_min {
        c.mu_grid.min = v;
    }
    if let Some(v) = args.mu_max {
        c.mu_grid.max = v;
    }
    if let Some(v) = args.per_decade {
        c.mu_grid.points_per_decade = v;
    }
    if let Some(v) = args.tolerance {
        c.solver.tolerance = v;
    }
    if let Some(v) = args.max_iterations {
        c.solver.max_iterations = Some(v);
    }
    let limit = args.dense_limit.unwrap_or(match c.backend {
        CountingBackend::Dense { dof_limit } => dof_limit,
        CountingBackend::Inertia => DEFAULT_DENSE_DOF_LIMIT,
    });
    c.backend = match args.backend {
        Some(BackendChoice::Inertia) => CountingBackend::Inertia,
        Some(BackendChoice::Dense) => CountingBackend::Dense { dof_limit: limit },
        None => match c.backend {
            CountingBackend::Dense { .. } => CountingBackend::Dense { dof_limit: limit },
            other => other,
        },
    };
    let k = &mut c.constants;
    k.c4 = args.c4.or(k.c4);
    k.c1 = args.c1.or(k.c1);
    k.c2 = args.c2.or(k.c2);
    k.alpha = args.alpha.unwrap_or(k.alpha);
    k.c3 = args.c3.unwrap_or(k.c3);
    k.c_max = args.c_max.unwrap_or(k.c_max);
    if let Some(s) = args.s {
        c.doubling_s = s;
    }
    c.harnack_mu = args.harnack_mu.or(c.harnack_mu);
    c.minima_count = args.minima_count.unwrap_or(c.minima_count);
    c.realization_count = args.realizations.unwrap_or(c.realization_count);
    c.dump_matrix |= args.dump_matrix;
    if let Some(out) = args.out {
        c.output_dir = out;
    }
    Ok(c)
}

fn configure_threads() {
    if let Some(n) = std::env::var("LLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (experiment, args) = match cli.command {
        Command::Verify { dir } => {
            let manifest = verify_run(&dir)?;
            println!("{} files verified against config {}", manifest.files.len(), manifest.config_sha256);
            return Ok(());
        }
        Command::GenPotential(a) => (Experiment::GenPotential, a),
        Command::Landscape(a) => (Experiment::Landscape, a),
        Command::Spectrum(a) => (Experiment::Spectrum, a),
        Command::Curves(a) => (Experiment::Curves, a),
        Command::Lawcheck(a) => (Experiment::Lawcheck, a),
        Command::Doubling(a) => (Experiment::Doubling, a),
        Command::Ensemble(a) => (Experiment::Ensemble, a),
        Command::Figure1(a) => (Experiment::Figure1, a),
    };
    let config = merge(experiment, args)?;
    let summary = run(&config)?;
    println!("wrote {} files to {} (config {})", summary.files.len() + 2, summary.output_dir.display(), summary.config_sha256);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = serde_json::json!({ "error": e.kind(), "exit_code": e.exit_code(), "message": e.to_string() });
            eprintln!("{message}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
