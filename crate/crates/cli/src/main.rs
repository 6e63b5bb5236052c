mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hjbvi::study::{control_study, convergence_study};
use hjbvi::{discretize_controls, Discretization, ExecMode};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(hjbvi::Error),
    #[error("solver failure: {0}")]
    Study(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<hjbvi::Error> for CliError {
    fn from(e: hjbvi::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Solver(e)
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Study(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "hjbvi",
    version,
    about = "Switching-system solver for nonlocal HJB variational inequalities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once and write summary, value surface and policy.
    Solve(Common),
    /// Values, increments and increment ratios over study.h and study.cost.
    MeshStudy(Common),
    /// Differences to the finest control grid over study.controls.
    ControlStudy(Common),
    /// Check the configuration and print it with all rules resolved.
    ValidateConfig(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Override a key by dotted path, e.g. `scheme.h=1/200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for component and cell parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Record the policy and stopping region at every step.
    #[arg(long)]
    record_policy: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = config::load(&self.config, &self.set)?;
        if self.record_policy {
            cfg.scheme.record_policy = true;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.display().to_string();
        }
        Ok(cfg)
    }
}

fn set_threads(n: Option<usize>) -> Result<(), CliError> {
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(())
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_resolved(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&cfg.resolved()?)
        .map_err(|e| CliError::Config(e.to_string()))?;
    output::write_atomic(&dir.join("resolved_config.json"), text.as_bytes())?;
    Ok(())
}

fn run_solve(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let mut scheme = cfg.scheme()?;
    let controls = discretize_controls(spec.control_interval, cfg.scheme.controls)?;
    let steps = hjbvi::SpaceTimeGrid::new(
        spec.domain.0,
        spec.domain.1,
        scheme.h,
        spec.horizon,
        scheme.dt,
    )?
    .n_steps();
    scheme.snapshot_every = match cfg.output.surface_every {
        0 => steps.div_ceil(50).max(1),
        k => k,
    };
    let disc = Discretization::new(&spec, &controls, &scheme)?;
    let res = disc.run()?;
    let value = res.reported_value().unwrap_or(f64::NAN);

    let dir = out_dir(cfg)?;
    let summary = output::Summary {
        model: spec.name.clone(),
        h: scheme.h,
        dt: scheme.dt,
        epsilon: scheme.epsilon,
        theta: scheme.theta,
        cost: scheme.cost,
        controls: controls.len(),
        horizon: spec.horizon,
        x0: spec.x0,
        value,
        picard_total: res.stats.picard_total,
        picard_mean: res.stats.picard_mean,
        picard_max: res.stats.picard_max,
        max_contraction_ratio: res.stats.max_contraction_ratio,
        contraction_bound: res.stats.contraction_bound,
        c_p: res.stats.c_p,
        wall_time_s: res.stats.wall_time.as_secs_f64(),
    };
    output::write_surface(&dir, &res)?;
    output::write_policy(&dir, &res, cfg.output.policy_every)?;
    write_resolved(&dir, cfg)?;
    output::write_summary(&dir, &summary)?;
    println!(
        "value at (T={}, x0={}) of component {}: {value}",
        spec.horizon,
        spec.x0,
        controls.len()
    );
    println!(
        "picard: mean {:.2}, max {}, ratio {:.4} (bound {:.4}); wall {:.3}s",
        res.stats.picard_mean,
        res.stats.picard_max,
        res.stats.max_contraction_ratio,
        res.stats.contraction_bound,
        summary.wall_time_s
    );
    Ok(())
}

fn run_mesh_study(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let controls = discretize_controls(spec.control_interval, cfg.scheme.controls)?;
    let hs = cfg.study_hs()?;
    let mut costs = cfg.study_costs()?;
    if costs.is_empty() {
        costs.push(cfg.scheme()?.cost);
    }
    if hs.len() < 3 && costs.len() < 3 {
        return Err(CliError::Config(
            "mesh-study needs at least three study.h values or three study.cost values".into(),
        ));
    }
    if hs.is_empty() {
        return Err(CliError::Config("mesh-study needs study.h".into()));
    }
    for &h in &hs {
        for &c in &costs {
            Discretization::new(&spec, &controls, &cfg.scheme_at(h, c)?)?;
        }
    }
    let rows = convergence_study(
        &spec,
        &controls,
        &hs,
        &costs,
        |h, c| cfg.scheme_at(h, c).expect("validated above"),
        ExecMode::Parallel,
    );
    let dir = out_dir(cfg)?;
    let text = output::write_mesh_study(&dir, &rows)?;
    write_resolved(&dir, cfg)?;
    print!("{text}");
    if rows.iter().all(|r| r.error.is_some()) {
        return Err(CliError::Study("every study cell failed".into()));
    }
    Ok(())
}

fn run_control_study(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let scheme = cfg.scheme()?;
    let counts = cfg.study.controls.clone();
    if counts.is_empty() {
        return Err(CliError::Config(
            "control-study needs study.controls".into(),
        ));
    }
    for &j in &counts {
        discretize_controls(spec.control_interval, j)?;
    }
    let finest = *counts.iter().max().unwrap();
    Discretization::new(
        &spec,
        &discretize_controls(spec.control_interval, finest)?,
        &scheme,
    )?;
    let rows = control_study(&spec, &counts, &scheme, cfg.study.timing)?;
    let dir = out_dir(cfg)?;
    let text = output::write_control_study(&dir, &rows)?;
    write_resolved(&dir, cfg)?;
    print!("{text}");
    Ok(())
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let scheme = cfg.scheme()?;
    let controls = discretize_controls(spec.control_interval, cfg.scheme.controls)?;
    let d = Discretization::new(&spec, &controls, &scheme)?;
    let text = serde_json::to_string_pretty(&cfg.resolved()?)
        .map_err(|e| CliError::Config(e.to_string()))?;
    println!("{text}");
    eprintln!(
        "ok: {} nodes, {} steps, C_p = {:.6}, contraction bound {:.4}",
        d.grid().len(),
        d.grid().n_steps(),
        d.c_p(),
        d.contraction_bound()
    );
    Ok(())
}

type Verb = fn(&RunConfig) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, verb): (&Common, Verb) = match &cli.command {
        Command::Solve(c) => (c, run_solve),
        Command::MeshStudy(c) => (c, run_mesh_study),
        Command::ControlStudy(c) => (c, run_control_study),
        Command::ValidateConfig(c) => (c, validate),
    };
    let cfg = common.load()?;
    set_threads(common.threads)?;
    verb(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hjbvi: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
