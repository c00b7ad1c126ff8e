mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phkin::{Error, Result};

use commands::Command;
use config::{from_table, merge, parse_assignment, to_table, RunConfig};
use output::{config_hash, read_manifest, resolve_output, RunDir};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  I/O or cache failure
  2  invalid configuration (the message names the field)
  3  divergent conductivity: the current overlaps a conserved mode
  4  unstable time step
  5  numerical inconsistency (failed self-check, route disagreement, exponent outside its band)

Relative output paths resolve against $PHKIN_OUTPUT_ROOT, or the working directory.";

#[derive(Parser)]
#[command(name = "phkin", version, about = "Phonon kinetic theory of lattice energy transport", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the dispersion relation and equilibrium occupation on the grid.
    Dispersion(RunArgs),
    /// Assemble linearized collision operators and their structural diagnostics.
    CollisionMatrix(RunArgs),
    /// Kinetic current correlation C(t).
    Correlation(RunArgs),
    /// Green-Kubo conductivity by direct solve and by time integration.
    Kappa(RunArgs),
    /// Relaxation-time series and its decay fit.
    Rta(RunArgs),
    /// Fit exponential and power-law decay to a series CSV.
    Fit(RunArgs),
    /// Langevin fluctuations: simulated lag covariance against theory.
    Fluctuate(RunArgs),
    /// Molecular-dynamics current correlation of the microscopic crystal.
    Md(RunArgs),
    /// FPU-β relaxation-time exponent against 3/5.
    ReproduceFpu(RunArgs),
    /// Repeat a run from the manifest in its output directory.
    Rerun {
        dir: PathBuf,
        /// Write into this directory instead of the original one.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML file with run settings; flags take precedence.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    omega0: Option<f64>,
    #[arg(long)]
    dim: Option<i64>,
    /// Grid points per axis (even).
    #[arg(long)]
    n: Option<i64>,
    #[arg(long)]
    beta: Option<f64>,
    /// quantum or classical.
    #[arg(long)]
    statistics: Option<String>,
    /// Channels joined by '+', e.g. L3+L4.
    #[arg(long)]
    channel: Option<String>,
    /// gaussian or exact-1d.
    #[arg(long)]
    resolver: Option<String>,
    #[arg(long)]
    eta0: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<i64>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Series CSV for `fit`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Worker threads; the default is the machine's parallelism.
    #[arg(long)]
    workers: Option<i64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Reuse assembled operators stored here.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Any other config key, as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn overrides(&self) -> Result<toml::Table> {
        let mut t = toml::Table::new();
        let mut put = |k: &str, v: toml::Value| {
            t.insert(k.into(), v);
        };
        let path = |p: &PathBuf| toml::Value::String(p.display().to_string());
        if let Some(v) = &self.preset {
            put("preset", v.clone().into())
        }
        if let Some(v) = self.omega0 {
            put("omega0", v.into())
        }
        if let Some(v) = self.dim {
            put("dim", v.into())
        }
        if let Some(v) = self.n {
            put("n", v.into())
        }
        if let Some(v) = self.beta {
            put("beta", v.into())
        }
        if let Some(v) = &self.statistics {
            put("statistics", v.clone().into())
        }
        if let Some(v) = &self.channel {
            put("channels", toml::Value::Array(vec![v.clone().into()]))
        }
        if let Some(v) = &self.resolver {
            put("resolver", v.clone().into())
        }
        if let Some(v) = self.eta0 {
            put("eta0", v.into())
        }
        if let Some(v) = self.lambda {
            put("lambda", v.into())
        }
        if let Some(v) = self.seed {
            put("seed", v.into())
        }
        if let Some(v) = self.t_max {
            put("t_max", v.into())
        }
        if let Some(v) = &self.input {
            put("fit_input", path(v))
        }
        if let Some(v) = self.workers {
            put("workers", v.into())
        }
        if let Some(v) = &self.output {
            put("output", path(v))
        }
        if let Some(v) = &self.cache_dir {
            put("cache_dir", path(v))
        }
        for s in &self.set {
            let (k, v) = parse_assignment(s)?;
            t.insert(k, v);
        }
        Ok(t)
    }

    fn build(&self, cmd: Command) -> Result<RunConfig> {
        let mut table = to_table(&cmd.base_config())?;
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p)?;
            let file: toml::Table =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))?;
            merge(&mut table, file);
        }
        merge(&mut table, self.overrides()?);
        from_table(&table)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Cache(_) => 1,
        Error::Config(_) | Error::Domain(_) | Error::Dimension(_) => 2,
        Error::Divergent { .. } => 3,
        Error::UnstableStep { .. } => 4,
        Error::Inconsistent(_) => 5,
    }
}

fn execute(cmd: Command, mut cfg: RunConfig) -> Result<(String, PathBuf)> {
    let workers = cfg.workers.unwrap_or_else(config::default_workers);
    cfg.workers = Some(workers);
    let model = cfg.validate(cmd.needs())?;
    let hash = config_hash(&cfg);
    let mut out = RunDir::create(resolve_output(&cfg, cmd.name(), &hash))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("workers: {e}")))?;
    let result = pool.install(|| commands::run(cmd, &cfg, &model, &mut out));
    let dir = out.finish(cmd.name(), &cfg, workers)?;
    result.map(|s| (s, dir))
}

fn dispatch(cli: Cli) -> Result<(String, PathBuf)> {
    match cli.command {
        Cmd::Rerun { dir, output } => {
            let m = read_manifest(&dir)?;
            let cmd = Command::from_name(&m.command)
                .ok_or_else(|| Error::Config(format!("command: unknown {:?} in manifest", m.command)))?;
            let mut cfg = m.config;
            cfg.output = Some(match output {
                Some(o) => o,
                None => dir.canonicalize()?,
            });
            execute(cmd, cfg)
        }
        other => {
            let (cmd, args) = match other {
                Cmd::Dispersion(a) => (Command::Dispersion, a),
                Cmd::CollisionMatrix(a) => (Command::CollisionMatrix, a),
                Cmd::Correlation(a) => (Command::Correlation, a),
                Cmd::Kappa(a) => (Command::Kappa, a),
                Cmd::Rta(a) => (Command::Rta, a),
                Cmd::Fit(a) => (Command::Fit, a),
                Cmd::Fluctuate(a) => (Command::Fluctuate, a),
                Cmd::Md(a) => (Command::Md, a),
                Cmd::ReproduceFpu(a) => (Command::ReproduceFpu, a),
                Cmd::Rerun { .. } => unreachable!(),
            };
            execute(cmd, args.build(cmd)?)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok((summary, dir)) => {
            println!("{summary}");
            println!("output: {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("phkin: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
