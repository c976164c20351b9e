//! Command-line front end. Every run writes one directory with fixed file
//! names; errors are reported as a JSON object on stderr with exit status 2.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::Config;
use crate::diagnostics::{
    check_decay, classify_regime, count_monotonicity_changes, estimate_holder, particle_min_window, DecayFit, DecayMode,
    HolderFit, RegimeOptions,
};
use crate::error::{Error, Result};
use crate::io::{self, Manifest, RegimeRow};
use crate::oracles;
use crate::particle::run_particle;
use crate::pde::run_pde;
use crate::types::{DensitySnapshot, FrontierPath};

#[derive(Debug, Parser)]
#[command(name = "supercool", version, about = "Supercooled Stefan problem: particle and PDE solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a config key, e.g. `--set particle.n_particles=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the particle system.
    Simulate(RunArgs),
    /// Run the finite-difference solver.
    Pde(RunArgs),
    /// Sup distance between the frontiers of two runs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify all snapshots of a run and fit growth exponents.
    Classify { run: PathBuf },
    /// Evaluate reference values.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    Reflection {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        x0: f64,
        #[arg(long)]
        y: f64,
    },
    /// Blow-up and no-jump criteria for the density and alpha of a config.
    Criteria {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

/// Parses `args` and runs; returns the process exit status.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            let mut obj = json!({ "error": e.kind(), "message": e.to_string() });
            if let Some(p) = e.path() {
                obj["path"] = json!(p.display().to_string());
            }
            eprintln!("{obj}");
            2
        }
    }
}

pub fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Simulate(a) => cmd_simulate(a).map(|_| 0),
        Command::Pde(a) => cmd_pde(a).map(|_| 0),
        Command::Compare { a, b, tolerance, out } => cmd_compare(a, b, *tolerance, out.as_deref()),
        Command::Classify { run } => cmd_classify(run).map(|_| 0),
        Command::Oracle(o) => cmd_oracle(o).map(|_| 0),
    }
}

fn load(args: &RunArgs) -> Result<(Config, PathBuf)> {
    let mut config = Config::load(&args.config, &args.set)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output.dir = Some(out.clone());
    }
    let config = config.validate()?;
    let dir = config
        .output
        .dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output.dir".into()))?;
    io::ensure_dir(&dir)?;
    Ok((config, dir))
}

pub fn cmd_simulate(args: &RunArgs) -> Result<PathBuf> {
    let (config, dir) = load(args)?;
    let run = run_particle(&config)?;
    io::write_frontier(&dir.join(io::FRONTIER_FILE), &run.frontier)?;
    for s in &run.snapshots {
        io::write_snapshot(&dir, s)?;
    }
    io::write_json(&dir.join(io::SUMMARY_FILE), &run.summary)?;
    io::write_json(&dir.join(io::MANIFEST_FILE), &Manifest::new("simulate", &config))?;
    write_diagnostics(&dir, &config, &run.frontier, &run.snapshots, Some(config.particle_mass()))?;
    Ok(dir)
}

pub fn cmd_pde(args: &RunArgs) -> Result<PathBuf> {
    let (config, dir) = load(args)?;
    let run = run_pde(&config)?;
    io::write_frontier(&dir.join(io::FRONTIER_FILE), &run.frontier)?;
    for s in &run.snapshots {
        io::write_snapshot(&dir, s)?;
    }
    io::write_pde_steps(&dir.join(io::PDE_STEPS_FILE), &run.steps)?;
    io::write_json(&dir.join(io::SUMMARY_FILE), &run.summary)?;
    io::write_json(&dir.join(io::MANIFEST_FILE), &Manifest::new("pde", &config))?;
    write_diagnostics(&dir, &config, &run.frontier, &run.snapshots, None)?;
    Ok(dir)
}

#[derive(Debug, Serialize)]
struct SnapshotFits {
    t: f64,
    decay_linear: Option<DecayFit>,
    monotonicity_changes: usize,
}

#[derive(Debug, Serialize)]
struct HolderEntry {
    t: f64,
    fit: Option<HolderFit>,
    note: Option<String>,
}

#[derive(Debug, Serialize)]
struct Fits {
    holder: Vec<HolderEntry>,
    snapshots: Vec<SnapshotFits>,
}

/// Regimes table and fits for a run; `particle_mass` is set for particle runs.
fn write_diagnostics(
    dir: &Path,
    config: &Config,
    frontier: &FrontierPath,
    snapshots: &[DensitySnapshot],
    particle_mass: Option<f64>,
) -> Result<()> {
    let base = RegimeOptions::from_config(&config.diagnostics);
    let rows: Vec<RegimeRow> = snapshots
        .iter()
        .map(|s| {
            let opts = match particle_mass {
                Some(m) => base.with_min_window(particle_min_window(s, m)),
                None => base,
            };
            RegimeRow { t: s.t, label: classify_regime(s, config.alpha, &opts).ok() }
        })
        .collect();
    io::write_regimes(&dir.join(io::REGIMES_FILE), &rows)?;

    let window = (config.diagnostics.holder_window[0], config.diagnostics.holder_window[1]);
    let mut starts = vec![0.0];
    starts.extend(frontier.jumps.iter().map(|j| j.time));
    let holder = starts
        .into_iter()
        .map(|t| match estimate_holder(frontier, t, window) {
            Ok(fit) => HolderEntry { t, fit: Some(fit), note: None },
            Err(e) => HolderEntry { t, fit: None, note: Some(e.to_string()) },
        })
        .collect();
    let bandwidth = 5.0 * config.grid.dx;
    let snaps = snapshots
        .iter()
        .map(|s| SnapshotFits {
            t: s.t,
            decay_linear: check_decay(s, DecayMode::Linear, 1.0).ok(),
            monotonicity_changes: count_monotonicity_changes(s, bandwidth),
        })
        .collect();
    io::write_json(&dir.join(io::FITS_FILE), &Fits { holder, snapshots: snaps })
}

/// Sup distance between two right-continuous frontiers over the union of
/// their time grids. Returns `(distance, time of the maximum)`.
pub fn frontier_distance(a: &FrontierPath, b: &FrontierPath) -> (f64, f64) {
    let mut best = (0.0, 0.0);
    for &t in a.times.iter().chain(&b.times) {
        let d = (a.step_value(t) - b.step_value(t)).abs();
        if d > best.0 {
            best = (d, t);
        }
    }
    best
}

pub fn cmd_compare(a: &Path, b: &Path, tolerance: f64, out: Option<&Path>) -> Result<i32> {
    let ma: Manifest = io::read_json(&a.join(io::MANIFEST_FILE))?;
    let mb: Manifest = io::read_json(&b.join(io::MANIFEST_FILE))?;
    if (ma.config.horizon - mb.config.horizon).abs() > 1e-12 * ma.config.horizon.max(1.0) {
        return Err(Error::Input(format!(
            "horizons differ: {} vs {}",
            ma.config.horizon, mb.config.horizon
        )));
    }
    let fa = io::read_frontier(&a.join(io::FRONTIER_FILE))?;
    let fb = io::read_frontier(&b.join(io::FRONTIER_FILE))?;
    let (distance, at) = frontier_distance(&fa, &fb);
    let within = distance <= tolerance;
    let report = json!({
        "a": a.display().to_string(),
        "b": b.display().to_string(),
        "sup_distance": distance,
        "at_time": at,
        "tolerance": tolerance,
        "within_tolerance": within,
    });
    match out {
        Some(p) => io::write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).expect("json")),
    }
    Ok(if within { 0 } else { 1 })
}

pub fn cmd_classify(run: &Path) -> Result<()> {
    let manifest: Manifest = io::read_json(&run.join(io::MANIFEST_FILE))?;
    let config = manifest.config;
    let paths = io::list_snapshots(run)?;
    if paths.is_empty() {
        return Err(Error::Input(format!("no snapshot files in {}", run.display())));
    }
    let snapshots = paths.iter().map(|p| io::read_snapshot(p)).collect::<Result<Vec<_>>>()?;
    let mut frontier = io::read_frontier(&run.join(io::FRONTIER_FILE))?;
    let particle_mass = (manifest.command == "simulate").then(|| config.particle_mass());
    let rule = match particle_mass {
        Some(m) => crate::diagnostics::JumpRule::particle(&config.diagnostics, config.alpha, m),
        None => crate::diagnostics::JumpRule::pde(&config.diagnostics, config.grid.dx),
    };
    frontier.jumps = crate::diagnostics::detect_jumps(&frontier, &rule);
    write_diagnostics(run, &config, &frontier, &snapshots, particle_mass)
}

fn cmd_oracle(o: &OracleCommand) -> Result<()> {
    let value = match o {
        OracleCommand::Reflection { t, x0, y } => {
            json!({ "reflection_density": oracles::reflection_density(*t, *x0, *y)? })
        }
        OracleCommand::Criteria { config, set } => {
            let c = Config::load(config, set)?;
            json!({
                "alpha": c.alpha,
                "mean": c.density.mean(),
                "sup": c.density.sup(),
                "blowup_criterion": oracles::blowup_criterion(&c.density, c.alpha),
                "nojump_criterion": oracles::nojump_criterion(&c.density, c.alpha),
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&value).expect("json"));
    Ok(())
}
