use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use constel::earth::{default_epoch, latlon_grid, SimWindow};
use constel::harness::{self, ExperimentConfig, HarnessError, RunDirectory, SatelliteRecord};
use constel::metrics::RelaxConfig;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

type Result<T> = std::result::Result<T, CliError>;

/// Differentiable satellite constellation design.
#[derive(Debug, Parser)]
#[command(name = "constel", version)]
struct Cli {
    /// Worker threads (defaults to every core).
    #[arg(long, global = true, env = "CONSTEL_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Where an experiment config comes from, plus the usual overrides.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML experiment config.
    config: Option<PathBuf>,
    /// Built-in preset instead of a config file (see `constel presets`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Seed for every random stream (initial angles, sidereal offset, optimizer).
    #[arg(long)]
    seed: Option<u32>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the iteration count of the gradient run.
    #[arg(long)]
    iterations: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => harness::preset(name)?,
            (None, None) => return Err(CliError::Usage("pass a config file or --preset".into())),
        };
        if let Some(seed) = self.seed {
            cfg.seeds = harness::Seeds { init: seed, gmst: seed, optimizer: seed.into() };
        }
        if let Some(out) = &self.out {
            cfg.output.dir = Some(out.clone());
        }
        if let Some(n) = self.iterations {
            match &mut cfg.optimizer {
                harness::OptimizerConfig::Adamw(a) => a.iterations = n,
                _ => return Err(CliError::Usage("--iterations applies to gradient runs only".into())),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its run directory.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Print a progress line every this many iterations (0 = never).
        #[arg(long, default_value_t = 50)]
        every: usize,
    },
    /// Hard and soft metrics of a fixed constellation, no optimization.
    Eval {
        /// Run directory whose final elements are scored.
        #[arg(long, conflicts_with_all = ["walker", "config", "preset"])]
        run: Option<PathBuf>,
        /// Walker pattern T/P/F scored on the default grid and window.
        #[arg(long, conflicts_with_all = ["config", "preset"])]
        walker: Option<String>,
        #[arg(long, default_value_t = 60.0)]
        inc_deg: f64,
        #[arg(long, default_value_t = 550.0)]
        altitude_km: f64,
        /// Config or preset whose initial constellation is scored.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Print the elements of a Walker delta pattern as JSON.
    Walker {
        /// Pattern T/P/F, e.g. 24/6/1.
        pattern: String,
        #[arg(long, default_value_t = 60.0)]
        inc_deg: f64,
        #[arg(long, default_value_t = 550.0)]
        altitude_km: f64,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SA, GA and DE over several seeds from the config's initial point.
    Baselines {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of seeds per method (0..n).
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Loss on a grid over two parameter slots (needs a `[landscape]` section).
    Landscape {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Loss on the plane of a run's top two principal directions.
    Pca {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 41)]
        resolution: usize,
        /// Output directory (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relaxation hyperparameter sweep over four solutions (needs a `[gridsearch]` section).
    Gridsearch {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// List the built-in presets, or print one as TOML.
    Presets { name: Option<String> },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run { cfg, every } => run(&cfg.load()?, every),
        Command::Eval { run, walker, inc_deg, altitude_km, config, preset } => {
            let report = if let Some(dir) = run {
                let rd = RunDirectory::open(&dir)?;
                let setup = rd.config.setup()?;
                setup.problem.report_elements(&rd.final_elements()).map_err(HarnessError::from)?
            } else if let Some(pattern) = walker {
                let els = walker_elements(&pattern, inc_deg, altitude_km)?;
                harness::eval_constellation(&els, &latlon_grid(36, 72, 70.0), &SimWindow::day(240), &RelaxConfig::default())?
            } else {
                let cfg = ConfigArgs { config, preset, seed: None, out: None, iterations: None }.load()?;
                let setup = cfg.setup()?;
                setup.problem.report_elements(&setup.initial_elements).map_err(HarnessError::from)?
            };
            emit(&serde_json::to_string_pretty(&report)?)
        }
        Command::Walker { pattern, inc_deg, altitude_km, out } => {
            let els = walker_elements(&pattern, inc_deg, altitude_km)?;
            let per_plane = els.len() / parse_pattern(&pattern)?.1;
            let records: Vec<SatelliteRecord> =
                els.iter().enumerate().map(|(i, el)| SatelliteRecord::new(i, i / per_plane, el)).collect();
            let text = serde_json::to_string_pretty(&records)?;
            match out {
                Some(path) => fs::write(&path, text).map_err(|e| CliError::Io { path, source: e }),
                None => emit(&text),
            }
        }
        Command::Baselines { cfg, seeds } => {
            let base = cfg.load()?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let (_, summary) = harness::run_baseline_suite(&base, &seeds)?;
            println!("method  best seed  coverage %       revisit min");
            for s in summary {
                println!(
                    "{:<7} {:>9}  {:6.2}–{:<6.2}  {:6.1}–{:<6.1}",
                    s.method,
                    s.best_seed,
                    100.0 * s.coverage_lo,
                    100.0 * s.coverage_hi,
                    s.revisit_lo,
                    s.revisit_hi
                );
            }
            Ok(())
        }
        Command::Landscape { cfg } => landscape(&cfg.load()?),
        Command::Pca { run_dir, resolution, out } => {
            let rd = RunDirectory::open(&run_dir)?;
            let setup = rd.config.setup()?;
            let slice = harness::pca_slice(&rd.trace(), &setup.problem, resolution)?;
            let out = out.unwrap_or(run_dir);
            create_dir(&out)?;
            harness::write_cells(&out.join("pca_slice.csv"), &slice.cells)?;
            harness::write_points(&out.join("pca_trajectory.csv"), &slice.trajectory)?;
            let basis = serde_json::json!({
                "mean": slice.basis.mean,
                "components": slice.basis.components,
                "singular_values": slice.basis.singular_values,
                "explained": slice.basis.explained,
            });
            write_text(&out.join("pca_basis.json"), &serde_json::to_string_pretty(&basis)?)?;
            println!(
                "PC1 {:.1}%  PC2 {:.1}%  -> {}",
                100.0 * slice.basis.explained[0],
                100.0 * slice.basis.explained[1],
                out.display()
            );
            Ok(())
        }
        Command::Gridsearch { cfg } => gridsearch(&cfg.load()?),
        Command::Presets { name: None } => {
            harness::PRESETS.iter().for_each(|p| println!("{p}"));
            Ok(())
        }
        Command::Presets { name: Some(name) } => {
            emit(harness::preset(&name)?.to_toml()?.trim_end())
        }
    }
}

fn run(cfg: &ExperimentConfig, every: usize) -> Result<()> {
    let out = harness::run_experiment_with(cfg, |r| {
        if every > 0 && r.iter % every == 0 {
            eprintln!(
                "iter {:>5}  loss {:>10.5}  coverage {:6.2}%  revisit {:7.2} min",
                r.iter,
                r.loss,
                100.0 * r.hard_coverage,
                r.hard_revisit_min
            );
        }
    })?;
    let m = &out.metrics;
    println!(
        "{}: coverage {:.2}% -> {:.2}%, revisit {:.1} -> {:.1} min ({} evaluations)",
        m.id,
        100.0 * m.initial.hard_coverage,
        100.0 * m.final_.hard_coverage,
        m.initial.hard_revisit_min,
        m.final_.hard_revisit_min,
        m.evaluations
    );
    if let Some(dir) = &out.dir {
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn landscape(cfg: &ExperimentConfig) -> Result<()> {
    let spec = cfg.landscape.as_ref().ok_or_else(|| CliError::Usage(format!("{} has no [landscape] section", cfg.id)))?;
    let setup = cfg.setup()?;
    let trace = spec.trace.as_deref().map(RunDirectory::open).transpose()?.map(|rd| rd.trace());
    let land = harness::landscape_grid(&setup.problem, &setup.theta0, [spec.x.axis(), spec.y.axis()], trace.as_ref())?;
    let out = output_dir(cfg)?;
    harness::write_cells(&out.join("landscape.csv"), &land.cells)?;
    if trace.is_some() {
        harness::write_points(&out.join("landscape_trajectory.csv"), &land.trajectory)?;
    }
    let best = land.cells.iter().min_by(|a, b| a.hard_loss.total_cmp(&b.hard_loss)).expect("non-empty grid");
    println!(
        "{} cells; hard-loss minimum {:.4} at ({:.2}, {:.2}) -> {}",
        land.cells.len(),
        best.hard_loss,
        best.x,
        best.y,
        out.display()
    );
    Ok(())
}

fn gridsearch(cfg: &ExperimentConfig) -> Result<()> {
    let spec =
        cfg.gridsearch.as_ref().ok_or_else(|| CliError::Usage(format!("{} has no [gridsearch] section", cfg.id)))?;
    let setup = cfg.setup()?;
    let epoch = cfg.window.epoch;
    let solutions =
        spec.solutions.iter().map(|p| harness::load_solution(p, epoch)).collect::<std::result::Result<Vec<_>, _>>()?;
    let rows = harness::hyperparam_grid(&setup.problem, &solutions, &spec.grid)?;
    let out = output_dir(cfg)?;
    harness::write_rows(&out.join("gridsearch.csv"), &rows)?;
    let valid = rows.iter().filter(|r| r.valid).count();
    println!("{} combinations, {valid} valid", rows.len());
    match harness::select(&rows) {
        Some(r) => println!(
            "selected tau_cov {}°, tau_rev {}°, beta {} min, lambda {} (margin {:.4})",
            r.tau_cov_deg, r.tau_rev_deg, r.beta_min, r.lambda, r.margin
        ),
        None => println!("no combination orders the solutions correctly"),
    }
    Ok(())
}

/// Prints to stdout, treating a closed pipe (`| head`) as success.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}

fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.id));
    create_dir(&dir)?;
    Ok(dir)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

fn parse_pattern(pattern: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = pattern.split('/').collect();
    let bad = || CliError::Usage(format!("expected a Walker pattern T/P/F, got '{pattern}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let n = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    Ok((n(parts[0])?, n(parts[1])?, n(parts[2])?))
}

fn walker_elements(pattern: &str, inc_deg: f64, altitude_km: f64) -> Result<Vec<constel::ElementSet>> {
    let (t, p, f) = parse_pattern(pattern)?;
    Ok(harness::walker_generate(t, p, f, inc_deg.to_radians(), altitude_km, default_epoch())
        .map_err(HarnessError::from)?)
}
