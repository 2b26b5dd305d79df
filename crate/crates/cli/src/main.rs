//! `va`: run, ensemble, statistics and convergence commands.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vlasov_ampere::config::{self, RunConfig};
use vlasov_ampere::driver::{self, ConvergenceMode};
use vlasov_ampere::ensemble::{self, EnsembleOptions};
use vlasov_ampere::Error;

const OUTPUT_ROOT_ENV: &str = "VA_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "va", version, about = "Energy-conserving DG solver for the 1D1V Vlasov-Ampere system")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ensemble with per-run random phases and compute its statistics.
    Ensemble {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of runs.
        #[arg(short = 'r', long, default_value_t = 10)]
        runs: usize,
        /// Run r uses seed base_seed XOR r.
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Spacing of the common alignment grid.
        #[arg(long)]
        grid_dt: Option<f64>,
        #[arg(long, default_value_t = ensemble::DEFAULT_BINS)]
        bins: usize,
        /// Time samples pooled per chi-square test.
        #[arg(long, default_value_t = ensemble::DEFAULT_WINDOW)]
        window: usize,
        /// Write a pooled histogram for the window starting at this time.
        #[arg(long = "histogram")]
        histograms: Vec<f64>,
        /// Use the base seed for every run.
        #[arg(long)]
        same_seed: bool,
    },
    /// Recompute statistics of an existing ensemble directory.
    Stats { dir: PathBuf },
    /// Self-convergence study in the time step.
    Convergence {
        #[command(flatten)]
        source: ConfigSource,
        /// Number of refinement levels (at least 3).
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Advect in x only with the field held at zero.
        #[arg(long)]
        transport_only: bool,
        /// CSV output file (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a preset configuration as JSON.
    Preset { name: String },
}

#[derive(Args)]
struct ConfigSource {
    /// JSON configuration file.
    config: Option<PathBuf>,
    /// Start from a named preset instead of a file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override any field: dotted.key=json_value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigSource {
    fn load(&self) -> vlasov_ampere::Result<RunConfig> {
        let base = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::from_file(path)?,
            (None, Some(name)) => config::preset(name)?,
            (None, None) => return Err(Error::Config("give a configuration file or --preset".into())),
        };
        let mut ov: Vec<String> = Vec::new();
        if let Some(s) = &self.scheme {
            ov.push(format!("scheme={}", serde_json::Value::String(s.clone())));
        }
        if let Some(v) = self.cfl {
            ov.push(format!("cfl={v}"));
        }
        if let Some(v) = self.dt {
            ov.push(format!("dt={v}"));
        }
        if let Some(v) = self.t_end {
            ov.push(format!("t_end={v}"));
        }
        if let Some(v) = self.seed {
            ov.push(format!("seed={v}"));
        }
        ov.extend(self.overrides.iter().cloned());
        base.with_overrides(&ov)
    }
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

/// `--out`, else `output.dir` under the output root, else a directory named by the config hash.
fn resolve_out(flag: &Option<PathBuf>, cfg: &RunConfig, prefix: &str) -> PathBuf {
    let root = output_root();
    match (flag, &cfg.output.dir) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => root.join(d),
        (None, None) => root.join(format!("{prefix}-{}", &cfg.hash()[..12])),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Shape(_) | Error::Range(_) => 2,
        Error::SolverFailure { .. } | Error::Numerical(_) => 3,
        Error::BlowUp { .. } => 4,
        Error::Io { .. } | Error::Format { .. } => 5,
        Error::EnsembleRun { source, .. } => exit_code(source),
    }
}

fn execute(cli: Cli) -> vlasov_ampere::Result<()> {
    match cli.command {
        Command::Run { source, out } => {
            let cfg = source.load()?;
            let dir = resolve_out(&out, &cfg, "run");
            let res = driver::execute_run(&cfg, &dir)?;
            let s = &res.summary;
            println!(
                "completed {} steps to t = {} in {:.1} s; max relative drift N_e {:.2e}, N_i {:.2e}, TE {:.2e}; output in {}",
                s.steps,
                s.t_final,
                s.wall_seconds,
                s.max_rel_n_e,
                s.max_rel_n_i,
                s.max_rel_te,
                dir.display()
            );
        }
        Command::Ensemble {
            source,
            out,
            runs,
            base_seed,
            workers,
            grid_dt,
            bins,
            window,
            histograms,
            same_seed,
        } => {
            let cfg = source.load()?;
            let dir = resolve_out(&out, &cfg, "ensemble");
            let opts = EnsembleOptions {
                runs,
                base_seed,
                workers,
                grid_dt,
                bins,
                window,
                histogram_windows: histograms,
                same_seed,
            };
            let ens = ensemble::run_ensemble(&cfg, &opts, &dir)?;
            print_ensemble(&ens, &dir, &opts);
        }
        Command::Stats { dir } => {
            let ens = ensemble::analyze_ensemble(&dir)?;
            let manifest: ensemble::EnsembleManifest =
                vlasov_ampere::io::read_json(&dir.join(ensemble::ENSEMBLE_MANIFEST))?;
            print_ensemble(&ens, &dir, &manifest.options);
        }
        Command::Convergence {
            source,
            levels,
            transport_only,
            out,
        } => {
            let dt = source
                .dt
                .ok_or_else(|| Error::Config("convergence needs --dt, the coarsest time step".into()))?;
            let cfg = source.load()?;
            let mode = if transport_only {
                ConvergenceMode::TransportOnly
            } else {
                ConvergenceMode::Full
            };
            let rows = driver::convergence_study(&cfg, dt, levels, mode)?;
            match out {
                Some(path) => driver::write_convergence_csv(&path, &rows)?,
                None => {
                    let mut text = driver::CONVERGENCE_HEADER.join(",") + "\n";
                    for r in &rows {
                        text += &format!(
                            "{},{},{},{}\n",
                            r.level,
                            vlasov_ampere::io::format_float(r.dt),
                            vlasov_ampere::io::format_float(r.difference),
                            vlasov_ampere::io::format_float(r.order)
                        );
                    }
                    emit(&text)?;
                }
            }
        }
        Command::Preset { name } => {
            let cfg = config::preset(&name)?;
            emit(&(serde_json::to_string_pretty(&cfg).expect("configs serialize") + "\n"))?;
        }
    }
    Ok(())
}

// A closed pipe (`va preset s1 | head`) is not an error.
fn emit(text: &str) -> vlasov_ampere::Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn print_ensemble(ens: &ensemble::EnsembleSeries, dir: &Path, opts: &EnsembleOptions) {
    let chi = ens.chi_square_series(opts.window, opts.bins);
    let tested: Vec<_> = chi.iter().flatten().collect();
    let frac = |level: f64| {
        tested.iter().filter(|c| c.p_value < level).count() as f64 / tested.len().max(1) as f64
    };
    println!(
        "{} runs aligned on {} times; chi-square rejections {:.1}% at 0.05 and {:.1}% at 0.01 over {} windows; output in {}",
        ens.runs(),
        ens.grid.len(),
        100.0 * frac(0.05),
        100.0 * frac(0.01),
        tested.len(),
        dir.display()
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("va: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
