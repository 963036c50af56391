use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use granulesim_cli::{exit_code, exit_code_any, load_config, write_outputs, EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION};
use granulesim_core::simulation::{self, Mode};
use granulesim_core::validation::{self, Suite};
use granulesim_core::{PanelRule, SimulationConfig};
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "granulesim",
    version,
    about = "Spherical free-boundary simulator of granular biofilm growth"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Marching,
    Picard,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Marching => Mode::Marching,
            ModeArg::Picard => Mode::Picard,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Analytic,
    Oracle,
    Invariants,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Analytic => Suite::Analytic,
            SuiteArg::Oracle => Suite::Oracle,
            SuiteArg::Invariants => Suite::Invariants,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write radius.csv, profiles and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "marching")]
        mode: ModeArg,
        /// Output directory; defaults to `output.dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the contraction report for the configured horizon as JSON.
    Contraction {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the built-in self-check suites.
    Validate {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        /// Print the checks as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run several configurations concurrently, each into `<out>/<config stem>/`.
    Sweep {
        #[arg(long, num_args = 1.., required = true)]
        config: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "marching")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_any(&e)
        }
    };
    ExitCode::from(code)
}

fn dispatch(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::Run { config, mode, out } => {
            let cfg = load_config(&config)?;
            let dir = match out.or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)) {
                Some(d) => d,
                None => {
                    eprintln!("error: no output directory (pass --out or set output.dir)");
                    return Ok(EXIT_CONFIG);
                }
            };
            run_one(&cfg, &dir, mode.into())
        }
        Command::Contraction { config } => {
            let cfg = load_config(&config)?;
            let report = simulation::contraction_report(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(EXIT_OK)
        }
        Command::Validate { suite, json } => {
            let checks = validation::run_suite(suite.into(), PanelRule::TRAPEZOID);
            if json {
                println!("{}", serde_json::to_string_pretty(&checks)?);
            } else {
                for c in &checks {
                    println!(
                        "[{}] {}/{}: measured {:.3e}, threshold {:.3e} ({})",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.suite,
                        c.name,
                        c.measured,
                        c.threshold,
                        c.detail
                    );
                }
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            eprintln!("{} checks, {failed} failed", checks.len());
            Ok(if failed == 0 { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::Sweep {
            config,
            mode,
            out,
            jobs,
        } => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .context("building thread pool")?;
            let mode: Mode = mode.into();
            let codes: Vec<u8> = pool.install(|| {
                config
                    .par_iter()
                    .map(|path| {
                        let stem = path
                            .file_stem()
                            .map(|s| s.to_string_lossy().into_owned())
                            .unwrap_or_default();
                        let code = load_config(path)
                            .and_then(|cfg| run_one(&cfg, &out.join(&stem), mode))
                            .unwrap_or_else(|e| {
                                eprintln!("{}: {e:#}", path.display());
                                exit_code_any(&e)
                            });
                        println!("{}\t{code}", path.display());
                        code
                    })
                    .collect()
            });
            Ok(codes.into_iter().max().unwrap_or(EXIT_OK))
        }
    }
}

/// Runs one config, writing outputs even for failed runs that have partial results.
fn run_one(cfg: &SimulationConfig, dir: &Path, mode: Mode) -> anyhow::Result<u8> {
    match simulation::run(cfg, mode) {
        Ok(summary) => {
            write_outputs(dir, &summary, None)?;
            Ok(EXIT_OK)
        }
        Err(failure) => {
            eprintln!("error: {}", failure.error);
            if let Some(partial) = &failure.partial {
                write_outputs(dir, partial, Some(&failure.error))?;
                if let Some(report) = &partial.contraction {
                    if !report.certified {
                        eprintln!("{}", serde_json::to_string_pretty(report)?);
                    }
                }
            }
            Ok(exit_code(&failure.error))
        }
    }
}
