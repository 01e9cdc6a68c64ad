use anyhow::{anyhow, bail, Result};
use clap::{Parser, ValueEnum};
use partimax_cli::{cmd_bench, cmd_select, cmd_verify, load_config};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Bench,
    Verify,
    Select,
}

/// Box-selection benchmarks for particle-coverage tracking.
///
/// Modes: `bench` sweeps selection algorithms over simulated tracking
/// episodes and writes a CSV table; `verify` runs the statistical
/// verification suites; `select` runs one selector over a particle file and
/// prints the chosen boxes.
#[derive(Debug, Parser)]
#[command(name = "partimax", version)]
struct Cli {
    /// Config file (TOML). Omitted keys take built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides the config's mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,

    /// Overrides the master seed (bench sweeps and select runs).
    #[arg(long)]
    seed: Option<u64>,

    /// CSV output path (bench mode).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Runs a single verification suite instead of all of them.
    #[arg(long)]
    suite: Option<String>,

    /// Worker threads for bench mode; 0 = one per core.
    #[arg(long)]
    jobs: Option<usize>,

    /// Particle CSV with one x,y,vx,vy row per particle (select mode).
    #[arg(long)]
    belief: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.bench.seed = seed;
        cfg.select.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.bench.jobs = jobs;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.display().to_string());
    }
    if let Some(belief) = &cli.belief {
        cfg.belief = Some(belief.display().to_string());
    }
    if let Some(suite) = &cli.suite {
        cfg.suite = Some(suite.clone());
    }
    if let Some(mode) = cli.mode {
        cfg.mode = match mode {
            Mode::Bench => "bench",
            Mode::Verify => "verify",
            Mode::Select => "select",
        }
        .into();
    }

    match cfg.mode.as_str() {
        "bench" => {
            let out = cfg.out.clone().ok_or_else(|| {
                anyhow!("bench mode needs an output path (--out or `out =` in the config)")
            })?;
            let summary = cmd_bench(&cfg, Path::new(&out))?;
            println!("wrote {} rows to {}", summary.rows_written, out);
            if summary.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for failure in &summary.failures {
                    eprintln!("episode failed: {failure}");
                }
                Ok(ExitCode::from(1))
            }
        }
        "verify" => {
            let stdout = std::io::stdout();
            let passed = cmd_verify(&cfg, cfg.suite.as_deref(), &mut stdout.lock())?;
            Ok(if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        "select" => {
            let belief = cfg.belief.clone().ok_or_else(|| {
                anyhow!("select mode needs a particle file (--belief or `belief =` in the config)")
            })?;
            let stdout = std::io::stdout();
            cmd_select(&cfg, Path::new(&belief), &mut stdout.lock())?;
            Ok(ExitCode::SUCCESS)
        }
        other => bail!("unknown mode {other:?} (expected bench, verify, or select)"),
    }
}
