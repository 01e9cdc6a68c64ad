//! Subcommand implementations, decoupled from argument parsing so that
//! integration tests can drive them with in-memory writers.

use crate::config::RunConfig;
use anyhow::{anyhow, bail, Context, Result};
use partimax::belief::{ParticleBelief, State};
use partimax::coverage::pcf;
use partimax::select::{self, greedy_max, stochastic_greedy_max, SelectorParams};
use partimax::simulate::{run_benchmark, Algorithm, BenchRow};
use partimax::tiling::{Plane, TileCoding};
use partimax::verify::{all_suites, run_suite, SuiteReport, SUITE_NAMES};
use std::io::Write;
use std::path::Path;

pub const CSV_HEADER: &str = "algorithm,k,r,people,seed,trajectory_id,correct_predictions,\
                              timesteps,mean_selection_time_us,gain_evaluations,boxes_fraction";

/// Float columns use fixed precision so the file is byte-stable across runs
/// and platforms.
fn format_row(row: &BenchRow) -> String {
    format!(
        "{},{},{},{},{},{},{:.4},{},{:.2},{},{:.6}",
        row.algorithm,
        row.k,
        row.r,
        row.people,
        row.seed,
        row.trajectory_id,
        row.correct_predictions,
        row.timesteps,
        row.mean_selection_time_us,
        row.gain_evaluations,
        row.boxes_fraction,
    )
}

pub fn write_csv<W: Write>(rows: &[BenchRow], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", format_row(row))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BenchSummary {
    pub rows_written: usize,
    /// Descriptions of sweep cells whose episode failed; the rest of the
    /// sweep still ran and was written.
    pub failures: Vec<String>,
}

/// Runs the configured benchmark sweep and writes the row table to `out`.
pub fn cmd_bench(cfg: &RunConfig, out: &Path) -> Result<BenchSummary> {
    let bench = cfg.bench_config()?;
    let output = run_benchmark(&bench)?;
    let file =
        std::fs::File::create(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_csv(&output.rows, std::io::BufWriter::new(file))?;
    Ok(BenchSummary {
        rows_written: output.rows.len(),
        failures: output.failures,
    })
}

fn print_report<W: Write>(report: &SuiteReport, w: &mut W) -> Result<()> {
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    writeln!(
        w,
        "{verdict} {} ({:.2}s)",
        report.name,
        report.elapsed.as_secs_f64()
    )?;
    for line in &report.lines {
        writeln!(w, "    {line}")?;
    }
    if let Some(seed) = report.failing_seed {
        writeln!(w, "    failing seed: {seed:#x}")?;
    }
    Ok(())
}

/// Runs one named verification suite, or all of them when `suite` is `None`.
/// Returns whether every executed suite passed. An unknown suite name is an
/// error (a usage mistake, not a verification failure).
pub fn cmd_verify<W: Write>(cfg: &RunConfig, suite: Option<&str>, w: &mut W) -> Result<bool> {
    let seed = cfg.bench.seed;
    let reports = match suite {
        Some(name) => vec![run_suite(name, seed).ok_or_else(|| {
            anyhow!(
                "unknown suite {name:?}; available: {}",
                SUITE_NAMES.join(", ")
            )
        })?],
        None => all_suites(seed),
    };
    let mut all_passed = true;
    for report in &reports {
        print_report(report, w)?;
        all_passed &= report.passed;
    }
    w.flush()?;
    Ok(all_passed)
}

/// Parses a particle CSV: one `x,y,vx,vy` row per line, four finite numbers
/// each. Positions are clamped to the plane, matching what every consumer of
/// a belief assumes. Blank lines are skipped; an effectively empty file is an
/// error.
pub fn parse_particles(text: &str, plane: Plane) -> Result<ParticleBelief<f64>> {
    let mut particles = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!(
                "line {}: expected 4 comma-separated values, got {}",
                idx + 1,
                fields.len()
            );
        }
        let mut vals = [0.0f64; 4];
        for (v, field) in vals.iter_mut().zip(&fields) {
            let field = field.trim();
            *v = field
                .parse()
                .map_err(|_| anyhow!("line {}: invalid number {field:?}", idx + 1))?;
            if !v.is_finite() {
                bail!("line {}: non-finite value {field:?}", idx + 1);
            }
        }
        let (x, y) = plane.clamp(vals[0], vals[1]);
        particles.push(State {
            x,
            y,
            vx: vals[2],
            vy: vals[3],
        });
    }
    if particles.is_empty() {
        bail!("belief file holds no particles");
    }
    Ok(ParticleBelief::from_states(particles)?)
}

/// Loads a belief from `belief_path`, runs the configured selector once, and
/// prints the selected flat box indices (one per line) followed by a
/// `pcf <utility>` summary line.
pub fn cmd_select<W: Write>(cfg: &RunConfig, belief_path: &Path, w: &mut W) -> Result<()> {
    let coder = TileCoding::build(cfg.tiling_config())?;
    let text = std::fs::read_to_string(belief_path)
        .with_context(|| format!("cannot read belief {}", belief_path.display()))?;
    let belief = parse_particles(&text, coder.config().plane())
        .with_context(|| format!("in belief {}", belief_path.display()))?;

    let sel = &cfg.select;
    let params = SelectorParams::new(sel.k, sel.r, sel.seed);
    let (flats, utility): (Vec<u32>, u32) = match sel.algorithm.parse::<Algorithm>()? {
        Algorithm::Greedy => {
            let s = greedy_max(&belief, &coder, sel.k)?;
            (s.boxes.iter().map(|&b| coder.flat(b)).collect(), s.utility)
        }
        Algorithm::StochasticGreedy => {
            let s = stochastic_greedy_max(&belief, &coder, &params)?;
            (s.boxes.iter().map(|&b| coder.flat(b)).collect(), s.utility)
        }
        Algorithm::PartiMax => {
            let s = select::partimax(&belief, &coder, &params)?;
            (s.boxes.iter().map(|&b| coder.flat(b)).collect(), s.utility)
        }
        Algorithm::Brute => {
            let boxes = coder.tiling_boxes(0);
            let utility = pcf(&belief, &boxes, &coder);
            (boxes.iter().map(|&b| coder.flat(b)).collect(), utility)
        }
    };
    for flat in &flats {
        writeln!(w, "{flat}")?;
    }
    writeln!(w, "pcf {utility}")?;
    w.flush()?;
    Ok(())
}
