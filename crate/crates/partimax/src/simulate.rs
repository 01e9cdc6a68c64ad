//! Synthetic tracking experiments.
//!
//! [`run_episode`] drives the full per-frame loop for one or more people:
//! predict every person's belief, pool the beliefs, select k boxes on the
//! pooled belief, simulate one detector observation from the true states,
//! update every belief against it, and score each person's position
//! prediction. [`run_benchmark`] sweeps episodes over algorithms, budgets and
//! seeds into a flat result table; trajectories are derived from seeds that
//! do not depend on the algorithm, so every algorithm sees the same ground
//! truth and the comparison is paired.
//!
//! A prediction is the center box of the person's own belief: the box with
//! maximum particle coverage (ties to the lowest flat index), scored +1 when
//! the person's true position lies inside it. The rule is fixed across all
//! algorithms so accuracy comparisons are fair.

use crate::belief::{
    predict, simulate_observation, uniform_state, update, DetectorModel, MotionModel,
    ParticleBelief, State,
};
use crate::coverage::GainTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::select::{Selector, SelectorParams};
use crate::tiling::{Plane, TileCoding, TileCodingConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a base seed and a path of stream labels.
/// Used to give trajectories, the environment and each frame's selector their
/// own reproducible streams.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

const STREAM_ENV: u64 = 1;
const STREAM_SELECT: u64 = 2;
const STREAM_TRAJECTORY: u64 = 3;
const STREAM_EPISODE: u64 = 4;

/// Ground-truth path of one person, one state per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    pub person_id: u32,
    pub states: Vec<State<S>>,
}

/// One constant-velocity step with Gaussian position noise; leaving the plane
/// reflects the position back inside and flips that velocity component.
pub fn step_reflect<S: Scalar, R: Rng + ?Sized>(
    s: &State<S>,
    motion: &MotionModel<S>,
    plane: Plane,
    rng: &mut R,
) -> State<S> {
    let w = S::from_pixels(plane.width as i64);
    let h = S::from_pixels(plane.height as i64);
    let two = S::one() + S::one();
    let mut vx = s.vx;
    let mut vy = s.vy;
    let mut x = s.x + s.vx + motion.sigma_x * S::standard_normal(rng);
    let mut y = s.y + s.vy + motion.sigma_y * S::standard_normal(rng);
    if x < S::zero() {
        x = -x;
        vx = -vx;
    } else if x > w {
        x = two * w - x;
        vx = -vx;
    }
    if y < S::zero() {
        y = -y;
        vy = -vy;
    } else if y > h {
        y = two * h - y;
        vy = -vy;
    }
    let (x, y) = plane.clamp(x, y);
    State { x, y, vx, vy }
}

/// Random bounded-velocity walk: position uniform in-plane, velocity uniform
/// in `[-v_max, v_max]` per axis, then `timesteps - 1` reflecting steps.
pub fn gen_trajectory<S: Scalar, R: Rng + ?Sized>(
    plane: Plane,
    motion: &MotionModel<S>,
    v_max: S,
    timesteps: usize,
    person_id: u32,
    rng: &mut R,
) -> Result<Trajectory<S>> {
    if timesteps == 0 {
        return Err(Error::InvalidParams("a trajectory needs at least one timestep".into()));
    }
    if !(v_max >= S::zero()) {
        return Err(Error::InvalidParams("v_max must be non-negative".into()));
    }
    let mut states = Vec::with_capacity(timesteps);
    let mut s = uniform_state(plane, v_max, rng);
    states.push(s);
    for _ in 1..timesteps {
        s = step_reflect(&s, motion, plane, rng);
        states.push(s);
    }
    Ok(Trajectory { person_id, states })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Greedy,
    StochasticGreedy,
    PartiMax,
    /// Reference that "detects everywhere": every box of the first tiling
    /// (a partition of the plane), ignoring k. Accuracy ceiling, cost worst
    /// case.
    Brute,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::StochasticGreedy => "stochastic_greedy",
            Algorithm::PartiMax => "partimax",
            Algorithm::Brute => "brute",
        }
    }

    /// Whether the per-iteration sample size r means anything to this
    /// algorithm.
    pub fn uses_sample_size(self) -> bool {
        matches!(self, Algorithm::StochasticGreedy | Algorithm::PartiMax)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Algorithm::Greedy),
            "stochastic_greedy" => Ok(Algorithm::StochasticGreedy),
            "partimax" => Ok(Algorithm::PartiMax),
            "brute" => Ok(Algorithm::Brute),
            other => Err(Error::InvalidParams(format!(
                "unknown algorithm {other:?} (expected greedy, stochastic_greedy, partimax or brute)"
            ))),
        }
    }
}

/// Everything an episode needs besides the trajectories and the coder.
#[derive(Clone, Debug)]
pub struct EpisodeParams<S: Scalar> {
    pub algorithm: Algorithm,
    /// Selection budget. 0 means no boxes are ever selected (the
    /// no-observation floor). Ignored by [`Algorithm::Brute`].
    pub k: usize,
    /// Per-iteration sample size for the stochastic selectors.
    pub r: usize,
    pub motion: MotionModel<S>,
    pub detector: DetectorModel<S>,
    pub particles_per_person: usize,
    /// Fraction of each belief replaced by fresh particles per update.
    pub inject_fraction: f64,
    /// Velocity bound for belief initialization and injected particles.
    pub v_max: S,
    /// Synthetic cost charged per selected box when checking the frame
    /// budget, standing in for a real detector's inference time.
    pub detector_cost_us: u64,
    /// Frames whose selection time plus synthetic detector cost exceed this
    /// budget are counted in `timeouts`; the episode always runs on.
    pub frame_budget_us: Option<u64>,
    /// When false, selector wall times are recorded as zero so that episode
    /// results (and any CSV derived from them) are bit-reproducible.
    pub measure_time: bool,
}

/// Outcome of one episode. With `measure_time` off this is fully determined
/// by (trajectories, params, seed).
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    /// Correct predictions summed over people and frames.
    pub correct_total: u32,
    pub people: u32,
    pub timesteps: u32,
    /// Selector wall time per frame, microseconds.
    pub selection_us: Vec<u64>,
    pub gain_evaluations: u64,
    pub sample_draws: u64,
    /// Boxes handed to the detector each frame (constant per episode).
    pub boxes_per_frame: u32,
    /// `boxes_per_frame / n`.
    pub boxes_fraction: f64,
    /// Frames whose selection + synthetic detector cost exceeded the budget.
    pub timeouts: u32,
    /// Updates in which no particle survived and the belief was rebuilt from
    /// injected particles alone.
    pub all_injected_events: u32,
}

impl EpisodeResult {
    /// Correct predictions normalized per person, in [0, timesteps].
    pub fn correct_per_person(&self) -> f64 {
        self.correct_total as f64 / self.people as f64
    }

    pub fn mean_selection_us(&self) -> f64 {
        if self.selection_us.is_empty() {
            0.0
        } else {
            self.selection_us.iter().sum::<u64>() as f64 / self.selection_us.len() as f64
        }
    }
}

/// Runs the full tracking loop over the given ground-truth trajectories (one
/// per person, equal lengths). Each person gets an independent particle
/// filter; selection happens once per frame on the pooled belief.
pub fn run_episode<S: Scalar>(
    trajectories: &[Trajectory<S>],
    params: &EpisodeParams<S>,
    coder: &TileCoding,
    seed: u64,
) -> Result<EpisodeResult> {
    if trajectories.is_empty() {
        return Err(Error::InvalidParams("an episode needs at least one trajectory".into()));
    }
    let timesteps = trajectories[0].states.len();
    if timesteps == 0 || trajectories.iter().any(|t| t.states.len() != timesteps) {
        return Err(Error::InvalidParams(
            "trajectories must share one non-zero length".into(),
        ));
    }
    if !(params.v_max >= S::zero()) {
        return Err(Error::InvalidParams("v_max must be non-negative".into()));
    }
    let people = trajectories.len();
    let n = coder.num_boxes();
    let plane = coder.config().plane();

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[STREAM_ENV]));
    let mut beliefs = Vec::with_capacity(people);
    for _ in 0..people {
        beliefs.push(ParticleBelief::uniform(
            params.particles_per_person,
            plane,
            params.v_max,
            &mut rng,
        )?);
    }

    let mut selector = Selector::new(coder);
    let mut predict_table = GainTable::new(coder);
    let brute_boxes = match params.algorithm {
        Algorithm::Brute => coder.tiling_boxes(0),
        _ => Vec::new(),
    };

    let mut correct_total = 0u32;
    let mut selection_us = Vec::with_capacity(timesteps);
    let mut gain_evaluations = 0u64;
    let mut sample_draws = 0u64;
    let mut boxes_per_frame = 0u32;
    let mut timeouts = 0u32;
    let mut all_injected_events = 0u32;

    for frame in 0..timesteps {
        for belief in &mut beliefs {
            *belief = predict(belief, &params.motion, plane, &mut rng);
        }

        let (boxes, elapsed) = match params.algorithm {
            Algorithm::Brute => (brute_boxes.clone(), std::time::Duration::ZERO),
            _ if params.k == 0 => (Vec::new(), std::time::Duration::ZERO),
            alg => {
                let pooled = ParticleBelief::pooled(&beliefs)?;
                let sparams =
                    SelectorParams::new(params.k, params.r, mix_seed(seed, &[STREAM_SELECT, frame as u64]));
                let sel = match alg {
                    Algorithm::Greedy => selector.greedy(&pooled, coder, params.k)?,
                    Algorithm::StochasticGreedy => {
                        selector.stochastic_greedy(&pooled, coder, &sparams)?
                    }
                    Algorithm::PartiMax => selector.partimax(&pooled, coder, &sparams)?,
                    Algorithm::Brute => unreachable!(),
                };
                gain_evaluations += sel.gain_evaluations;
                sample_draws += sel.sample_draws;
                (sel.boxes, sel.elapsed)
            }
        };
        let sel_us = if params.measure_time {
            elapsed.as_micros() as u64
        } else {
            0
        };
        selection_us.push(sel_us);
        boxes_per_frame = boxes.len() as u32;
        if let Some(budget) = params.frame_budget_us {
            if sel_us + params.detector_cost_us * boxes.len() as u64 > budget {
                timeouts += 1;
            }
        }

        let truths: Vec<State<S>> = trajectories.iter().map(|t| t.states[frame]).collect();
        let observation = simulate_observation(&truths, &boxes, coder, &params.detector, &mut rng);

        for (belief, truth) in beliefs.iter_mut().zip(&truths) {
            let outcome = update(
                belief,
                &boxes,
                &observation,
                &params.detector,
                coder,
                params.inject_fraction,
                params.v_max,
                &mut rng,
            )?;
            if outcome.all_injected() {
                all_injected_events += 1;
            }
            *belief = outcome.belief;

            predict_table.initialize(belief, coder);
            let best = predict_table
                .argmax_box()
                .expect("a non-empty in-plane belief always has a covered box");
            if coder.box_rect(coder.from_flat(best)).contains(truth.x, truth.y) {
                correct_total += 1;
            }
        }
    }

    Ok(EpisodeResult {
        correct_total,
        people: people as u32,
        timesteps: timesteps as u32,
        selection_us,
        gain_evaluations,
        sample_draws,
        boxes_per_frame,
        boxes_fraction: boxes_per_frame as f64 / n as f64,
        timeouts,
        all_injected_events,
    })
}

/// Sweep definition for [`run_benchmark`]. Every field that feeds randomness
/// is a seed; wall-clock time never influences anything but the timing
/// column (and only when `measure_time` is on).
#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub tiling: TileCodingConfig,
    pub motion_sigma: f64,
    pub p_detect: f64,
    pub p_false: f64,
    pub loc_noise: f64,
    pub particles_per_person: usize,
    pub inject_fraction: f64,
    pub v_max: f64,
    pub detector_cost_us: u64,
    pub frame_budget_us: Option<u64>,
    pub measure_time: bool,
    pub algorithms: Vec<Algorithm>,
    pub k_values: Vec<usize>,
    /// Sample sizes swept for the stochastic selectors; greedy and brute get
    /// a single row per (k, people, seed, trajectory) with r reported as 0.
    pub r_values: Vec<usize>,
    pub people_counts: Vec<u32>,
    pub num_seeds: u32,
    pub trajectories_per_cell: u32,
    pub timesteps: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the process-wide default pool.
    pub jobs: usize,
}

/// One episode's row in the benchmark table.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub algorithm: Algorithm,
    pub k: usize,
    pub r: usize,
    pub people: u32,
    /// Seed index within the sweep (the actual RNG seeds are derived from it
    /// and the master seed).
    pub seed: u32,
    pub trajectory_id: u32,
    /// Correct predictions normalized per person.
    pub correct_predictions: f64,
    pub timesteps: u32,
    pub mean_selection_time_us: f64,
    pub gain_evaluations: u64,
    pub boxes_fraction: f64,
}

#[derive(Clone, Debug, Default)]
pub struct BenchOutput {
    /// One row per episode, in deterministic sweep order.
    pub rows: Vec<BenchRow>,
    /// Human-readable descriptions of failed cells (the sweep continues past
    /// them).
    pub failures: Vec<String>,
}

#[derive(Clone, Copy)]
struct Cell {
    algorithm: Algorithm,
    k: usize,
    r: usize,
    people: u32,
    seed_idx: u32,
    trajectory_id: u32,
}

/// Runs the Cartesian sweep algorithms x k x r x people x seeds x
/// trajectories, in parallel, in deterministic order. The per-episode seeds
/// depend only on (master seed, people, seed index, trajectory id), never on
/// the algorithm or budget, so rows with equal (people, seed, trajectory_id)
/// describe the same ground truth.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchOutput> {
    let coder = TileCoding::build(cfg.tiling)?;
    let motion = MotionModel::new(cfg.motion_sigma, cfg.motion_sigma)?;
    let detector = DetectorModel::new(cfg.p_detect, cfg.p_false, cfg.loc_noise)?;

    // Algorithms vary innermost so episodes sharing ground truth run next to
    // each other; slow machine drift then biases paired timings equally.
    let mut cells = Vec::new();
    for &people in &cfg.people_counts {
        for seed_idx in 0..cfg.num_seeds {
            for trajectory_id in 0..cfg.trajectories_per_cell {
                for &k in &cfg.k_values {
                    for &algorithm in &cfg.algorithms {
                        let r_sweep: &[usize] = if algorithm.uses_sample_size() {
                            &cfg.r_values
                        } else {
                            &[0]
                        };
                        for &r in r_sweep {
                            cells.push(Cell {
                                algorithm,
                                k,
                                r,
                                people,
                                seed_idx,
                                trajectory_id,
                            });
                        }
                    }
                }
            }
        }
    }

    let run_cell = |cell: &Cell| -> Result<BenchRow> {
        let episode_seed = mix_seed(
            cfg.seed,
            &[cell.people as u64, cell.seed_idx as u64, cell.trajectory_id as u64],
        );
        let plane = coder.config().plane();
        let trajectories: Vec<Trajectory<f64>> = (0..cell.people)
            .map(|pid| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
                    episode_seed,
                    &[STREAM_TRAJECTORY, pid as u64],
                ));
                gen_trajectory(plane, &motion, cfg.v_max, cfg.timesteps, pid, &mut rng)
            })
            .collect::<Result<_>>()?;
        let params = EpisodeParams {
            algorithm: cell.algorithm,
            k: cell.k,
            r: cell.r,
            motion,
            detector,
            particles_per_person: cfg.particles_per_person,
            inject_fraction: cfg.inject_fraction,
            v_max: cfg.v_max,
            detector_cost_us: cfg.detector_cost_us,
            frame_budget_us: cfg.frame_budget_us,
            measure_time: cfg.measure_time,
        };
        let result = run_episode(
            &trajectories,
            &params,
            &coder,
            mix_seed(episode_seed, &[STREAM_EPISODE]),
        )?;
        Ok(BenchRow {
            algorithm: cell.algorithm,
            k: cell.k,
            r: cell.r,
            people: cell.people,
            seed: cell.seed_idx,
            trajectory_id: cell.trajectory_id,
            correct_predictions: result.correct_per_person(),
            timesteps: result.timesteps,
            mean_selection_time_us: result.mean_selection_us(),
            gain_evaluations: result.gain_evaluations,
            boxes_fraction: result.boxes_fraction,
        })
    };

    let collect = || cells.par_iter().map(run_cell).collect::<Vec<_>>();
    let outcomes = if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?
            .install(collect)
    } else {
        collect()
    };

    let mut out = BenchOutput::default();
    for (cell, outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok(row) => out.rows.push(row),
            Err(e) => out.failures.push(format!(
                "algorithm={} k={} r={} people={} seed={} trajectory={}: {e}",
                cell.algorithm, cell.k, cell.r, cell.people, cell.seed_idx, cell.trajectory_id
            )),
        }
    }
    Ok(out)
}
