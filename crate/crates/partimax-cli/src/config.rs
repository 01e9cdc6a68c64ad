//! TOML configuration: flat `key = value` entries under section headers.
//! Every key has a default (the full-geometry tracking experiment), unknown
//! keys are rejected, and parse -> serialize -> parse is the identity on
//! accepted configs.

use anyhow::{Context, Result};
use partimax::simulate::{Algorithm, BenchConfig};
use partimax::tiling::TileCodingConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// bench | verify | select (the --mode flag overrides this).
    pub mode: String,
    /// CSV output path for bench mode (--out overrides).
    pub out: Option<String>,
    /// Single verification suite to run (--suite overrides; unset = all).
    pub suite: Option<String>,
    /// Particle CSV for select mode (--belief overrides).
    pub belief: Option<String>,
    pub tiling: TilingSection,
    pub motion: MotionSection,
    pub detector: DetectorSection,
    pub filter: FilterSection,
    pub select: SelectSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: "bench".into(),
            out: None,
            suite: None,
            belief: None,
            tiling: TilingSection::default(),
            motion: MotionSection::default(),
            detector: DetectorSection::default(),
            filter: FilterSection::default(),
            select: SelectSection::default(),
            bench: BenchSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TilingSection {
    pub image_width: u32,
    pub image_height: u32,
    pub box_width: u32,
    pub box_height: u32,
    pub offset_x: u32,
    pub offset_y: u32,
}

impl Default for TilingSection {
    fn default() -> Self {
        TilingSection {
            image_width: 5120,
            image_height: 3840,
            box_width: 180,
            box_height: 180,
            offset_x: 60,
            offset_y: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionSection {
    /// Per-axis Gaussian position noise, pixels per frame.
    pub sigma: f64,
}

impl Default for MotionSection {
    fn default() -> Self {
        MotionSection { sigma: 4.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub p_detect: f64,
    pub p_false: f64,
    /// Std dev (pixels) of reported detection locations.
    pub loc_noise: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            p_detect: 0.9,
            p_false: 0.0,
            loc_noise: 15.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub particles_per_person: usize,
    pub inject_fraction: f64,
    /// Velocity bound (pixels/frame) for initial and injected particles and
    /// for generated trajectories.
    pub v_max: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            particles_per_person: 250,
            inject_fraction: 0.05,
            v_max: 10.0,
        }
    }
}

/// Selector used by select mode (bench mode sweeps its own lists).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectSection {
    pub algorithm: String,
    pub k: usize,
    pub r: usize,
    pub seed: u64,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection {
            algorithm: "partimax".into(),
            k: 40,
            r: 10,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub algorithms: Vec<String>,
    pub k_values: Vec<usize>,
    pub r_values: Vec<usize>,
    pub people: Vec<u32>,
    /// Independent seeds per sweep cell.
    pub seeds: u32,
    /// Independent trajectories per (cell, seed).
    pub trajectories: u32,
    pub timesteps: usize,
    /// Master seed; all episode randomness derives from it.
    pub seed: u64,
    /// Worker threads; 0 uses the default pool.
    pub jobs: usize,
    /// Record real selector wall times. Off by default so that CSV output is
    /// byte-reproducible; the timing column then reads 0.00.
    pub measure_time: bool,
    /// Synthetic per-box detector cost for frame-budget accounting.
    pub detector_cost_us: u64,
    /// Frame budget; omitted = unlimited.
    pub frame_budget_us: Option<u64>,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            algorithms: vec![
                "brute".into(),
                "greedy".into(),
                "stochastic_greedy".into(),
                "partimax".into(),
            ],
            k_values: vec![40],
            r_values: vec![10],
            people: vec![1, 3, 5],
            seeds: 6,
            trajectories: 1,
            timesteps: 50,
            seed: 42,
            jobs: 0,
            measure_time: false,
            detector_cost_us: 0,
            frame_budget_us: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid config")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn tiling_config(&self) -> TileCodingConfig {
        TileCodingConfig {
            image_width: self.tiling.image_width,
            image_height: self.tiling.image_height,
            box_width: self.tiling.box_width,
            box_height: self.tiling.box_height,
            offset_x: self.tiling.offset_x,
            offset_y: self.tiling.offset_y,
        }
    }

    pub fn bench_config(&self) -> Result<BenchConfig> {
        let algorithms = self
            .bench
            .algorithms
            .iter()
            .map(|name| name.parse::<Algorithm>())
            .collect::<partimax::Result<Vec<_>>>()?;
        Ok(BenchConfig {
            tiling: self.tiling_config(),
            motion_sigma: self.motion.sigma,
            p_detect: self.detector.p_detect,
            p_false: self.detector.p_false,
            loc_noise: self.detector.loc_noise,
            particles_per_person: self.filter.particles_per_person,
            inject_fraction: self.filter.inject_fraction,
            v_max: self.filter.v_max,
            detector_cost_us: self.bench.detector_cost_us,
            frame_budget_us: self.bench.frame_budget_us,
            measure_time: self.bench.measure_time,
            algorithms,
            k_values: self.bench.k_values.clone(),
            r_values: self.bench.r_values.clone(),
            people_counts: self.bench.people.clone(),
            num_seeds: self.bench.seeds,
            trajectories_per_cell: self.bench.trajectories,
            timesteps: self.bench.timesteps,
            seed: self.bench.seed,
            jobs: self.bench.jobs,
        })
    }
}

/// Reads and parses a config file; `None` yields the built-in defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in config {}", p.display()))
        }
    }
}
