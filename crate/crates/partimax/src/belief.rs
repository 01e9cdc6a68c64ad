//! Unweighted particle beliefs and the detect/no-detect observation channel.
//!
//! One belief tracks one person as `m` equally weighted particles. The filter
//! cycle is:
//!
//! * [`predict`]: constant-velocity motion with additive Gaussian noise on
//!   positions, positions clamped to the closed plane;
//! * [`simulate_observation`]: each selected box reports DETECT or NO_DETECT
//!   (per-box detection probability `p_detect` when the box contains a true
//!   state, false-positive probability `p_false` otherwise; DETECT carries a
//!   noisy location);
//! * [`update`]: Monte Carlo rejection on the binary detect/no-detect pattern.
//!   Each particle simulates its own pattern over the selected boxes and
//!   survives iff it reproduces the observed pattern exactly. Survivors are
//!   resampled with replacement up to `(1 - inject_fraction) * m`; the
//!   remainder is injected near the reported detection (or uniformly over the
//!   plane when the observation carries no detection). Belief size is `m`
//!   before and after every operation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tiling::{PixelBoxId, Plane, TileCoding};
use rand::Rng;

/// One particle: position and velocity in pixels / pixels-per-frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State<S> {
    pub x: S,
    pub y: S,
    pub vx: S,
    pub vy: S,
}

/// Unweighted particle set of fixed size `m >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleBelief<S> {
    particles: Vec<State<S>>,
}

impl<S: Scalar> ParticleBelief<S> {
    /// Wraps an explicit particle set. Errors on an empty set.
    pub fn from_states(particles: Vec<State<S>>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidParams("belief must hold at least one particle".into()));
        }
        Ok(ParticleBelief { particles })
    }

    /// Uniform belief: positions uniform over the closed plane, velocities
    /// uniform over `[-v_max, v_max]` per axis.
    pub fn uniform<R: Rng + ?Sized>(m: usize, plane: Plane, v_max: S, rng: &mut R) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParams("belief must hold at least one particle".into()));
        }
        let particles = (0..m).map(|_| uniform_state(plane, v_max, rng)).collect();
        Ok(ParticleBelief { particles })
    }

    /// Concatenates several beliefs into one multiset (used to run a single
    /// selection over all tracked persons).
    pub fn pooled<'a>(beliefs: impl IntoIterator<Item = &'a ParticleBelief<S>>) -> Result<Self> {
        let particles: Vec<State<S>> = beliefs
            .into_iter()
            .flat_map(|b| b.particles.iter().copied())
            .collect();
        Self::from_states(particles)
    }

    /// Number of particles `m`.
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty() // always false by construction
    }

    pub fn particles(&self) -> &[State<S>] {
        &self.particles
    }
}

/// A state with position uniform over the closed plane and each velocity
/// component uniform in `[-v_max, v_max]`.
pub fn uniform_state<S: Scalar, R: Rng + ?Sized>(plane: Plane, v_max: S, rng: &mut R) -> State<S> {
    let zero = S::zero();
    State {
        x: rng.random_range(zero..=S::from_pixels(plane.width as i64)),
        y: rng.random_range(zero..=S::from_pixels(plane.height as i64)),
        vx: rng.random_range(-v_max..=v_max),
        vy: rng.random_range(-v_max..=v_max),
    }
}

/// Constant-velocity motion with per-axis Gaussian position noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionModel<S> {
    pub sigma_x: S,
    pub sigma_y: S,
}

impl<S: Scalar> MotionModel<S> {
    /// Zero noise is allowed (deterministic constant-velocity motion).
    pub fn new(sigma_x: S, sigma_y: S) -> Result<Self> {
        if !(sigma_x >= S::zero()) || !(sigma_y >= S::zero()) {
            return Err(Error::InvalidParams("motion noise must be non-negative".into()));
        }
        Ok(MotionModel { sigma_x, sigma_y })
    }
}

/// Per-box binary detector with localization noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorModel<S> {
    /// Probability a box containing a true state reports DETECT.
    pub p_detect: f64,
    /// Probability an empty box reports DETECT.
    pub p_false: f64,
    /// Standard deviation (pixels) of the reported location around the true
    /// position; also used when injecting particles at a detection.
    pub loc_noise: S,
}

impl<S: Scalar> DetectorModel<S> {
    pub fn new(p_detect: f64, p_false: f64, loc_noise: S) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_detect) || !(0.0..=1.0).contains(&p_false) {
            return Err(Error::InvalidParams("detector probabilities must lie in [0, 1]".into()));
        }
        if p_false >= p_detect {
            return Err(Error::InvalidParams(format!(
                "p_false {p_false} must be below p_detect {p_detect}"
            )));
        }
        if loc_noise < S::zero() {
            return Err(Error::InvalidParams("loc_noise must be non-negative".into()));
        }
        Ok(DetectorModel {
            p_detect,
            p_false,
            loc_noise,
        })
    }
}

/// What one selected box reported.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoxReading<S> {
    NoDetect,
    Detect { x: S, y: S },
}

impl<S> BoxReading<S> {
    pub fn is_detect(&self) -> bool {
        matches!(self, BoxReading::Detect { .. })
    }
}

/// One frame's observation: a reading per selected box, in selection order.
/// Unselected boxes carry no entry (the null observation).
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<S> {
    entries: Vec<(PixelBoxId, BoxReading<S>)>,
}

impl<S: Scalar> Observation<S> {
    pub fn new(entries: Vec<(PixelBoxId, BoxReading<S>)>) -> Self {
        Observation { entries }
    }

    pub fn entries(&self) -> &[(PixelBoxId, BoxReading<S>)] {
        &self.entries
    }

    /// True iff any selected box reported DETECT.
    pub fn has_detect(&self) -> bool {
        self.entries.iter().any(|(_, r)| r.is_detect())
    }

    /// Reported locations of all DETECT readings, in selection order.
    pub fn detect_locations(&self) -> Vec<(S, S)> {
        self.entries
            .iter()
            .filter_map(|(_, r)| match r {
                BoxReading::Detect { x, y } => Some((*x, *y)),
                BoxReading::NoDetect => None,
            })
            .collect()
    }
}

/// Advances every particle one frame: `x += vx + noise`, `y += vy + noise`,
/// velocities unchanged, positions clamped to the closed plane.
pub fn predict<S: Scalar, R: Rng + ?Sized>(
    belief: &ParticleBelief<S>,
    motion: &MotionModel<S>,
    plane: Plane,
    rng: &mut R,
) -> ParticleBelief<S> {
    let particles = belief
        .particles
        .iter()
        .map(|s| {
            let nx = s.x + s.vx + motion.sigma_x * S::standard_normal(rng);
            let ny = s.y + s.vy + motion.sigma_y * S::standard_normal(rng);
            let (x, y) = plane.clamp(nx, ny);
            State { x, y, vx: s.vx, vy: s.vy }
        })
        .collect();
    ParticleBelief { particles }
}

/// Draws one observation for the selected boxes given the true states.
///
/// A box containing at least one true state (the lowest-index one is the
/// reported target) yields DETECT with probability `p_detect`, reporting the
/// true position plus per-axis `N(0, loc_noise^2)`. An empty box yields
/// DETECT with probability `p_false`, reporting a location uniform within
/// the box rectangle.
pub fn simulate_observation<S: Scalar, R: Rng + ?Sized>(
    true_states: &[State<S>],
    selected: &[PixelBoxId],
    coder: &TileCoding,
    detector: &DetectorModel<S>,
    rng: &mut R,
) -> Observation<S> {
    let entries = selected
        .iter()
        .map(|&id| {
            let rect = coder.box_rect(id);
            let target = true_states.iter().find(|s| rect.contains(s.x, s.y));
            let reading = match target {
                Some(s) => {
                    if rng.random_bool(detector.p_detect) {
                        BoxReading::Detect {
                            x: s.x + detector.loc_noise * S::standard_normal(rng),
                            y: s.y + detector.loc_noise * S::standard_normal(rng),
                        }
                    } else {
                        BoxReading::NoDetect
                    }
                }
                None => {
                    if detector.p_false > 0.0 && rng.random_bool(detector.p_false) {
                        let x0 = S::from_pixels(rect.x0);
                        let x1 = S::from_pixels(rect.x0 + rect.width as i64);
                        let y0 = S::from_pixels(rect.y0);
                        let y1 = S::from_pixels(rect.y0 + rect.height as i64);
                        BoxReading::Detect {
                            x: rng.random_range(x0..x1),
                            y: rng.random_range(y0..y1),
                        }
                    } else {
                        BoxReading::NoDetect
                    }
                }
            };
            (id, reading)
        })
        .collect();
    Observation { entries }
}

/// Result of one rejection update. The belief always holds `m` particles;
/// `survivors == 0` means every particle was injected fresh (the tracker lost
/// the pattern entirely), which is a diagnostic condition, not an error.
#[derive(Clone, Debug)]
pub struct BeliefUpdate<S> {
    pub belief: ParticleBelief<S>,
    /// Distinct particles whose simulated pattern matched the observation.
    pub survivors: usize,
    /// Particles injected to fill the belief back to size `m`.
    pub injected: usize,
}

impl<S> BeliefUpdate<S> {
    pub fn all_injected(&self) -> bool {
        self.survivors == 0
    }
}

/// Rejection update against the binary detect/no-detect pattern.
///
/// Each particle simulates a detector reading for every selected box
/// (probability `p_detect` where the box covers the particle, `p_false`
/// otherwise) and survives iff the simulated binary pattern equals the
/// observed one. Survivors are resampled with replacement up to
/// `floor((1 - inject_fraction) * m)`; the rest are injected from
/// `N(reported location, loc_noise^2)` with velocities uniform in
/// `[-v_max, v_max]` when the observation holds a DETECT (one detection is
/// chosen uniformly per injected particle), else uniformly over the plane.
pub fn update<S: Scalar, R: Rng + ?Sized>(
    belief: &ParticleBelief<S>,
    selected: &[PixelBoxId],
    observation: &Observation<S>,
    detector: &DetectorModel<S>,
    coder: &TileCoding,
    inject_fraction: f64,
    v_max: S,
    rng: &mut R,
) -> Result<BeliefUpdate<S>> {
    if !(0.0..=1.0).contains(&inject_fraction) {
        return Err(Error::InvalidParams("inject_fraction must lie in [0, 1]".into()));
    }
    debug_assert_eq!(selected.len(), observation.entries.len());

    let survivors: Vec<usize> = if detector.p_false == 0.0 {
        survivors_no_false_positives(belief, observation, detector, coder, rng)
    } else {
        survivors_general(belief, observation, detector, coder, rng)
    };

    let m = belief.len();
    let plane = coder.config().plane();
    let keep = if survivors.is_empty() {
        0
    } else {
        ((1.0 - inject_fraction) * m as f64).floor() as usize
    };
    let injected = m - keep;

    let mut particles = Vec::with_capacity(m);
    for _ in 0..keep {
        particles.push(belief.particles[survivors[rng.random_range(0..survivors.len())]]);
    }

    let detections = observation.detect_locations();
    for _ in 0..injected {
        if detections.is_empty() {
            particles.push(uniform_state(plane, v_max, rng));
        } else {
            let (rx, ry) = detections[rng.random_range(0..detections.len())];
            let nx = rx + detector.loc_noise * S::standard_normal(rng);
            let ny = ry + detector.loc_noise * S::standard_normal(rng);
            let (x, y) = plane.clamp(nx, ny);
            particles.push(State {
                x,
                y,
                vx: rng.random_range(-v_max..=v_max),
                vy: rng.random_range(-v_max..=v_max),
            });
        }
    }

    Ok(BeliefUpdate {
        belief: ParticleBelief { particles },
        survivors: survivors.len(),
        injected,
    })
}

/// Naive pattern simulation: visit every selected box per particle, stopping
/// at the first mismatching bit (the per-box coins are independent, so early
/// exit leaves the acceptance probability unchanged).
fn survivors_general<S: Scalar, R: Rng + ?Sized>(
    belief: &ParticleBelief<S>,
    observation: &Observation<S>,
    detector: &DetectorModel<S>,
    coder: &TileCoding,
    rng: &mut R,
) -> Vec<usize> {
    let boxes: Vec<(crate::tiling::BoxRect, bool)> = observation
        .entries
        .iter()
        .map(|(id, r)| (coder.box_rect(*id), r.is_detect()))
        .collect();
    let mut out = Vec::new();
    'particles: for (idx, s) in belief.particles.iter().enumerate() {
        for (rect, observed) in &boxes {
            let p = if rect.contains(s.x, s.y) {
                detector.p_detect
            } else {
                detector.p_false
            };
            let simulated = p > 0.0 && rng.random_bool(p);
            if simulated != *observed {
                continue 'particles;
            }
        }
        out.push(idx);
    }
    out
}

/// `p_false == 0` fast path: an unselected-or-uncovering box can never report
/// DETECT for the particle, so only the particle's own `t` covering boxes need
/// coins, plus the requirement that every observed DETECT box covers it.
/// Equivalent acceptance probability to the naive scan, at cost O(t) per
/// particle instead of O(|selected|).
fn survivors_no_false_positives<S: Scalar, R: Rng + ?Sized>(
    belief: &ParticleBelief<S>,
    observation: &Observation<S>,
    detector: &DetectorModel<S>,
    coder: &TileCoding,
    rng: &mut R,
) -> Vec<usize> {
    const UNSELECTED: u8 = 0;
    const SELECTED_QUIET: u8 = 1;
    const SELECTED_DETECT: u8 = 2;

    let mut mask = vec![UNSELECTED; coder.num_boxes() as usize];
    let mut detect_boxes = 0u32;
    for (id, r) in &observation.entries {
        let flat = coder.flat(*id) as usize;
        if r.is_detect() {
            mask[flat] = SELECTED_DETECT;
            detect_boxes += 1;
        } else {
            mask[flat] = SELECTED_QUIET;
        }
    }

    let mut out = Vec::new();
    for (idx, s) in belief.particles.iter().enumerate() {
        let mut covered_detects = 0u32;
        let mut alive = true;
        coder.for_each_cover(s.x, s.y, |_, flat| {
            if !alive {
                return;
            }
            match mask[flat as usize] {
                SELECTED_DETECT => {
                    covered_detects += 1;
                    if !rng.random_bool(detector.p_detect) {
                        alive = false;
                    }
                }
                SELECTED_QUIET => {
                    if rng.random_bool(detector.p_detect) {
                        alive = false;
                    }
                }
                _ => {}
            }
        });
        if alive && covered_detects == detect_boxes {
            out.push(idx);
        }
    }
    out
}
