//! Box-subset selectors over the particle-coverage utility.
//!
//! All selectors pick k distinct boxes and report the achieved coverage along
//! with work counters. Candidate evaluation always reads marginal gains from
//! a [`GainTable`], so a box's value is its gain given everything selected so
//! far (the utility is monotone submodular, which is what the greedy-family
//! guarantees rely on).
//!
//! * [`greedy_max`]: argmax over all n boxes, k times. Within (1 - 1/e) of
//!   the exhaustive optimum.
//! * [`stochastic_greedy_max`]: argmax over a uniform random subset of r
//!   unselected boxes per iteration. Within (1 - 1/e - eps) of the optimum in
//!   expectation for r = (n/k) ln(1/eps).
//! * [`partimax`]: argmax over r candidates drawn by [`sample_p`], which
//!   samples an uncovered particle uniformly and then one of its t covering
//!   boxes uniformly. Each draw lands on box i with probability
//!   gain(i) / (t * uncovered), i.e. proportional to marginal gain, without
//!   ever scanning the box set.
//! * [`exhaust_max`]: exact optimum by subset enumeration (guarded).
//!
//! [`expected_coverage`] evaluates the observation-averaged posterior
//! coverage in exact rational arithmetic; under a deterministic detector it
//! coincides exactly with the particle-coverage count.

use crate::belief::{DetectorModel, ParticleBelief};
use crate::coverage::GainTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tiling::{PixelBoxId, TileCoding};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

/// Budget and sampling parameters shared by the randomized selectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelectorParams {
    /// Number of boxes to select.
    pub k: usize,
    /// Candidate sample size per iteration. For stochastic greedy this is a
    /// without-replacement subset (capped at the remaining boxes); for
    /// PartiMax it is a with-replacement draw count and may exceed n.
    pub r: usize,
    /// Seed for the selector's own RNG stream.
    pub seed: u64,
    /// PartiMax gives up on an iteration after this many consecutive draws
    /// of already-covered particles.
    pub max_rejects: usize,
}

impl SelectorParams {
    /// `max_rejects` defaults to `50 * r`.
    pub fn new(k: usize, r: usize, seed: u64) -> Self {
        SelectorParams {
            k,
            r,
            seed,
            max_rejects: 50 * r,
        }
    }

    pub fn with_max_rejects(mut self, max_rejects: usize) -> Self {
        self.max_rejects = max_rejects;
        self
    }

    pub fn validate(&self, num_boxes: u32) -> Result<()> {
        if self.k == 0 || self.k > num_boxes as usize {
            return Err(Error::InvalidParams(format!(
                "k {} must be in 1..={num_boxes}",
                self.k
            )));
        }
        if self.r == 0 {
            return Err(Error::InvalidParams("r must be at least 1".into()));
        }
        if self.max_rejects < self.r {
            return Err(Error::InvalidParams(format!(
                "max_rejects {} must be at least r {}",
                self.max_rejects, self.r
            )));
        }
        Ok(())
    }
}

/// A selector's output: the chosen boxes in selection order plus work
/// counters. `utility` is the exact coverage count of the chosen set
/// (accumulated from the applied marginal gains).
#[derive(Clone, Debug)]
pub struct Selection {
    pub boxes: Vec<PixelBoxId>,
    pub utility: u32,
    /// Marginal-gain reads performed while scanning candidates.
    pub gain_evaluations: u64,
    /// Random draws made by the candidate sampler (including rejected ones).
    pub sample_draws: u64,
    pub elapsed: Duration,
}

/// Reusable selection engine. Owns a [`GainTable`] sized to the coder so that
/// per-call work stays O(m t + selection work) rather than O(n) once warm.
/// The selected-box scratch mask is reused the same way (marked entries are
/// unmarked before returning), keeping repeat calls free of O(n) setup.
pub struct Selector {
    table: GainTable,
    picked: Vec<bool>,
}

impl Selector {
    pub fn new(coder: &TileCoding) -> Self {
        Selector {
            table: GainTable::new(coder),
            picked: vec![false; coder.num_boxes() as usize],
        }
    }

    /// Greedy argmax over all boxes, k times. Ties break to the lowest flat
    /// index; once every particle is covered the remaining picks are the
    /// lowest-index unselected boxes (gain 0). O(m t + k n).
    pub fn greedy<S: Scalar>(
        &mut self,
        belief: &ParticleBelief<S>,
        coder: &TileCoding,
        k: usize,
    ) -> Result<Selection> {
        let n = coder.num_boxes();
        SelectorParams::new(k, 1, 0).validate(n)?;
        let start = Instant::now();
        self.table.initialize(belief, coder);
        let mut boxes = Vec::with_capacity(k);
        let mut utility = 0u32;
        let mut gain_evaluations = 0u64;
        for round in 0..k {
            let mut best: Option<(u32, u32)> = None;
            for flat in 0..n {
                if self.picked[flat as usize] {
                    continue;
                }
                let g = self.table.marginal_gain(flat);
                if best.map_or(true, |(bg, _)| g > bg) {
                    best = Some((g, flat));
                }
            }
            gain_evaluations += (n as usize - round) as u64;
            let (gain, flat) = best.expect("k <= n leaves an unselected box");
            self.picked[flat as usize] = true;
            utility += gain;
            self.table.apply_selection(flat);
            boxes.push(coder.from_flat(flat));
        }
        for id in &boxes {
            self.picked[coder.flat(*id) as usize] = false;
        }
        Ok(Selection {
            boxes,
            utility,
            gain_evaluations,
            sample_draws: 0,
            elapsed: start.elapsed(),
        })
    }

    /// Greedy over a uniform random subset of r unselected boxes per
    /// iteration (without replacement, capped at the remaining count, so
    /// r >= n degenerates to exact greedy).
    pub fn stochastic_greedy<S: Scalar>(
        &mut self,
        belief: &ParticleBelief<S>,
        coder: &TileCoding,
        params: &SelectorParams,
    ) -> Result<Selection> {
        let n = coder.num_boxes();
        params.validate(n)?;
        let start = Instant::now();
        self.table.initialize(belief, coder);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut remaining: Vec<u32> = (0..n).collect();
        let mut boxes = Vec::with_capacity(params.k);
        let mut utility = 0u32;
        let mut gain_evaluations = 0u64;
        let mut sample_draws = 0u64;
        for _ in 0..params.k {
            let amount = params.r.min(remaining.len());
            let mut best: Option<(u32, u32, usize)> = None; // (gain, flat, pos in remaining)
            for pos in rand::seq::index::sample(&mut rng, remaining.len(), amount) {
                let flat = remaining[pos];
                let g = self.table.marginal_gain(flat);
                match best {
                    Some((bg, bf, _)) if g < bg || (g == bg && flat >= bf) => {}
                    _ => best = Some((g, flat, pos)),
                }
            }
            gain_evaluations += amount as u64;
            sample_draws += amount as u64;
            let (gain, flat, pos) = best.expect("sample of a non-empty remainder");
            remaining.swap_remove(pos);
            utility += gain;
            self.table.apply_selection(flat);
            boxes.push(coder.from_flat(flat));
        }
        Ok(Selection {
            boxes,
            utility,
            gain_evaluations,
            sample_draws,
            elapsed: start.elapsed(),
        })
    }

    /// Gain-proportional candidate sampling: per iteration, r candidate boxes
    /// are drawn through uncovered particles ([`sample_p`]) and the best
    /// sampled box is selected. When sampling comes back empty (every
    /// particle covered, or `max_rejects` consecutive rejections), the pick
    /// falls back to the lowest-index unselected box.
    pub fn partimax<S: Scalar>(
        &mut self,
        belief: &ParticleBelief<S>,
        coder: &TileCoding,
        params: &SelectorParams,
    ) -> Result<Selection> {
        let n = coder.num_boxes();
        params.validate(n)?;
        let start = Instant::now();
        self.table.initialize(belief, coder);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut boxes = Vec::with_capacity(params.k);
        let mut utility = 0u32;
        let mut gain_evaluations = 0u64;
        let mut sample_draws = 0u64;
        for _ in 0..params.k {
            let candidates = if self.table.uncovered_count() == 0 {
                SampleOutcome::default()
            } else {
                sample_p(&self.table, params.r, params.max_rejects, &mut rng)
            };
            sample_draws += candidates.draws;
            let flat = if candidates.boxes.is_empty() {
                // Everything covered (or the sampler starved): deterministic
                // zero-gain fallback. The scan stops at the first unpicked
                // flat, so it costs O(selected so far), not O(n).
                (0..n)
                    .find(|&f| !self.picked[f as usize])
                    .expect("k <= n leaves an unselected box")
            } else {
                let mut best: Option<(u32, u32)> = None;
                for &flat in &candidates.boxes {
                    let g = self.table.marginal_gain(flat);
                    match best {
                        Some((bg, bf)) if g < bg || (g == bg && flat >= bf) => {}
                        _ => best = Some((g, flat)),
                    }
                }
                gain_evaluations += candidates.boxes.len() as u64;
                best.expect("non-empty candidate set").1
            };
            self.picked[flat as usize] = true;
            utility += self.table.marginal_gain(flat);
            self.table.apply_selection(flat);
            boxes.push(coder.from_flat(flat));
        }
        for id in &boxes {
            self.picked[coder.flat(*id) as usize] = false;
        }
        Ok(Selection {
            boxes,
            utility,
            gain_evaluations,
            sample_draws,
            elapsed: start.elapsed(),
        })
    }
}

/// One [`sample_p`] result: candidate flats (with replacement) and draw
/// accounting.
#[derive(Clone, Debug, Default)]
pub struct SampleOutcome {
    pub boxes: Vec<u32>,
    /// Particle draws made, including rejected ones.
    pub draws: u64,
    /// Draws that hit an already-covered particle.
    pub rejects: u64,
}

/// Draws up to r candidate boxes proportionally to their marginal gain:
/// repeatedly pick a particle uniformly, reject it if covered, otherwise emit
/// one of its t covering boxes uniformly. Each emitted box is i with
/// probability gain(i) / (t * uncovered). Returns short after `max_rejects`
/// consecutive rejections.
pub fn sample_p<R: Rng + ?Sized>(
    table: &GainTable,
    r: usize,
    max_rejects: usize,
    rng: &mut R,
) -> SampleOutcome {
    let m = table.num_particles();
    let t = table.num_tilings();
    // Hoisted distributions: this loop is the selection hot path and the
    // rejection rate can run high on nearly-covered beliefs.
    let particles = Uniform::new(0, m).expect("non-empty belief");
    let tilings = Uniform::new(0, t).expect("at least one tiling");
    let mut out = SampleOutcome::default();
    let mut consecutive = 0usize;
    while out.boxes.len() < r {
        let p = particles.sample(rng);
        out.draws += 1;
        if table.is_covered(p) {
            out.rejects += 1;
            consecutive += 1;
            if consecutive >= max_rejects {
                break;
            }
            continue;
        }
        consecutive = 0;
        let j = tilings.sample(rng);
        out.boxes.push(table.covering_box(p, j));
    }
    out
}

/// Greedy argmax over all boxes (convenience over a fresh [`Selector`]).
pub fn greedy_max<S: Scalar>(
    belief: &ParticleBelief<S>,
    coder: &TileCoding,
    k: usize,
) -> Result<Selection> {
    Selector::new(coder).greedy(belief, coder, k)
}

/// Stochastic greedy (convenience over a fresh [`Selector`]).
pub fn stochastic_greedy_max<S: Scalar>(
    belief: &ParticleBelief<S>,
    coder: &TileCoding,
    params: &SelectorParams,
) -> Result<Selection> {
    Selector::new(coder).stochastic_greedy(belief, coder, params)
}

/// PartiMax (convenience over a fresh [`Selector`]).
pub fn partimax<S: Scalar>(
    belief: &ParticleBelief<S>,
    coder: &TileCoding,
    params: &SelectorParams,
) -> Result<Selection> {
    Selector::new(coder).partimax(belief, coder, params)
}

/// Largest subset count the exhaustive oracle will enumerate.
pub const EXHAUST_GUARD: u64 = 10_000_000;

/// C(n, k) capped at `cap`; None when it exceeds the cap.
fn binomial_capped(n: u64, k: u64, cap: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Exact optimum by enumerating every k-subset of boxes (lexicographic order,
/// first maximum kept, so the result is deterministic). Guarded at
/// [`EXHAUST_GUARD`] subsets. Coverage is evaluated with per-box particle
/// bitmasks, an independent route from both `pcf` and the gain table.
pub fn exhaust_max<S: Scalar>(
    belief: &ParticleBelief<S>,
    coder: &TileCoding,
    k: usize,
) -> Result<Selection> {
    let n = coder.num_boxes() as usize;
    if k == 0 || k > n {
        return Err(Error::InvalidParams(format!("k {k} must be in 1..={n}")));
    }
    let combos = binomial_capped(n as u64, k as u64, EXHAUST_GUARD).ok_or_else(|| {
        Error::TooLarge(format!("C({n}, {k}) exceeds the {EXHAUST_GUARD}-subset guard"))
    })?;

    let start = Instant::now();
    let m = belief.len();
    let words = m.div_ceil(64);
    let mut masks = vec![0u64; n * words];
    for flat in 0..n {
        let rect = coder.box_rect(coder.from_flat(flat as u32));
        let mask = &mut masks[flat * words..(flat + 1) * words];
        for (p, s) in belief.particles().iter().enumerate() {
            if rect.contains(s.x, s.y) {
                mask[p / 64] |= 1u64 << (p % 64);
            }
        }
    }

    let mut idx: Vec<usize> = (0..k).collect();
    let mut best_count = 0u32;
    let mut best: Vec<usize> = idx.clone();
    let mut union = vec![0u64; words];
    loop {
        union.fill(0);
        for &f in &idx {
            for w in 0..words {
                union[w] |= masks[f * words + w];
            }
        }
        let count: u32 = union.iter().map(|w| w.count_ones()).sum();
        if count > best_count {
            best_count = count;
            best.copy_from_slice(&idx);
        }
        // Advance to the next combination in lexicographic order.
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(Selection {
                    boxes: best.iter().map(|&f| coder.from_flat(f as u32)).collect(),
                    utility: best_count,
                    gain_evaluations: combos,
                    sample_draws: 0,
                    elapsed: start.elapsed(),
                });
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Largest pattern count [`expected_coverage`] will enumerate (2^16).
pub const PATTERN_GUARD: usize = 1 << 16;

/// Observation-averaged posterior coverage of a box set, in exact rational
/// arithmetic.
///
/// Enumerates every binary detect/no-detect pattern z over the selected
/// boxes. For each pattern, the posterior is the exact rejection filter
/// resampled back to m particles: particle l carries weight
/// Pr(z | l) = prod over boxes of the per-box reading probability
/// (`p_detect` where the box covers l, `p_false` otherwise), and the
/// pattern's posterior coverage count is m * W_cov(z) / W(z). The result is
/// the Pr(z)-weighted sum of those counts, with Pr(z) = W(z) / m.
///
/// Under a deterministic detector (p_detect = 1, p_false = 0) every particle
/// reproduces exactly one pattern and the sum telescopes to the plain
/// particle-coverage count, as an exact integer identity.
pub fn expected_coverage<S: Scalar>(
    belief: &ParticleBelief<S>,
    coder: &TileCoding,
    boxes: &[PixelBoxId],
    detector: &DetectorModel<S>,
) -> Result<BigRational> {
    let a = boxes.len();
    if a >= usize::BITS as usize || (1usize << a) > PATTERN_GUARD {
        return Err(Error::TooLarge(format!(
            "2^{a} observation patterns exceed the {PATTERN_GUARD}-pattern guard"
        )));
    }
    let p_d = BigRational::from_float(detector.p_detect)
        .ok_or_else(|| Error::InvalidParams("p_detect is not finite".into()))?;
    let p_f = BigRational::from_float(detector.p_false)
        .ok_or_else(|| Error::InvalidParams("p_false is not finite".into()))?;
    let q_d = BigRational::one() - &p_d;
    let q_f = BigRational::one() - &p_f;

    // powers[b][e] = base_b^e for e in 0..=a.
    let table = |base: &BigRational| -> Vec<BigRational> {
        let mut v = Vec::with_capacity(a + 1);
        v.push(BigRational::one());
        for e in 1..=a {
            v.push(&v[e - 1] * base);
        }
        v
    };
    let (pow_pd, pow_qd, pow_pf, pow_qf) = (table(&p_d), table(&q_d), table(&p_f), table(&q_f));

    let rects: Vec<_> = boxes.iter().map(|&id| coder.box_rect(id)).collect();
    let cover_masks: Vec<u32> = belief
        .particles()
        .iter()
        .map(|s| {
            let mut mask = 0u32;
            for (i, r) in rects.iter().enumerate() {
                if r.contains(s.x, s.y) {
                    mask |= 1 << i;
                }
            }
            mask
        })
        .collect();

    let m_rat = BigRational::from_integer(BigInt::from(belief.len()));
    let all = if a == 0 { 0u32 } else { u32::MAX >> (32 - a as u32) };
    let mut total = BigRational::zero();
    for z in 0..(1u32 << a) {
        let mut w = BigRational::zero();
        let mut w_cov = BigRational::zero();
        for &mask in &cover_masks {
            let covered_detect = (z & mask).count_ones() as usize;
            let covered_quiet = (!z & mask & all).count_ones() as usize;
            let false_detect = (z & !mask & all).count_ones() as usize;
            let false_quiet = a - covered_detect - covered_quiet - false_detect;
            let prob =
                &pow_pd[covered_detect] * &pow_qd[covered_quiet] * &pow_pf[false_detect] * &pow_qf[false_quiet];
            if mask != 0 {
                w_cov += &prob;
            }
            w += prob;
        }
        if !w.is_zero() {
            // Pr(z) * posterior coverage count, kept in literal two-step form.
            let pr_z = &w / &m_rat;
            let posterior_count = &m_rat * &w_cov / &w;
            total += pr_z * posterior_count;
        }
    }
    Ok(total)
}
