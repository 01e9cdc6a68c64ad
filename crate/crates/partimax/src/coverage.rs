//! Particle-coverage utility and its incremental gain table.
//!
//! The utility of a box set `A` is the number of belief particles lying in
//! the union of the boxes (duplicated particles count with multiplicity).
//! [`pcf`] evaluates it by direct rectangle scan. [`GainTable`] maintains all
//! `n` marginal gains incrementally while boxes are selected one at a time:
//!
//! * `delta[i]` = marginal gain of box `i` given the applied selection,
//! * the member list of box `i` = every particle it covers, recorded once per
//!   initialization and never removed afterwards,
//! * `covered[p]` = whether particle `p` is covered by the applied selection.
//!
//! Member lists live back to back in one arena (counting-sort layout built in
//! two passes over the belief). Covered particles stay listed and are skipped
//! on read (lazy deletion), so `delta[i]` counts the uncovered members of box
//! `i`. Because each particle lies in exactly one box per tiling, the gains of
//! any single tiling sum to the uncovered-particle count, initialization costs
//! O(m t), and all selections applied after one initialization cost O(m t)
//! combined.

use crate::belief::ParticleBelief;
use crate::scalar::Scalar;
use crate::tiling::{PixelBoxId, TileCoding};

/// Particle-coverage function: how many particles of `belief` lie inside the
/// union of `boxes`. Direct scan, O(m |boxes|); serves as the from-scratch
/// reference for the incremental table.
pub fn pcf<S: Scalar>(belief: &ParticleBelief<S>, boxes: &[PixelBoxId], coder: &TileCoding) -> u32 {
    let rects: Vec<_> = boxes.iter().map(|&id| coder.box_rect(id)).collect();
    belief
        .particles()
        .iter()
        .filter(|s| rects.iter().any(|r| r.contains(s.x, s.y)))
        .count() as u32
}

/// Incremental marginal-gain table over flat box indices.
///
/// Built once per tile coding and re-initialized per belief; re-initialization
/// only clears the entries touched by the previous belief, so repeated use
/// stays O(m t) per frame regardless of `n`.
#[derive(Clone, Debug)]
pub struct GainTable {
    /// Marginal gain per box (dense, length n).
    delta: Vec<u32>,
    /// Arena offset of each box's member list (length n, meaningful only
    /// where `len` is non-zero).
    start: Vec<u32>,
    /// Member count of each box as of initialization (length n).
    len: Vec<u32>,
    /// All member lists back to back, length m*t once initialized.
    members: Vec<u32>,
    /// Covered flag per particle (length m).
    covered: Vec<bool>,
    /// Particle-major cache of each particle's t covering flats, tiling order.
    cover_cache: Vec<u32>,
    /// Flats that received members in the current initialization.
    touched: Vec<u32>,
    uncovered: u32,
    t: usize,
    m: usize,
}

impl GainTable {
    /// Allocates an empty table sized for the coder. O(n) once.
    pub fn new(coder: &TileCoding) -> Self {
        let n = coder.num_boxes() as usize;
        GainTable {
            delta: vec![0; n],
            start: vec![0; n],
            len: vec![0; n],
            members: Vec::new(),
            covered: Vec::new(),
            cover_cache: Vec::new(),
            touched: Vec::new(),
            uncovered: 0,
            t: coder.num_tilings() as usize,
            m: 0,
        }
    }

    /// Computes gains and member lists for a fresh belief with nothing
    /// selected yet. O(m t) plus clearing of the previously touched entries.
    pub fn initialize<S: Scalar>(&mut self, belief: &ParticleBelief<S>, coder: &TileCoding) {
        debug_assert_eq!(self.delta.len(), coder.num_boxes() as usize);
        for &flat in &self.touched {
            self.delta[flat as usize] = 0;
            self.len[flat as usize] = 0;
        }
        self.touched.clear();

        let m = belief.len();
        let t = self.t;
        self.m = m;
        self.covered.clear();
        self.covered.resize(m, false);
        self.cover_cache.resize(m * t, 0);
        self.members.resize(m * t, 0);
        self.uncovered = m as u32;

        // First pass: cache covers and count members per box.
        for (p, s) in belief.particles().iter().enumerate() {
            coder.for_each_cover(s.x, s.y, |id, flat| {
                let j = id.tiling as usize;
                let f = flat as usize;
                self.cover_cache[p * t + j] = flat;
                if self.delta[f] == 0 {
                    self.touched.push(flat);
                }
                self.delta[f] += 1;
            });
        }
        // Lay the lists out back to back, then fill them with `start` as the
        // write cursor and rewind the cursors afterwards.
        let mut acc = 0u32;
        for &flat in &self.touched {
            let f = flat as usize;
            self.start[f] = acc;
            self.len[f] = self.delta[f];
            acc += self.delta[f];
        }
        for p in 0..m {
            for j in 0..t {
                let f = self.cover_cache[p * t + j] as usize;
                let pos = self.start[f];
                self.members[pos as usize] = p as u32;
                self.start[f] = pos + 1;
            }
        }
        for &flat in &self.touched {
            let f = flat as usize;
            self.start[f] -= self.len[f];
        }
    }

    /// Marginal gain of box `flat` given everything applied so far. O(1).
    pub fn marginal_gain(&self, flat: u32) -> u32 {
        self.delta[flat as usize]
    }

    /// All current gains, indexed by flat box index.
    pub fn gains(&self) -> &[u32] {
        &self.delta
    }

    /// Marks box `flat` selected: covers its uncovered members and lowers the
    /// gain of every box covering each of them. Members are left in place, so
    /// the cost is O(member count + newly covered * t) and applying an
    /// already-applied (or empty) box is a no-op.
    pub fn apply_selection(&mut self, flat: u32) {
        let f = flat as usize;
        let l = self.len[f] as usize;
        // A zero-gain box has no uncovered members, so walking its list could
        // only skip every entry.
        if l == 0 || self.delta[f] == 0 {
            return;
        }
        let s0 = self.start[f] as usize;
        let t = self.t;
        for idx in s0..s0 + l {
            let p = self.members[idx] as usize;
            if self.covered[p] {
                continue;
            }
            self.covered[p] = true;
            self.uncovered -= 1;
            for j in 0..t {
                let b = self.cover_cache[p * t + j];
                self.delta[b as usize] -= 1;
            }
        }
    }

    /// Particles not yet covered by the applied selection.
    pub fn uncovered_count(&self) -> u32 {
        self.uncovered
    }

    /// Number of particles the table was initialized with.
    pub fn num_particles(&self) -> usize {
        self.m
    }

    pub fn is_covered(&self, particle: usize) -> bool {
        self.covered[particle]
    }

    /// Flat index of the box covering `particle` in tiling `j`.
    pub fn covering_box(&self, particle: usize, j: usize) -> u32 {
        self.cover_cache[particle * self.t + j]
    }

    /// Number of tilings t.
    pub fn num_tilings(&self) -> usize {
        self.t
    }

    /// Box with the highest current gain, ties broken by lowest flat index.
    /// Scans only the touched entries, so it is O(min(n, m t)).
    pub fn argmax_box(&self) -> Option<u32> {
        let mut best: Option<(u32, u32)> = None; // (gain, flat)
        for &flat in &self.touched {
            let g = self.delta[flat as usize];
            match best {
                Some((bg, bf)) if g < bg || (g == bg && flat >= bf) => {}
                _ => best = Some((g, flat)),
            }
        }
        best.map(|(_, flat)| flat)
    }

    /// Exhaustive structural self-check against the originating belief.
    /// Intended for tests and debugging; O(n + m t).
    pub fn check_invariants<S: Scalar>(
        &self,
        belief: &ParticleBelief<S>,
        coder: &TileCoding,
    ) -> std::result::Result<(), String> {
        if belief.len() != self.m {
            return Err("initialized with a different belief size".into());
        }
        let n = coder.num_boxes() as usize;
        let mut total_members = 0usize;
        for f in 0..n {
            let id = coder.from_flat(f as u32);
            let j = id.tiling as usize;
            let l = self.len[f] as usize;
            total_members += l;
            let s0 = self.start[f] as usize;
            let member_slice: &[u32] = if l == 0 {
                &[]
            } else if s0 + l <= self.members.len() {
                &self.members[s0..s0 + l]
            } else {
                return Err(format!("member list of box {f} leaves the arena"));
            };
            let mut live = 0u32;
            let mut seen = std::collections::HashSet::new();
            for &p in member_slice {
                let p = p as usize;
                if !seen.insert(p) {
                    return Err(format!("particle {p} listed twice for box {f}"));
                }
                let s = belief.particles()[p];
                if !coder.contains(id, s.x, s.y) {
                    return Err(format!("box {f} lists particle {p} outside its rectangle"));
                }
                if self.cover_cache[p * self.t + j] != f as u32 {
                    return Err(format!("cover cache of particle {p} misses box {f}"));
                }
                if !self.covered[p] {
                    live += 1;
                }
            }
            if self.delta[f] != live {
                return Err(format!("delta[{f}] != uncovered members of box {f}"));
            }
        }
        if total_members != self.m * self.t {
            return Err("member lists do not partition the arena".into());
        }
        let covered = self.covered.iter().filter(|&&c| c).count();
        if covered + self.uncovered as usize != self.m {
            return Err("covered + uncovered != m".into());
        }
        // Each tiling partitions the plane: its gains sum to the uncovered count.
        for j in 0..coder.num_tilings() as u16 {
            let sum: u32 = coder
                .tiling_boxes(j)
                .iter()
                .map(|&id| self.delta[coder.flat(id) as usize])
                .sum();
            if sum != self.uncovered {
                return Err(format!("tiling {j} gain sum {sum} != uncovered {}", self.uncovered));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::State;
    use crate::tiling::TileCodingConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coder() -> TileCoding {
        // 360x360 plane, 180x180 boxes, 60x30 offsets: t = 6, n = 54.
        TileCoding::build(TileCodingConfig {
            image_width: 360,
            image_height: 360,
            box_width: 180,
            box_height: 180,
            offset_x: 60,
            offset_y: 30,
        })
        .unwrap()
    }

    fn random_belief(m: usize, seed: u64) -> ParticleBelief<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ParticleBelief::from_states(
            (0..m)
                .map(|_| State {
                    x: rng.random_range(0.0..=360.0),
                    y: rng.random_range(0.0..=360.0),
                    vx: 0.0,
                    vy: 0.0,
                })
                .collect(),
        )
        .unwrap()
    }

    /// Oracle membership: a particle is covered by A iff one of its t
    /// covering boxes (index arithmetic route) is in A. This is the opposite
    /// route from pcf's rectangle scan.
    fn pcf_oracle(belief: &ParticleBelief<f64>, boxes: &[PixelBoxId], coder: &TileCoding) -> u32 {
        belief
            .particles()
            .iter()
            .filter(|s| coder.covers(s.x, s.y).iter().any(|id| boxes.contains(id)))
            .count() as u32
    }

    #[test]
    fn pcf_agrees_with_cover_membership_oracle() {
        let coder = coder();
        let belief = random_belief(250, 42);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..50 {
            let size = 1 + trial % 3;
            let boxes: Vec<PixelBoxId> = (0..size)
                .map(|_| coder.from_flat(rng.random_range(0..coder.num_boxes())))
                .collect();
            assert_eq!(pcf(&belief, &boxes, &coder), pcf_oracle(&belief, &boxes, &coder));
        }
    }

    #[test]
    fn pcf_counts_duplicates_with_multiplicity() {
        let coder = coder();
        let s = State { x: 90.0, y: 90.0, vx: 0.0, vy: 0.0 };
        let belief = ParticleBelief::from_states(vec![s; 7]).unwrap();
        let covering = coder.covers(s.x, s.y)[0];
        assert_eq!(pcf(&belief, &[covering], &coder), 7);
        assert_eq!(pcf(&belief, &[], &coder), 0);
    }

    #[test]
    fn initialized_gains_equal_singleton_pcf() {
        let coder = coder();
        let belief = random_belief(120, 7);
        let mut table = GainTable::new(&coder);
        table.initialize(&belief, &coder);
        table.check_invariants(&belief, &coder).unwrap();
        for flat in 0..coder.num_boxes() {
            let id = coder.from_flat(flat);
            assert_eq!(table.marginal_gain(flat), pcf(&belief, &[id], &coder), "box {flat}");
        }
    }

    #[test]
    fn applied_gains_match_from_scratch_differences() {
        let coder = coder();
        let belief = random_belief(80, 13);
        let mut table = GainTable::new(&coder);
        table.initialize(&belief, &coder);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut applied: Vec<PixelBoxId> = Vec::new();
        for _ in 0..8 {
            let flat = rng.random_range(0..coder.num_boxes());
            table.apply_selection(flat);
            applied.push(coder.from_flat(flat));
            table.check_invariants(&belief, &coder).unwrap();
            let base = pcf(&belief, &applied, &coder);
            for i in 0..coder.num_boxes() {
                let mut with = applied.clone();
                with.push(coder.from_flat(i));
                assert_eq!(
                    table.marginal_gain(i),
                    pcf(&belief, &with, &coder) - base,
                    "box {i} after {} selections",
                    applied.len()
                );
            }
        }
    }

    #[test]
    fn applying_a_box_twice_is_a_no_op() {
        let coder = coder();
        let belief = random_belief(60, 5);
        let mut table = GainTable::new(&coder);
        table.initialize(&belief, &coder);
        let flat = table.argmax_box().unwrap();
        table.apply_selection(flat);
        let gains: Vec<u32> = table.gains().to_vec();
        let uncovered = table.uncovered_count();
        table.apply_selection(flat);
        assert_eq!(table.gains(), &gains[..]);
        assert_eq!(table.uncovered_count(), uncovered);
    }

    #[test]
    fn reinitialization_equals_a_fresh_table() {
        let coder = coder();
        let first = random_belief(90, 11);
        let second = random_belief(40, 17);
        let mut reused = GainTable::new(&coder);
        reused.initialize(&first, &coder);
        for flat in [3u32, 40, 22] {
            reused.apply_selection(flat);
        }
        reused.initialize(&second, &coder);
        let mut fresh = GainTable::new(&coder);
        fresh.initialize(&second, &coder);
        assert_eq!(reused.gains(), fresh.gains());
        assert_eq!(reused.uncovered_count(), fresh.uncovered_count());
        reused.check_invariants(&second, &coder).unwrap();
    }

    #[test]
    fn argmax_breaks_ties_by_lowest_flat_index() {
        let coder = coder();
        // Two particles in far-apart boxes: every covering box has gain 1, so
        // the argmax must be the lowest covering flat index overall.
        let a = State { x: 20.0, y: 20.0, vx: 0.0, vy: 0.0 };
        let b = State { x: 300.0, y: 300.0, vx: 0.0, vy: 0.0 };
        let belief = ParticleBelief::from_states(vec![a, b]).unwrap();
        let mut table = GainTable::new(&coder);
        table.initialize(&belief, &coder);
        let expected = [a, b]
            .iter()
            .flat_map(|s| coder.covers(s.x, s.y))
            .map(|id| coder.flat(id))
            .min()
            .unwrap();
        assert_eq!(table.argmax_box(), Some(expected));
    }
}
