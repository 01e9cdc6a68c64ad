//! Overlapping pixel-box tilings (tile coding) over a bounded image plane.
//!
//! A tile coding lays `t` shifted copies of an axis-aligned box grid over the
//! plane. Tiling `j` is displaced by `j * (offset_x, offset_y)` modulo the box
//! size, and every tiling is extended past the image edges so that it
//! partitions the whole plane on its own: each in-plane position lies in
//! exactly one box per tiling, hence in exactly `t` boxes overall. Boxes use
//! half-open interval semantics `[x0, x0 + w) x [y0, y0 + h)`.
//!
//! `t` is derived, never stored in the config:
//! `t = lcm(box_width / offset_x, box_height / offset_y)`, the period after
//! which the shift sequence `j * (offset_x, offset_y) mod (box_w, box_h)`
//! repeats.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_integer::Integer;

/// Geometry parameters of a tile coding. All fields are pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileCodingConfig {
    pub image_width: u32,
    pub image_height: u32,
    pub box_width: u32,
    pub box_height: u32,
    /// Horizontal displacement between consecutive tilings. Must divide
    /// `box_width`.
    pub offset_x: u32,
    /// Vertical displacement between consecutive tilings. Must divide
    /// `box_height`.
    pub offset_y: u32,
}

impl TileCodingConfig {
    /// Bounds of the image plane (positions live in the closed rectangle
    /// `[0, image_width] x [0, image_height]`).
    pub fn plane(&self) -> Plane {
        Plane {
            width: self.image_width,
            height: self.image_height,
        }
    }
}

/// Closed image-plane rectangle used for clamping positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Plane {
    pub width: u32,
    pub height: u32,
}

impl Plane {
    /// Clamps a position into the closed plane rectangle.
    pub fn clamp<S: Scalar>(&self, x: S, y: S) -> (S, S) {
        let zero = S::zero();
        let w = S::from_pixels(self.width as i64);
        let h = S::from_pixels(self.height as i64);
        (x.max(zero).min(w), y.max(zero).min(h))
    }

    /// True iff the position lies inside the closed plane rectangle.
    pub fn contains<S: Scalar>(&self, x: S, y: S) -> bool {
        let (cx, cy) = self.clamp(x, y);
        cx == x && cy == y
    }
}

/// Identifies one box: the tiling it belongs to plus its grid cell within
/// that tiling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelBoxId {
    pub tiling: u16,
    pub col: u16,
    pub row: u16,
}

/// Pixel rectangle of one box. The origin may be negative: boundary boxes of
/// shifted tilings overhang the image edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxRect {
    pub x0: i64,
    pub y0: i64,
    pub width: u32,
    pub height: u32,
}

impl BoxRect {
    /// Half-open containment test against exact integer edges.
    pub fn contains<S: Scalar>(&self, x: S, y: S) -> bool {
        let x0 = S::from_pixels(self.x0);
        let x1 = S::from_pixels(self.x0 + self.width as i64);
        let y0 = S::from_pixels(self.y0);
        let y1 = S::from_pixels(self.y0 + self.height as i64);
        x >= x0 && x < x1 && y >= y0 && y < y1
    }

    /// Center of the rectangle.
    pub fn center(&self) -> (f64, f64) {
        (
            self.x0 as f64 + self.width as f64 / 2.0,
            self.y0 as f64 + self.height as f64 / 2.0,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct TilingLayout {
    /// Box origins in x are at `col * box_width - shift_x`.
    shift_x: i64,
    shift_y: i64,
    /// box_width - shift_x and box_height - shift_y: for a pixel with
    /// x mod box_width = rem, this tiling's column is x / box_width plus one
    /// exactly when rem >= step_x (writing x + shift = q w + rem + shift with
    /// rem + shift < 2w). Lets cover lookup divide once per axis instead of
    /// once per tiling.
    step_x: u64,
    step_y: u64,
    cols: u32,
    rows: u32,
    /// Flat index of this tiling's (col 0, row 0) box.
    base: u32,
}

/// Exact division by a fixed divisor via reciprocal multiplication, for the
/// box-lookup hot path (two divisions per particle per tiling add up).
///
/// With magic = ceil(2^64 / d), `(x * magic) >> 64` equals `x / d` exactly for
/// every x < 2^32: writing magic * d = 2^64 + e with 0 <= e < d, the product
/// is (x + x * e / 2^64) / d, and x * e / 2^64 < 1 cannot push an integer
/// numerator past the next multiple of d. Larger dividends (and d = 1, whose
/// magic would wrap) take the plain-division branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct FastDiv {
    divisor: u64,
    magic: u64,
}

impl FastDiv {
    fn new(divisor: u32) -> Self {
        debug_assert!(divisor >= 1);
        FastDiv {
            divisor: divisor as u64,
            magic: (u64::MAX / divisor as u64).wrapping_add(1),
        }
    }

    #[inline]
    fn div(self, x: u64) -> u64 {
        if self.divisor > 1 && x < (1 << 32) {
            ((x as u128 * self.magic as u128) >> 64) as u64
        } else {
            x / self.divisor
        }
    }
}

/// Immutable tile-coding index: box lookup, containment and flat numbering.
///
/// Flat indices are tiling-major, then row-major within a tiling:
/// `flat = base(tiling) + row * cols(tiling) + col`. Tilings may have
/// different column/row counts (the extension past the image edge depends on
/// the shift), so `base` carries the cumulative offset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileCoding {
    config: TileCodingConfig,
    tilings: Vec<TilingLayout>,
    num_boxes: u32,
    fast_w: FastDiv,
    fast_h: FastDiv,
}

impl TileCoding {
    /// Validates the config and precomputes the tiling layouts.
    pub fn build(config: TileCodingConfig) -> Result<Self> {
        if config.image_width == 0 || config.image_height == 0 {
            return Err(Error::InvalidTiling("image dimensions must be positive".into()));
        }
        if config.box_width == 0 || config.box_height == 0 {
            return Err(Error::InvalidTiling("box dimensions must be positive".into()));
        }
        if config.offset_x == 0 || config.offset_x > config.box_width {
            return Err(Error::InvalidTiling(format!(
                "offset_x {} must be in 1..={}",
                config.offset_x, config.box_width
            )));
        }
        if config.offset_y == 0 || config.offset_y > config.box_height {
            return Err(Error::InvalidTiling(format!(
                "offset_y {} must be in 1..={}",
                config.offset_y, config.box_height
            )));
        }
        if config.box_width % config.offset_x != 0 {
            return Err(Error::InvalidTiling(format!(
                "offset_x {} does not divide box_width {}",
                config.offset_x, config.box_width
            )));
        }
        if config.box_height % config.offset_y != 0 {
            return Err(Error::InvalidTiling(format!(
                "offset_y {} does not divide box_height {}",
                config.offset_y, config.box_height
            )));
        }

        let t = (config.box_width / config.offset_x).lcm(&(config.box_height / config.offset_y));

        let w = config.box_width as i64;
        let h = config.box_height as i64;
        let mut tilings = Vec::with_capacity(t as usize);
        let mut base = 0u32;
        for j in 0..t as i64 {
            let shift_x = (j * config.offset_x as i64) % w;
            let shift_y = (j * config.offset_y as i64) % h;
            // Columns needed so the half-open boxes cover every clamped
            // position, including x = image_width exactly.
            let cols = ((config.image_width as i64 + shift_x) / w + 1) as u32;
            let rows = ((config.image_height as i64 + shift_y) / h + 1) as u32;
            tilings.push(TilingLayout {
                shift_x,
                shift_y,
                step_x: (w - shift_x) as u64,
                step_y: (h - shift_y) as u64,
                cols,
                rows,
                base,
            });
            base = base
                .checked_add(cols * rows)
                .ok_or_else(|| Error::InvalidTiling("box count overflows u32".into()))?;
        }

        Ok(TileCoding {
            config,
            tilings,
            num_boxes: base,
            fast_w: FastDiv::new(config.box_width),
            fast_h: FastDiv::new(config.box_height),
        })
    }

    pub fn config(&self) -> &TileCodingConfig {
        &self.config
    }

    /// Number of tilings `t`.
    pub fn num_tilings(&self) -> u32 {
        self.tilings.len() as u32
    }

    /// Total number of boxes `n` across all tilings.
    pub fn num_boxes(&self) -> u32 {
        self.num_boxes
    }

    /// The boxes covering a position: exactly one per tiling, so exactly
    /// `t` ids, ordered by tiling index. Out-of-plane positions are clamped
    /// to the nearest plane boundary first.
    ///
    /// Index arithmetic is exact: the fractional position is floored to an
    /// integer pixel (exact in f32/f64 for any accepted plane size), after
    /// which column/row come from integer division. `covers` and
    /// [`TileCoding::contains`] therefore always agree.
    pub fn covers<S: Scalar>(&self, x: S, y: S) -> Vec<PixelBoxId> {
        let mut out = Vec::with_capacity(self.tilings.len());
        self.for_each_cover(x, y, |id, _| out.push(id));
        out
    }

    /// Visits the `t` covering boxes of a position as `(id, flat)` pairs in
    /// tiling order without allocating.
    pub fn for_each_cover<S: Scalar>(&self, x: S, y: S, mut f: impl FnMut(PixelBoxId, u32)) {
        let (x, y) = self.config.plane().clamp(x, y);
        // Exact: f32 -> f64 is lossless and floor() is exact, so xi/yi are
        // the true integer parts of the clamped position (non-negative after
        // clamping, so unsigned arithmetic applies).
        let xi = x.to_f64().expect("finite position").floor() as u64;
        let yi = y.to_f64().expect("finite position").floor() as u64;
        let col0 = self.fast_w.div(xi);
        let row0 = self.fast_h.div(yi);
        let rem_x = xi - col0 * self.config.box_width as u64;
        let rem_y = yi - row0 * self.config.box_height as u64;
        for (j, tl) in self.tilings.iter().enumerate() {
            let col = col0 + (rem_x >= tl.step_x) as u64;
            let row = row0 + (rem_y >= tl.step_y) as u64;
            let id = PixelBoxId {
                tiling: j as u16,
                col: col as u16,
                row: row as u16,
            };
            let flat = tl.base + row as u32 * tl.cols + col as u32;
            f(id, flat);
        }
    }

    /// Half-open rectangle containment: true iff the position lies inside the
    /// box. Positions are NOT clamped here; an out-of-plane position is only
    /// contained if the (possibly overhanging) rectangle actually covers it.
    pub fn contains<S: Scalar>(&self, id: PixelBoxId, x: S, y: S) -> bool {
        self.box_rect(id).contains(x, y)
    }

    /// Pixel rectangle of a box.
    pub fn box_rect(&self, id: PixelBoxId) -> BoxRect {
        let tl = &self.tilings[id.tiling as usize];
        BoxRect {
            x0: id.col as i64 * self.config.box_width as i64 - tl.shift_x,
            y0: id.row as i64 * self.config.box_height as i64 - tl.shift_y,
            width: self.config.box_width,
            height: self.config.box_height,
        }
    }

    /// Flat index of a box id (tiling-major, then row-major).
    pub fn flat(&self, id: PixelBoxId) -> u32 {
        let tl = &self.tilings[id.tiling as usize];
        debug_assert!((id.col as u32) < tl.cols && (id.row as u32) < tl.rows);
        tl.base + id.row as u32 * tl.cols + id.col as u32
    }

    /// Inverse of [`TileCoding::flat`].
    pub fn from_flat(&self, flat: u32) -> PixelBoxId {
        debug_assert!(flat < self.num_boxes);
        let j = self.tiling_of_flat(flat);
        let tl = &self.tilings[j as usize];
        let within = flat - tl.base;
        PixelBoxId {
            tiling: j,
            col: (within % tl.cols) as u16,
            row: (within / tl.cols) as u16,
        }
    }

    /// Tiling index owning a flat index.
    pub fn tiling_of_flat(&self, flat: u32) -> u16 {
        debug_assert!(flat < self.num_boxes);
        // Tilings are few (t is small); linear scan over bases.
        let mut j = self.tilings.len() - 1;
        while self.tilings[j].base > flat {
            j -= 1;
        }
        j as u16
    }

    /// All boxes of one tiling in row-major order. That single tiling
    /// partitions the plane, which makes it the natural exhaustive-detector
    /// reference set.
    pub fn tiling_boxes(&self, tiling: u16) -> Vec<PixelBoxId> {
        let tl = &self.tilings[tiling as usize];
        let mut out = Vec::with_capacity((tl.cols * tl.rows) as usize);
        for row in 0..tl.rows {
            for col in 0..tl.cols {
                out.push(PixelBoxId {
                    tiling,
                    col: col as u16,
                    row: row as u16,
                });
            }
        }
        out
    }
}
