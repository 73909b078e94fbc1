use crate::error::{Error, Result};

/// Number of candidate seeds per pixel.
pub const CANDIDATES: usize = 9;

/// Offsets `(dy, dx)` of each candidate slot, row-major.
pub const SLOT_OFFSETS: [(isize, isize); CANDIDATES] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Seed grid sitting on top of one pyramid level.
///
/// Pixel `(y, x)` may be assigned to the seeds `(⌊y/2⌋ + dy, ⌊x/2⌋ + dx)` for
/// `dy, dx ∈ {-1, 0, 1}`; slots that fall outside the grid are invalid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedGrid {
    pub pixel_height: usize,
    pub pixel_width: usize,
    pub seed_height: usize,
    pub seed_width: usize,
}

impl SeedGrid {
    /// Grid obtained by halving (rounding up) a `height × width` level.
    pub fn for_level(height: usize, width: usize) -> Self {
        Self {
            pixel_height: height,
            pixel_width: width,
            seed_height: height.div_ceil(2),
            seed_width: width.div_ceil(2),
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_height * self.pixel_width
    }

    pub fn seed_count(&self) -> usize {
        self.seed_height * self.seed_width
    }

    /// Seed `(row, col)` of a slot, or `None` if clipped.
    #[inline]
    pub fn slot_seed(&self, y: usize, x: usize, slot: usize) -> Option<(usize, usize)> {
        let (dy, dx) = SLOT_OFFSETS[slot];
        let sy = (y / 2) as isize + dy;
        let sx = (x / 2) as isize + dx;
        if sy < 0 || sx < 0 || sy >= self.seed_height as isize || sx >= self.seed_width as isize {
            None
        } else {
            Some((sy as usize, sx as usize))
        }
    }

    /// Linear seed index of a slot, or `None` if clipped.
    #[inline]
    pub fn slot_index(&self, y: usize, x: usize, slot: usize) -> Option<usize> {
        self.slot_seed(y, x, slot).map(|(sy, sx)| sy * self.seed_width + sx)
    }

    /// Validity of the nine slots of a pixel as a bit mask (bit `slot`).
    pub fn valid_mask(&self, y: usize, x: usize) -> u16 {
        (0..CANDIDATES).fold(0, |m, s| {
            if self.slot_seed(y, x, s).is_some() {
                m | (1 << s)
            } else {
                m
            }
        })
    }

    /// Valid candidates of a pixel as `(seed index, slot)`, in slot order.
    pub fn candidate_seeds(&self, y: usize, x: usize) -> Result<Vec<(usize, usize)>> {
        if y >= self.pixel_height || x >= self.pixel_width {
            return Err(Error::Geometry(format!(
                "pixel ({y}, {x}) outside a {}x{} level",
                self.pixel_height, self.pixel_width
            )));
        }
        Ok((0..CANDIDATES)
            .filter_map(|s| self.slot_index(y, x, s).map(|i| (i, s)))
            .collect())
    }
}
