//! Seed grids, soft assignments, hard superpixels and classic SLIC.

mod assign;
mod grid;
mod slic;

pub use assign::{candidate_sq_distances, grid_masks, soft_assign, softmax_candidates, AssignmentLevel};
pub(crate) use assign::{
    candidate_sq_distances_backward, check_distance_inputs, check_seed_dims, check_weights_dims,
    softmax_candidates_backward,
};
pub use grid::{SeedGrid, CANDIDATES, SLOT_OFFSETS};
pub use slic::{slic, SlicParams};
pub(crate) use slic::components;

use crate::error::{Error, Result};
use crate::labels::LabelMap;

/// Assignment levels ordered finest first. The seed grid of level `l` is the
/// pixel grid of level `l + 1`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AssignmentPyramid {
    levels: Vec<AssignmentLevel>,
}

impl AssignmentPyramid {
    pub fn new(levels: Vec<AssignmentLevel>) -> Result<Self> {
        for pair in levels.windows(2) {
            let (a, b) = (pair[0].grid(), pair[1].grid());
            if (a.seed_height, a.seed_width) != (b.pixel_height, b.pixel_width) {
                return Err(Error::Shape(format!(
                    "level with {}x{} seeds followed by a {}x{} level",
                    a.seed_height, a.seed_width, b.pixel_height, b.pixel_width
                )));
            }
        }
        Ok(Self { levels })
    }

    /// Pyramid of `count` block (nearest-seed) levels over a `height × width`
    /// image.
    pub fn blocks(height: usize, width: usize, count: usize) -> Self {
        let mut levels = Vec::with_capacity(count);
        let (mut h, mut w) = (height, width);
        for _ in 0..count {
            let g = SeedGrid::for_level(h, w);
            levels.push(AssignmentLevel::blocks(g));
            h = g.seed_height;
            w = g.seed_width;
        }
        Self { levels }
    }

    pub fn levels(&self) -> &[AssignmentLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Pixel dimensions of the finest level, if any.
    pub fn finest_dims(&self) -> Option<(usize, usize)> {
        self.levels
            .first()
            .map(|l| (l.grid().pixel_height, l.grid().pixel_width))
    }

    /// Seed dimensions of the coarsest level, if any.
    pub fn coarsest_seed_dims(&self) -> Option<(usize, usize)> {
        self.levels
            .last()
            .map(|l| (l.grid().seed_height, l.grid().seed_width))
    }
}

/// Hard superpixels: every pixel follows its argmax slot (lowest slot on
/// ties) through all levels; the id is the linear index of the final seed.
pub fn hard_labels(pyramid: &AssignmentPyramid) -> LabelMap {
    let Some(first) = pyramid.levels().first() else {
        return LabelMap::filled(0, 0, 0);
    };
    let (h, w) = (first.grid().pixel_height, first.grid().pixel_width);
    // Hard map of each level from its pixels to its seeds.
    let maps: Vec<Vec<usize>> = pyramid
        .levels()
        .iter()
        .map(|level| {
            let g = level.grid();
            let mut m = Vec::with_capacity(g.pixel_count());
            for y in 0..g.pixel_height {
                for x in 0..g.pixel_width {
                    let s = level.argmax_slot(y, x);
                    m.push(g.slot_index(y, x, s).expect("argmax slot is valid"));
                }
            }
            m
        })
        .collect();
    LabelMap::from_fn(h, w, |y, x| {
        let mut idx = y * w + x;
        for m in &maps {
            idx = m[idx];
        }
        idx as u32
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_take_first_valid_slot() {
        let g = SeedGrid::for_level(6, 6);
        let p = AssignmentPyramid::new(vec![AssignmentLevel::uniform(g)]).unwrap();
        let labels = hard_labels(&p);
        for y in 0..6 {
            for x in 0..6 {
                let first = (0..9).find(|&s| g.slot_seed(y, x, s).is_some()).unwrap();
                assert_eq!(labels.get(y, x) as usize, g.slot_index(y, x, first).unwrap());
            }
        }
    }

    #[test]
    fn block_level_gives_two_by_two_superpixels() {
        let p = AssignmentPyramid::blocks(8, 8, 1);
        let labels = hard_labels(&p);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(labels.get(y, x) as usize, (y / 2) * 4 + x / 2);
            }
        }
    }

    #[test]
    fn one_hot_levels_compose_like_path_following() {
        let g1 = SeedGrid::for_level(8, 8);
        let g2 = SeedGrid::for_level(4, 4);
        let pick = |y: usize, x: usize, g: SeedGrid| {
            let s = (y * 5 + x * 3) % 9;
            if g.slot_seed(y, x, s).is_some() {
                s
            } else {
                4
            }
        };
        let l1 = AssignmentLevel::one_hot(g1, |y, x| pick(y, x, g1)).unwrap();
        let l2 = AssignmentLevel::one_hot(g2, |y, x| pick(y, x, g2)).unwrap();
        let p = AssignmentPyramid::new(vec![l1, l2]).unwrap();
        let labels = hard_labels(&p);
        for y in 0..8 {
            for x in 0..8 {
                let (y1, x1) = g1.slot_seed(y, x, pick(y, x, g1)).unwrap();
                let (y2, x2) = g2.slot_seed(y1, x1, pick(y1, x1, g2)).unwrap();
                assert_eq!(labels.get(y, x) as usize, y2 * 2 + x2);
            }
        }
    }

    #[test]
    fn mismatched_levels_rejected() {
        let a = AssignmentLevel::uniform(SeedGrid::for_level(8, 8));
        let b = AssignmentLevel::uniform(SeedGrid::for_level(3, 4));
        assert!(AssignmentPyramid::new(vec![a, b]).is_err());
    }
}
