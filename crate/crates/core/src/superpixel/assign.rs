//! Nine-candidate soft assignments of pixels to seeds.

use super::grid::{SeedGrid, CANDIDATES};
use crate::error::{shape_err, Error, Result};
use crate::tensor::FeatureMap;

/// Soft assignment of one pyramid level's pixels to its seed grid.
///
/// `weights` is `pixel_height × pixel_width × 9`; per pixel the valid slots
/// sum to one and clipped slots are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentLevel {
    grid: SeedGrid,
    weights: FeatureMap,
}

impl AssignmentLevel {
    /// Wraps weights, checking dimensions, non-negativity and row sums.
    pub fn new(grid: SeedGrid, weights: FeatureMap) -> Result<Self> {
        check_weights_dims(&grid, &weights)?;
        for y in 0..grid.pixel_height {
            for x in 0..grid.pixel_width {
                let mask = grid.valid_mask(y, x);
                let mut sum = 0.0;
                for (s, &w) in weights.pixel(y, x).iter().enumerate() {
                    let valid = mask & (1 << s) != 0;
                    if !w.is_finite() || w < 0.0 || (!valid && w != 0.0) {
                        return Err(Error::Data(format!(
                            "invalid assignment weight {w} at ({y}, {x}) slot {s}"
                        )));
                    }
                    sum += w;
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Data(format!(
                        "assignment weights at ({y}, {x}) sum to {sum}"
                    )));
                }
            }
        }
        Ok(Self { grid, weights })
    }

    /// Uniform weights over the valid candidates of every pixel.
    pub fn uniform(grid: SeedGrid) -> Self {
        let weights = FeatureMap::from_fn(grid.pixel_height, grid.pixel_width, CANDIDATES, |y, x, s| {
            let mask = grid.valid_mask(y, x);
            if mask & (1 << s) != 0 {
                1.0 / mask.count_ones() as f64
            } else {
                0.0
            }
        });
        Self { grid, weights }
    }

    /// One-hot assignment built from a per-pixel slot choice.
    pub fn one_hot(grid: SeedGrid, mut slot: impl FnMut(usize, usize) -> usize) -> Result<Self> {
        let mut weights = FeatureMap::zeros(grid.pixel_height, grid.pixel_width, CANDIDATES);
        for y in 0..grid.pixel_height {
            for x in 0..grid.pixel_width {
                let s = slot(y, x);
                if s >= CANDIDATES || grid.slot_seed(y, x, s).is_none() {
                    return Err(Error::Geometry(format!("slot {s} is not valid at ({y}, {x})")));
                }
                weights.set(y, x, s, 1.0);
            }
        }
        Ok(Self { grid, weights })
    }

    /// Each pixel assigned to the seed directly above it (slot `(0, 0)`), so
    /// superpixels are the 2×2 blocks of the level.
    pub fn blocks(grid: SeedGrid) -> Self {
        Self::one_hot(grid, |_, _| 4).expect("centre slot is always valid")
    }

    pub(crate) fn from_parts_unchecked(grid: SeedGrid, weights: FeatureMap) -> Self {
        Self { grid, weights }
    }

    pub fn grid(&self) -> &SeedGrid {
        &self.grid
    }

    pub fn weights(&self) -> &FeatureMap {
        &self.weights
    }

    /// Slot with the largest weight, lowest slot index on ties.
    pub fn argmax_slot(&self, y: usize, x: usize) -> usize {
        let w = self.weights.pixel(y, x);
        let mask = self.grid.valid_mask(y, x);
        let mut best = usize::MAX;
        for s in 0..CANDIDATES {
            if mask & (1 << s) == 0 {
                continue;
            }
            if best == usize::MAX || w[s] > w[best] {
                best = s;
            }
        }
        best
    }
}

pub(crate) fn check_weights_dims(grid: &SeedGrid, weights: &FeatureMap) -> Result<()> {
    if weights.dims() != (grid.pixel_height, grid.pixel_width, CANDIDATES) {
        return Err(shape_err!(
            "assignment weights {:?} do not match a {}x{} level with 9 candidates",
            weights.dims(),
            grid.pixel_height,
            grid.pixel_width
        ));
    }
    Ok(())
}

/// Valid-slot masks of every pixel of a grid, row-major.
pub fn grid_masks(grid: &SeedGrid) -> Vec<u16> {
    let mut m = Vec::with_capacity(grid.pixel_count());
    for y in 0..grid.pixel_height {
        for x in 0..grid.pixel_width {
            m.push(grid.valid_mask(y, x));
        }
    }
    m
}

/// Softmax over the valid candidates of each pixel; invalid slots get 0.
pub fn softmax_candidates(logits: &FeatureMap, masks: &[u16]) -> Result<FeatureMap> {
    if logits.channels() != CANDIDATES {
        return Err(shape_err!("expected 9 candidate channels, got {}", logits.channels()));
    }
    if masks.len() != logits.height() * logits.width() {
        return Err(shape_err!(
            "{} masks for a {}x{} map",
            masks.len(),
            logits.height(),
            logits.width()
        ));
    }
    let mut out = FeatureMap::zeros(logits.height(), logits.width(), CANDIDATES);
    for (p, &mask) in masks.iter().enumerate() {
        if mask & 0x1ff == 0 {
            return Err(Error::Geometry(format!(
                "pixel ({}, {}) has no valid candidate",
                p / logits.width(),
                p % logits.width()
            )));
        }
        let l = &logits.data()[p * CANDIDATES..(p + 1) * CANDIDATES];
        let o = &mut out.data_mut()[p * CANDIDATES..(p + 1) * CANDIDATES];
        let mut max = f64::NEG_INFINITY;
        for s in 0..CANDIDATES {
            if mask & (1 << s) != 0 {
                max = max.max(l[s]);
            }
        }
        let mut sum = 0.0;
        for s in 0..CANDIDATES {
            if mask & (1 << s) != 0 {
                o[s] = (l[s] - max).exp();
                sum += o[s];
            }
        }
        for v in o.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

pub(crate) fn softmax_candidates_backward(out: &FeatureMap, grad_out: &FeatureMap) -> FeatureMap {
    let mut g = FeatureMap::zeros(out.height(), out.width(), CANDIDATES);
    for ((gs, os), gos) in g
        .data_mut()
        .chunks_mut(CANDIDATES)
        .zip(out.data().chunks(CANDIDATES))
        .zip(grad_out.data().chunks(CANDIDATES))
    {
        let dot: f64 = os.iter().zip(gos).map(|(o, g)| o * g).sum();
        for s in 0..CANDIDATES {
            gs[s] = os[s] * (gos[s] - dot);
        }
    }
    g
}

pub(crate) fn check_seed_dims(grid: &SeedGrid, seeds: &FeatureMap, what: &str) -> Result<()> {
    if (seeds.height(), seeds.width()) != (grid.seed_height, grid.seed_width) {
        return Err(shape_err!(
            "{what}: seed map {}x{} does not match a {}x{} seed grid",
            seeds.height(),
            seeds.width(),
            grid.seed_height,
            grid.seed_width
        ));
    }
    Ok(())
}

/// Squared Euclidean distance from every pixel to each of its candidate
/// seeds (`H × W × 9`, zero on clipped slots).
pub fn candidate_sq_distances(
    pixels: &FeatureMap,
    seeds: &FeatureMap,
    grid: &SeedGrid,
) -> Result<FeatureMap> {
    check_distance_inputs(pixels, seeds, grid)?;
    let c = pixels.channels();
    let mut out = FeatureMap::zeros(grid.pixel_height, grid.pixel_width, CANDIDATES);
    for y in 0..grid.pixel_height {
        for x in 0..grid.pixel_width {
            let p = pixels.pixel(y, x);
            for s in 0..CANDIDATES {
                if let Some((sy, sx)) = grid.slot_seed(y, x, s) {
                    let q = seeds.pixel(sy, sx);
                    let mut d = 0.0;
                    for k in 0..c {
                        let t = p[k] - q[k];
                        d += t * t;
                    }
                    out.set(y, x, s, d);
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn check_distance_inputs(pixels: &FeatureMap, seeds: &FeatureMap, grid: &SeedGrid) -> Result<()> {
    if (pixels.height(), pixels.width()) != (grid.pixel_height, grid.pixel_width) {
        return Err(shape_err!(
            "pixel features {}x{} do not match a {}x{} level",
            pixels.height(),
            pixels.width(),
            grid.pixel_height,
            grid.pixel_width
        ));
    }
    check_seed_dims(grid, seeds, "soft assignment")?;
    if pixels.channels() != seeds.channels() {
        return Err(shape_err!(
            "pixel features have {} channels, seed features {}",
            pixels.channels(),
            seeds.channels()
        ));
    }
    Ok(())
}

pub(crate) fn candidate_sq_distances_backward(
    pixels: &FeatureMap,
    seeds: &FeatureMap,
    grid: &SeedGrid,
    grad_out: &FeatureMap,
) -> (FeatureMap, FeatureMap) {
    let c = pixels.channels();
    let mut gp = FeatureMap::zeros(pixels.height(), pixels.width(), c);
    let mut gs = FeatureMap::zeros(seeds.height(), seeds.width(), c);
    for y in 0..grid.pixel_height {
        for x in 0..grid.pixel_width {
            for s in 0..CANDIDATES {
                let g = grad_out.get(y, x, s);
                if g == 0.0 {
                    continue;
                }
                if let Some((sy, sx)) = grid.slot_seed(y, x, s) {
                    for k in 0..c {
                        let t = 2.0 * g * (pixels.get(y, x, k) - seeds.get(sy, sx, k));
                        gp.pixel_mut(y, x)[k] += t;
                        gs.pixel_mut(sy, sx)[k] -= t;
                    }
                }
            }
        }
    }
    (gp, gs)
}

/// Soft assignment with weights `∝ exp(−‖x_p − s_c‖² / temperature)` over
/// the valid candidates of each pixel.
pub fn soft_assign(pixel_features: &FeatureMap, seed_features: &FeatureMap, temperature: f64) -> Result<AssignmentLevel> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Parameter(format!("temperature must be positive, got {temperature}")));
    }
    let grid = SeedGrid::for_level(pixel_features.height(), pixel_features.width());
    let d = candidate_sq_distances(pixel_features, seed_features, &grid)?;
    let logits = d.map(|v| -v / temperature);
    let weights = softmax_candidates(&logits, &grid_masks(&grid))?;
    Ok(AssignmentLevel::from_parts_unchecked(grid, weights))
}
