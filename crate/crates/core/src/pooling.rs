//! Superpixel pooling.
//!
//! Downsampling replaces every seed by the assignment-weighted average of the
//! pixels that point at it (weights normalised per seed). Upsampling gives
//! every pixel the assignment-weighted mixture of its candidate seeds
//! (weights normalised per pixel). `q` chains downsampling through every
//! level of a pyramid and then upsamples back, so each pixel ends up holding
//! the average feature of its superpixels. The decoder is the upsampling half
//! applied to coarse class scores.

use crate::error::{shape_err, Result};
use crate::superpixel::{check_seed_dims, check_weights_dims, AssignmentLevel, AssignmentPyramid, SeedGrid, CANDIDATES};
use crate::tensor::FeatureMap;

/// Incoming weight mass below which a seed is treated as empty.
pub const EMPTY_SEED_MASS: f64 = 1e-12;

/// Result of a downsampling step.
#[derive(Clone, Debug, PartialEq)]
pub struct Downsampled {
    pub seeds: FeatureMap,
    /// Seeds whose incoming mass was below [`EMPTY_SEED_MASS`]; they are set to 0.
    pub empty_seeds: usize,
}

fn check_pixel_dims(x: &FeatureMap, grid: &SeedGrid, what: &str) -> Result<()> {
    if (x.height(), x.width()) != (grid.pixel_height, grid.pixel_width) {
        return Err(shape_err!(
            "{what}: {}x{} map on a {}x{} level",
            x.height(),
            x.width(),
            grid.pixel_height,
            grid.pixel_width
        ));
    }
    Ok(())
}

pub(crate) fn check_downsample(x: &FeatureMap, weights: &FeatureMap, grid: &SeedGrid) -> Result<()> {
    check_weights_dims(grid, weights)?;
    check_pixel_dims(x, grid, "superpixel downsampling")
}

pub(crate) fn check_upsample(y: &FeatureMap, weights: &FeatureMap, grid: &SeedGrid) -> Result<()> {
    check_weights_dims(grid, weights)?;
    check_seed_dims(grid, y, "superpixel upsampling")
}

/// Per-seed incoming weight mass.
fn seed_mass(weights: &FeatureMap, grid: &SeedGrid) -> Vec<f64> {
    let mut mass = vec![0.0; grid.seed_count()];
    for y in 0..grid.pixel_height {
        for x in 0..grid.pixel_width {
            let w = weights.pixel(y, x);
            for s in 0..CANDIDATES {
                if let Some(i) = grid.slot_index(y, x, s) {
                    mass[i] += w[s];
                }
            }
        }
    }
    mass
}

pub(crate) fn downsample_forward(x: &FeatureMap, weights: &FeatureMap, grid: &SeedGrid) -> Downsampled {
    let c = x.channels();
    let mass = seed_mass(weights, grid);
    // Averages are accumulated around the first contributing pixel, so a seed
    // whose pixels all carry the same value reproduces it exactly.
    let mut reference = FeatureMap::zeros(grid.seed_height, grid.seed_width, c);
    let mut has_reference = vec![false; grid.seed_count()];
    let mut sums = FeatureMap::zeros(grid.seed_height, grid.seed_width, c);
    for y in 0..grid.pixel_height {
        for xx in 0..grid.pixel_width {
            let w = weights.pixel(y, xx);
            let v = x.pixel(y, xx);
            for s in 0..CANDIDATES {
                let Some(i) = grid.slot_index(y, xx, s) else {
                    continue;
                };
                if w[s] == 0.0 {
                    continue;
                }
                if !has_reference[i] {
                    has_reference[i] = true;
                    reference.data_mut()[i * c..(i + 1) * c].copy_from_slice(v);
                }
                let r = &reference.data()[i * c..(i + 1) * c];
                let o = &mut sums.data_mut()[i * c..(i + 1) * c];
                for k in 0..c {
                    o[k] += w[s] * (v[k] - r[k]);
                }
            }
        }
    }
    let mut empty_seeds = 0;
    for (i, &m) in mass.iter().enumerate() {
        let r = &reference.data()[i * c..(i + 1) * c];
        let o = &mut sums.data_mut()[i * c..(i + 1) * c];
        if m < EMPTY_SEED_MASS {
            empty_seeds += 1;
            o.iter_mut().for_each(|v| *v = 0.0);
        } else {
            for k in 0..c {
                o[k] = r[k] + o[k] / m;
            }
        }
    }
    Downsampled {
        seeds: sums,
        empty_seeds,
    }
}

/// Gradients of downsampling with respect to the pixel map and the weights.
pub(crate) fn downsample_backward(
    x: &FeatureMap,
    weights: &FeatureMap,
    grid: &SeedGrid,
    out: &FeatureMap,
    grad_out: &FeatureMap,
) -> (FeatureMap, FeatureMap) {
    let c = x.channels();
    let mass = seed_mass(weights, grid);
    let mut gx = FeatureMap::zeros(x.height(), x.width(), c);
    let mut gw = FeatureMap::zeros(weights.height(), weights.width(), CANDIDATES);
    for y in 0..grid.pixel_height {
        for xx in 0..grid.pixel_width {
            for s in 0..CANDIDATES {
                let Some(i) = grid.slot_index(y, xx, s) else {
                    continue;
                };
                let m = mass[i];
                if m < EMPTY_SEED_MASS {
                    continue;
                }
                let w = weights.get(y, xx, s);
                let go = &grad_out.data()[i * c..(i + 1) * c];
                let o = &out.data()[i * c..(i + 1) * c];
                let mut gws = 0.0;
                for k in 0..c {
                    gx.pixel_mut(y, xx)[k] += go[k] * w / m;
                    gws += go[k] * (x.get(y, xx, k) - o[k]);
                }
                gw.set(y, xx, s, gws / m);
            }
        }
    }
    (gx, gw)
}

pub(crate) fn upsample_forward(seeds: &FeatureMap, weights: &FeatureMap, grid: &SeedGrid) -> FeatureMap {
    let c = seeds.channels();
    let mut out = FeatureMap::zeros(grid.pixel_height, grid.pixel_width, c);
    for y in 0..grid.pixel_height {
        for x in 0..grid.pixel_width {
            let w = weights.pixel(y, x);
            let mut acc = vec![0.0; c];
            for s in 0..CANDIDATES {
                if let Some(i) = grid.slot_index(y, x, s) {
                    let v = &seeds.data()[i * c..(i + 1) * c];
                    for k in 0..c {
                        acc[k] += w[s] * v[k];
                    }
                }
            }
            out.pixel_mut(y, x).copy_from_slice(&acc);
        }
    }
    out
}

/// Gradients of upsampling with respect to the seed map and the weights.
pub(crate) fn upsample_backward(
    seeds: &FeatureMap,
    weights: &FeatureMap,
    grid: &SeedGrid,
    grad_out: &FeatureMap,
) -> (FeatureMap, FeatureMap) {
    let c = seeds.channels();
    let mut gy = FeatureMap::zeros(seeds.height(), seeds.width(), c);
    let mut gw = FeatureMap::zeros(weights.height(), weights.width(), CANDIDATES);
    for y in 0..grid.pixel_height {
        for x in 0..grid.pixel_width {
            let go = grad_out.pixel(y, x);
            for s in 0..CANDIDATES {
                if let Some(i) = grid.slot_index(y, x, s) {
                    let w = weights.get(y, x, s);
                    let mut gws = 0.0;
                    for k in 0..c {
                        gy.data_mut()[i * c + k] += go[k] * w;
                        gws += go[k] * seeds.data()[i * c + k];
                    }
                    gw.set(y, x, s, gws);
                }
            }
        }
    }
    (gy, gw)
}

/// Weighted average of the pixels assigned to each seed.
pub fn sp_downsample(x: &FeatureMap, level: &AssignmentLevel) -> Result<Downsampled> {
    check_downsample(x, level.weights(), level.grid())?;
    let d = downsample_forward(x, level.weights(), level.grid());
    if d.empty_seeds > 0 {
        log::debug!("{} seeds received no assignment mass", d.empty_seeds);
    }
    Ok(d)
}

/// Per-pixel mixture of candidate seed values.
pub fn sp_upsample(y: &FeatureMap, level: &AssignmentLevel) -> Result<FeatureMap> {
    check_upsample(y, level.weights(), level.grid())?;
    Ok(upsample_forward(y, level.weights(), level.grid()))
}

fn check_finest(x: &FeatureMap, pyramid: &AssignmentPyramid) -> Result<()> {
    if let Some(dims) = pyramid.finest_dims() {
        if (x.height(), x.width()) != dims {
            return Err(shape_err!(
                "{}x{} map does not match a pyramid over {}x{} pixels",
                x.height(),
                x.width(),
                dims.0,
                dims.1
            ));
        }
    }
    Ok(())
}

/// Downsamples through every level, finest to coarsest, then upsamples back.
pub fn q_pool(x: &FeatureMap, pyramid: &AssignmentPyramid) -> Result<FeatureMap> {
    check_finest(x, pyramid)?;
    let mut cur = x.clone();
    for level in pyramid.levels() {
        cur = sp_downsample(&cur, level)?.seeds;
    }
    for level in pyramid.levels().iter().rev() {
        cur = sp_upsample(&cur, level)?;
    }
    Ok(cur)
}

/// Upsamples coarse class scores to full resolution through every level.
pub fn decode(coarse: &FeatureMap, pyramid: &AssignmentPyramid) -> Result<FeatureMap> {
    if let Some(dims) = pyramid.coarsest_seed_dims() {
        if (coarse.height(), coarse.width()) != dims {
            return Err(shape_err!(
                "{}x{} scores do not match the {}x{} coarsest seed grid",
                coarse.height(),
                coarse.width(),
                dims.0,
                dims.1
            ));
        }
    }
    let mut cur = coarse.clone();
    for level in pyramid.levels().iter().rev() {
        cur = sp_upsample(&cur, level)?;
    }
    Ok(cur)
}
