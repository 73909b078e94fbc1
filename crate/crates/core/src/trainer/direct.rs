use crate::color::srgb_to_cielab;
use crate::error::{Error, Result};
use crate::losses::ResidualNorm;
use crate::superpixel::{AssignmentPyramid, SeedGrid, CANDIDATES};
use crate::tape::{Tape, TapePyramid};
use crate::tensor::FeatureMap;

use super::adam::{Adam, Params};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectFitConfig {
    pub levels: usize,
    /// Compactness weight.
    pub m: f64,
    pub steps: usize,
    pub lr: f64,
    /// Recorded with the run; the zero initialization draws no randomness.
    pub seed: u64,
}

impl Default for DirectFitConfig {
    fn default() -> Self {
        Self {
            levels: 1,
            m: 0.0,
            steps: 300,
            lr: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectFit {
    pub pyramid: AssignmentPyramid,
    /// Objective before every update, followed by the final value.
    pub losses: Vec<f64>,
}

fn grids(height: usize, width: usize, levels: usize) -> Vec<SeedGrid> {
    let mut out = Vec::with_capacity(levels);
    let (mut h, mut w) = (height, width);
    for _ in 0..levels {
        let g = SeedGrid::for_level(h, w);
        (h, w) = (g.seed_height, g.seed_width);
        out.push(g);
    }
    out
}

// SLIC loss plus m times the compactness term, on a fresh tape.
fn objective(lab: &FeatureMap, coords: &FeatureMap, grids: &[SeedGrid], params: &Params, m: f64) -> Result<(Tape, TapePyramid, crate::tape::NodeId)> {
    let mut tape = Tape::new();
    let mut pyramid = TapePyramid::new();
    for (grid, (name, logits)) in grids.iter().zip(params) {
        let id = tape.parameter(name.clone(), logits.clone());
        let w = tape.softmax_candidates(id, grid)?;
        pyramid.push(*grid, w);
    }
    let x = tape.constant(lab.clone());
    let mut loss = tape.pooled_residual(x, &pyramid, ResidualNorm::Euclidean)?;
    if m != 0.0 {
        let c = tape.constant(coords.clone());
        let compact = tape.pooled_residual(c, &pyramid, ResidualNorm::Euclidean)?;
        let scaled = tape.scale(compact, m);
        loss = tape.add(loss, scaled)?;
    }
    Ok((tape, pyramid, loss))
}

/// Optimizes free assignment logits of a `levels`-deep pyramid over `image`
/// (sRGB in `[0, 1]`) so that superpixels become colour-coherent.
pub fn direct_fit(image: &FeatureMap, config: &DirectFitConfig) -> Result<DirectFit> {
    if config.steps == 0 {
        return Err(Error::Parameter("direct fit needs at least one step".into()));
    }
    if config.levels == 0 {
        return Err(Error::Parameter("direct fit needs at least one level".into()));
    }
    if !(config.m >= 0.0 && config.m.is_finite()) {
        return Err(Error::Parameter(format!("m must be finite and >= 0, got {}", config.m)));
    }
    let lab = srgb_to_cielab(image)?;
    let coords = FeatureMap::coordinates(image.height(), image.width());
    let grids = grids(image.height(), image.width(), config.levels);
    let mut params: Params = grids
        .iter()
        .enumerate()
        .map(|(l, g)| (format!("level{l}"), FeatureMap::zeros(g.pixel_height, g.pixel_width, CANDIDATES)))
        .collect();
    let mut opt = Adam::new(config.lr)?;
    let mut losses = Vec::with_capacity(config.steps + 1);
    for step in 0..=config.steps {
        let (tape, pyramid, loss) = objective(&lab, &coords, &grids, &params, config.m)?;
        let value = tape.scalar(loss)?;
        if !value.is_finite() {
            return Err(Error::Numerical(format!("direct fit loss became {value} at step {step}")));
        }
        losses.push(value);
        if step == config.steps {
            return Ok(DirectFit {
                pyramid: pyramid.to_pyramid(&tape)?,
                losses,
            });
        }
        let grads = tape.backward(loss)?;
        opt.step(&mut params, &grads.into_params())?;
    }
    unreachable!("loop returns on the last step")
}
