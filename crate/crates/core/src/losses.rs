//! Masked cross-entropy, the SLIC regularizer, the compactness term and the
//! total loss.

use serde::{Deserialize, Serialize};

use crate::color::srgb_to_cielab;
use crate::error::{shape_err, Error, Result};
use crate::labels::{LabelMap, UNLABELED};
use crate::pooling::q_pool;
use crate::superpixel::AssignmentPyramid;
use crate::tensor::FeatureMap;

/// Smoothing inside the residual norm: `sqrt(|v|² + δ) − sqrt(δ)`.
pub const NORM_SMOOTHING: f64 = 1e-12;

/// How a per-pixel residual vector is reduced to a scalar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualNorm {
    /// Smoothed Euclidean norm.
    #[default]
    Euclidean,
    /// Squared Euclidean norm.
    Squared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Regularization strength.
    pub lambda: f64,
    /// Compactness weight inside the regularizer.
    pub m: f64,
    pub class_count: usize,
    pub norm: ResidualNorm,
}

impl LossConfig {
    pub fn new(lambda: f64, m: f64, class_count: usize) -> Result<Self> {
        let cfg = Self {
            lambda,
            m,
            class_count,
            norm: ResidualNorm::Euclidean,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Parameter(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.m.is_finite() && self.m >= 0.0) {
            return Err(Error::Parameter(format!("m must be finite and >= 0, got {}", self.m)));
        }
        Ok(())
    }
}

pub(crate) fn pixel_norm_forward(v: &FeatureMap, norm: ResidualNorm) -> FeatureMap {
    let c = v.channels();
    let data = v
        .data()
        .chunks(c.max(1))
        .map(|p| {
            let sq: f64 = p.iter().map(|t| t * t).sum();
            match norm {
                ResidualNorm::Euclidean => (sq + NORM_SMOOTHING).sqrt() - NORM_SMOOTHING.sqrt(),
                ResidualNorm::Squared => sq,
            }
        })
        .collect();
    FeatureMap::from_vec(v.height(), v.width(), 1, data).expect("one value per pixel")
}

pub(crate) fn pixel_norm_backward(v: &FeatureMap, norm: ResidualNorm, grad_out: &FeatureMap) -> FeatureMap {
    let c = v.channels();
    let mut g = FeatureMap::zeros(v.height(), v.width(), c);
    for ((gp, p), &go) in g.data_mut().chunks_mut(c).zip(v.data().chunks(c)).zip(grad_out.data()) {
        let scale = match norm {
            ResidualNorm::Euclidean => {
                let sq: f64 = p.iter().map(|t| t * t).sum();
                go / (sq + NORM_SMOOTHING).sqrt()
            }
            ResidualNorm::Squared => 2.0 * go,
        };
        for k in 0..c {
            gp[k] = scale * p[k];
        }
    }
    g
}

pub(crate) fn check_ce(logits: &FeatureMap, labels: &LabelMap) -> Result<()> {
    if (logits.height(), logits.width()) != labels.dims() {
        return Err(shape_err!(
            "{}x{} logits for a {}x{} label map",
            logits.height(),
            logits.width(),
            labels.height(),
            labels.width()
        ));
    }
    labels.validate_classes(logits.channels())
}

/// Returns the loss and the number of labeled pixels.
pub(crate) fn masked_ce_forward(logits: &FeatureMap, labels: &LabelMap) -> (f64, usize) {
    let c = logits.channels();
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, &label) in logits.data().chunks(c).zip(labels.ids()) {
        if label == UNLABELED as u32 {
            continue;
        }
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = p.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        total += lse - p[label as usize];
        count += 1;
    }
    if count == 0 {
        (0.0, 0)
    } else {
        (total / count as f64, count)
    }
}

pub(crate) fn masked_ce_backward(logits: &FeatureMap, labels: &LabelMap, grad_out: f64) -> FeatureMap {
    let c = logits.channels();
    let count = labels.ids().iter().filter(|&&l| l != UNLABELED as u32).count();
    let mut g = FeatureMap::zeros(logits.height(), logits.width(), c);
    if count == 0 {
        return g;
    }
    let scale = grad_out / count as f64;
    for ((gp, p), &label) in g.data_mut().chunks_mut(c).zip(logits.data().chunks(c)).zip(labels.ids()) {
        if label == UNLABELED as u32 {
            continue;
        }
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = p.iter().map(|v| (v - max).exp()).sum();
        for k in 0..c {
            gp[k] = scale * (p[k] - max).exp() / z;
        }
        gp[label as usize] -= scale;
    }
    g
}

/// Mean negative log-softmax of the true class over labeled pixels; 0 when
/// nothing is labeled.
pub fn masked_cross_entropy(logits: &FeatureMap, labels: &LabelMap) -> Result<f64> {
    check_ce(logits, labels)?;
    Ok(masked_ce_forward(logits, labels).0)
}

/// Mean per-pixel residual between a feature map and its superpixel average.
pub fn pooled_residual(features: &FeatureMap, pyramid: &AssignmentPyramid, norm: ResidualNorm) -> Result<f64> {
    let q = q_pool(features, pyramid)?;
    let mut diff = features.clone();
    for (d, v) in diff.data_mut().iter_mut().zip(q.data()) {
        *d -= v;
    }
    Ok(pixel_norm_forward(&diff, norm).mean())
}

/// SLIC regularizer: mean distance between each pixel's CIELAB colour and
/// the average colour of its superpixels. `image` is sRGB in `[0, 1]`.
pub fn slic_loss(image: &FeatureMap, pyramid: &AssignmentPyramid) -> Result<f64> {
    slic_loss_with(image, pyramid, ResidualNorm::Euclidean)
}

pub fn slic_loss_with(image: &FeatureMap, pyramid: &AssignmentPyramid, norm: ResidualNorm) -> Result<f64> {
    pooled_residual(&srgb_to_cielab(image)?, pyramid, norm)
}

/// Mean distance between each pixel position and the average position of
/// its superpixels.
pub fn compactness_term(pyramid: &AssignmentPyramid, height: usize, width: usize) -> Result<f64> {
    pooled_residual(&FeatureMap::coordinates(height, width), pyramid, ResidualNorm::Euclidean)
}

/// `ce + λ·(slic + m·compact)`.
pub fn total_loss(ce: f64, slic: f64, compact: f64, config: &LossConfig) -> f64 {
    if config.m == 0.0 {
        ce + config.lambda * slic
    } else {
        ce + config.lambda * (slic + config.m * compact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superpixel::{AssignmentLevel, SeedGrid};

    #[test]
    fn confident_logits_have_vanishing_loss() {
        let labels = LabelMap::from_vec(1, 2, vec![0, 1]).unwrap();
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 50.0] {
            let logits = FeatureMap::from_vec(1, 2, 2, vec![margin, 0.0, 0.0, margin]).unwrap();
            let l = masked_cross_entropy(&logits, &labels).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn all_unlabeled_is_zero_with_zero_gradient() {
        let labels = LabelMap::unlabeled(2, 2);
        let logits = FeatureMap::from_fn(2, 2, 3, |y, x, c| (y + 2 * x + c) as f64);
        assert_eq!(masked_cross_entropy(&logits, &labels).unwrap(), 0.0);
        assert!(masked_ce_backward(&logits, &labels, 1.0).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_two_by_two() {
        let logits = FeatureMap::from_vec(2, 2, 2, vec![1.0, 0.0, 0.5, 2.0, -1.0, 1.0, 3.0, 3.0]).unwrap();
        let labels = LabelMap::from_vec(2, 2, vec![0, 1, UNLABELED as u32, 1]).unwrap();
        let nll = |a: f64, b: f64, t: usize| {
            let lse = (a.exp() + b.exp()).ln();
            lse - if t == 0 { a } else { b }
        };
        let expected = (nll(1.0, 0.0, 0) + nll(0.5, 2.0, 1) + nll(3.0, 3.0, 1)) / 3.0;
        assert!((masked_cross_entropy(&logits, &labels).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn invalid_label_is_data_error() {
        let logits = FeatureMap::zeros(1, 1, 2);
        let labels = LabelMap::from_vec(1, 1, vec![2]).unwrap();
        assert!(matches!(masked_cross_entropy(&logits, &labels), Err(Error::Data(_))));
    }

    #[test]
    fn shift_invariance() {
        let logits = FeatureMap::from_fn(3, 3, 4, |y, x, c| ((y * 5 + x * 3 + c * 7) % 11) as f64 * 0.3);
        let labels = LabelMap::from_fn(3, 3, |y, x| ((y + x) % 4) as u32);
        let a = masked_cross_entropy(&logits, &labels).unwrap();
        let b = masked_cross_entropy(&logits.map(|v| v + 17.5), &labels).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    fn two_tone_blocks() -> FeatureMap {
        FeatureMap::from_fn(4, 4, 3, |y, _, c| if y < 2 { [0.9, 0.2, 0.1][c] } else { [0.1, 0.3, 0.8][c] })
    }

    #[test]
    fn slic_loss_zero_cases() {
        let constant = FeatureMap::filled(8, 8, 3, 0.3);
        let g = SeedGrid::for_level(8, 8);
        let weights = FeatureMap::from_fn(8, 8, 9, |y, x, s| {
            if g.slot_seed(y, x, s).is_some() {
                1.0 + ((y * 3 + x * 5 + s) % 7) as f64
            } else {
                0.0
            }
        });
        let sums: Vec<f64> = weights.data().chunks(9).map(|p| p.iter().sum()).collect();
        let weights = FeatureMap::from_fn(8, 8, 9, |y, x, s| weights.get(y, x, s) / sums[y * 8 + x]);
        let pyr = AssignmentPyramid::new(vec![AssignmentLevel::new(g, weights).unwrap()]).unwrap();
        assert!(slic_loss(&constant, &pyr).unwrap().abs() < 1e-10);
        let blocks = AssignmentPyramid::blocks(4, 4, 1);
        assert!(slic_loss(&two_tone_blocks(), &blocks).unwrap().abs() < 1e-10);
    }

    #[test]
    fn mixed_block_contribution() {
        // Top-left 2x2 block mixes colours a (left column) and b (right column).
        let a = [0.9, 0.1, 0.1];
        let b = [0.1, 0.1, 0.9];
        let img = FeatureMap::from_fn(4, 4, 3, |y, x, c| if y < 2 && x == 0 { a[c] } else if y < 2 && x == 1 { b[c] } else { 0.5 });
        let lab = srgb_to_cielab(&img).unwrap();
        let la = lab.pixel(0, 0);
        let lb = lab.pixel(0, 1);
        let half_sq: f64 = la.iter().zip(lb).map(|(u, v)| ((u - v) / 2.0).powi(2)).sum();
        let smoothed = (half_sq + NORM_SMOOTHING).sqrt() - NORM_SMOOTHING.sqrt();
        let expected = 4.0 * smoothed / 16.0;
        let got = slic_loss(&img, &AssignmentPyramid::blocks(4, 4, 1)).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn compactness_values() {
        assert_eq!(compactness_term(&AssignmentPyramid::default(), 4, 4).unwrap(), 0.0);
        let v = compactness_term(&AssignmentPyramid::blocks(8, 8, 1), 8, 8).unwrap();
        // Within the 1e-6 offset introduced by norm smoothing.
        assert!((v - 2f64.sqrt() / 2.0).abs() < 2e-6);
    }

    #[test]
    fn total_loss_arithmetic() {
        let cfg = LossConfig::new(0.0, 0.0, 2).unwrap();
        assert_eq!(total_loss(0.3, 5.0, 2.0, &cfg), 0.3);
        let cfg = LossConfig::new(0.075, 0.0, 2).unwrap();
        assert_eq!(total_loss(0.3, 2.0, 9.0, &cfg), 0.3 + 0.075 * 2.0);
        let cfg = LossConfig::new(1.0, 1.0, 2).unwrap();
        assert!((total_loss(0.5, 0.25, 0.1, &cfg) - 0.85).abs() < 1e-15);
        assert!(LossConfig::new(-1.0, 0.0, 2).is_err());
        assert!(LossConfig::new(1.0, f64::NAN, 2).is_err());
    }
}
