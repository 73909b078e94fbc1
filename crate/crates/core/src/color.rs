//! sRGB (D65, 2° observer) to CIELAB.

use crate::error::{shape_err, Result};
use crate::tensor::FeatureMap;

/// A CIELAB colour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

// Reference white is the image of sRGB white under the matrix, so white lands
// exactly on L = 100, a = b = 0.
const WHITE: [f64; 3] = [
    SRGB_TO_XYZ[0][0] + SRGB_TO_XYZ[0][1] + SRGB_TO_XYZ[0][2],
    SRGB_TO_XYZ[1][0] + SRGB_TO_XYZ[1][1] + SRGB_TO_XYZ[1][2],
    SRGB_TO_XYZ[2][0] + SRGB_TO_XYZ[2][1] + SRGB_TO_XYZ[2][2],
];

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

#[inline]
fn linearize(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

impl LabColor {
    /// Converts gamma-encoded sRGB components in `[0, 1]`.
    pub fn from_srgb(r: f64, g: f64, b: f64) -> Self {
        let lin = [linearize(r), linearize(g), linearize(b)];
        let mut f = [0.0; 3];
        for i in 0..3 {
            let row = SRGB_TO_XYZ[i];
            let v = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
            f[i] = lab_f(v / WHITE[i]);
        }
        Self {
            l: 116.0 * f[1] - 16.0,
            a: 500.0 * (f[0] - f[1]),
            b: 200.0 * (f[1] - f[2]),
        }
    }
}

/// Per-pixel sRGB to CIELAB. Channels are `L, a, b`, unscaled.
pub fn srgb_to_cielab(image: &FeatureMap) -> Result<FeatureMap> {
    if image.channels() != 3 {
        return Err(shape_err!("sRGB image needs 3 channels, got {}", image.channels()));
    }
    let mut out = FeatureMap::zeros(image.height(), image.width(), 3);
    for (o, p) in out.data_mut().chunks_mut(3).zip(image.data().chunks(3)) {
        let lab = LabColor::from_srgb(p[0], p[1], p[2]);
        o[0] = lab.l;
        o[1] = lab.a;
        o[2] = lab.b;
    }
    Ok(out)
}
