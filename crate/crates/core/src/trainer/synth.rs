use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::annotations::{polygon_pixels, FillRule, Point};
use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::tensor::FeatureMap;

/// Standard deviation of the additive pixel noise.
pub const NOISE_SIGMA: f64 = 0.02;

/// An sRGB image in `[0, 1]` with its label map.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: FeatureMap,
    pub labels: LabelMap,
}

const PALETTE: [[f64; 3]; 8] = [
    [0.15, 0.20, 0.25],
    [0.85, 0.20, 0.15],
    [0.20, 0.70, 0.25],
    [0.20, 0.35, 0.85],
    [0.90, 0.80, 0.20],
    [0.70, 0.30, 0.75],
    [0.25, 0.80, 0.80],
    [0.95, 0.60, 0.35],
];

/// Flat colour of every class; the first eight are hand-picked, the rest
/// drawn from a fixed stream.
pub fn class_colors(classes: usize) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..classes)
        .map(|c| match PALETTE.get(c) {
            Some(&p) => p,
            None => [rng.random(), rng.random(), rng.random()],
        })
        .collect()
}

fn add_noise(image: &mut FeatureMap, rng: &mut ChaCha8Rng) {
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    for v in image.data_mut() {
        *v = (*v + noise.sample(rng)).clamp(0.0, 1.0);
    }
}

fn paint_image(labels: &LabelMap, colors: &[[f64; 3]]) -> FeatureMap {
    FeatureMap::from_fn(labels.height(), labels.width(), 3, |y, x, c| colors[labels.get(y, x) as usize][c])
}

// Convex polygon: points on a rotated ellipse at sorted random angles.
fn random_convex(rng: &mut ChaCha8Rng, height: usize, width: usize) -> Vec<Point> {
    let s = height.min(width) as f64;
    let (cx, cy) = (rng.random_range(0.2..0.8) * width as f64, rng.random_range(0.2..0.8) * height as f64);
    let (ra, rb) = (rng.random_range(0.12..0.35) * s, rng.random_range(0.12..0.35) * s);
    let rot: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let n = rng.random_range(3..=8);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles
        .into_iter()
        .map(|a| {
            let (ex, ey) = (ra * a.cos(), rb * a.sin());
            (cx + ex * rot.cos() - ey * rot.sin(), cy + ex * rot.sin() + ey * rot.cos())
        })
        .collect()
}

/// `count` images of a random background class with one to four convex
/// polygons of other classes drawn on top, each class in its flat colour plus
/// Gaussian noise. Labels are the exact rasterization.
pub fn synth_dataset(count: usize, height: usize, width: usize, classes: usize, seed: u64) -> Result<Vec<Sample>> {
    if !(2..=255).contains(&classes) {
        return Err(Error::Parameter(format!("class count must be in 2..=255, got {classes}")));
    }
    if height == 0 || width == 0 {
        return Err(Error::Parameter("image size must be non-zero".into()));
    }
    let colors = class_colors(classes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let background = rng.random_range(0..classes as u32);
        let mut labels = LabelMap::filled(height, width, background);
        for _ in 0..rng.random_range(1..=4) {
            let mut class = rng.random_range(0..classes as u32 - 1);
            if class >= background {
                class += 1;
            }
            let poly = random_convex(&mut rng, height, width);
            for (x, y) in polygon_pixels(&poly, height, width, FillRule::HalfOpen) {
                labels.set(y, x, class);
            }
        }
        let mut image = paint_image(&labels, &colors);
        add_noise(&mut image, &mut rng);
        out.push(Sample { image, labels });
    }
    Ok(out)
}

/// Red/blue image split by a random line through the central region, with
/// noise. Labels are 0 on the red side and 1 on the blue side.
pub fn two_tone(size: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (nx, ny) = (angle.cos(), angle.sin());
    let c = size as f64 / 2.0;
    let offset = rng.random_range(-0.2..0.2) * size as f64;
    let labels = LabelMap::from_fn(size, size, |y, x| {
        let d = (x as f64 + 0.5 - c) * nx + (y as f64 + 0.5 - c) * ny - offset;
        (d >= 0.0) as u32
    });
    let mut image = paint_image(&labels, &[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
    add_noise(&mut image, &mut rng);
    Sample { image, labels }
}
