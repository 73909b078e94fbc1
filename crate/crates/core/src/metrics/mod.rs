//! Pixel accuracy, boundary recall and run comparison.
//!
//! Pixel accuracy counts matches over pixels whose ground truth is labeled;
//! predictions of [`UNLABELED`](crate::UNLABELED) count as misses.
//!
//! Boundary recall follows
//!
//! ```text
//! BR(ŷ, y) = n(b(ŷ,0) ∩ b(y,r)) / ( n(b(ŷ,0) ∩ b(y,r)) + n(b(y,0) − b(ŷ,r)) )
//! ```
//!
//! where `b(m, r)` is the set of pixels within a `(2r+1)×(2r+1)` window of a
//! boundary pixel of `m`. A boundary pixel has a 4-neighbour with another id;
//! `UNLABELED` is treated as an ordinary id. The more common definition
//! (`n(b(y,0) ∩ b(ŷ,r)) / n(b(y,0))`) is available as
//! [`BoundaryRecallVariant::Standard`].

mod mann_whitney;

pub use mann_whitney::{mann_whitney_one_sided, mann_whitney_u, MannWhitney};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelMap, UNLABELED};

/// Boolean pixel set over an image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelSet {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl PixelSet {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_points(height: usize, width: usize, points: &[(usize, usize)]) -> Self {
        let mut s = Self::empty(height, width);
        for &(y, x) in points {
            s.insert(y, x);
        }
        s
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn insert(&mut self, y: usize, x: usize) {
        self.bits[y * self.width + x] = true;
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut s = Self::empty(height, width);
        for y in 0..height {
            for x in 0..width {
                s.bits[y * width + x] = f(y, x);
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count()
    }

    /// `n(self − other)`.
    pub fn difference_count(&self, other: &Self) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && !**b).count()
    }
}

/// Fraction of labeled ground-truth pixels predicted correctly.
pub fn pixel_accuracy(pred: &LabelMap, truth: &LabelMap) -> Result<f64> {
    let (matches, evaluated) = accuracy_counts(pred, truth)?;
    if evaluated == 0 {
        return Err(Error::Data("pixel accuracy is undefined: no labeled pixel".into()));
    }
    Ok(matches as f64 / evaluated as f64)
}

/// `(matches, evaluated)` behind [`pixel_accuracy`].
pub fn accuracy_counts(pred: &LabelMap, truth: &LabelMap) -> Result<(usize, usize)> {
    pred.ensure_same_dims(truth)?;
    let un = UNLABELED as u32;
    let mut matches = 0;
    let mut evaluated = 0;
    for (&p, &t) in pred.ids().iter().zip(truth.ids()) {
        if t == un {
            continue;
        }
        evaluated += 1;
        if p == t {
            matches += 1;
        }
    }
    Ok((matches, evaluated))
}

/// Pixels with at least one 4-neighbour of a different id.
pub fn boundary_pixels(map: &LabelMap) -> PixelSet {
    let (h, w) = map.dims();
    let mut s = PixelSet::empty(h, w);
    for y in 0..h {
        for x in 0..w {
            let v = map.get(y, x);
            if x + 1 < w && map.get(y, x + 1) != v {
                s.insert(y, x);
                s.insert(y, x + 1);
            }
            if y + 1 < h && map.get(y + 1, x) != v {
                s.insert(y, x);
                s.insert(y + 1, x);
            }
        }
    }
    s
}

/// Union of the clipped `(2r+1)×(2r+1)` squares centred on the members.
pub fn dilate_set(set: &PixelSet, r: usize) -> PixelSet {
    if r == 0 {
        return set.clone();
    }
    let (h, w) = set.dims();
    // Separable: horizontal then vertical running windows.
    let mut horiz = PixelSet::empty(h, w);
    for y in 0..h {
        let mut last: Option<usize> = None;
        // distance to nearest member on the left, then on the right
        for x in 0..w {
            if set.contains(y, x) {
                last = Some(x);
            }
            if matches!(last, Some(l) if x - l <= r) {
                horiz.insert(y, x);
            }
        }
        let mut next: Option<usize> = None;
        for x in (0..w).rev() {
            if set.contains(y, x) {
                next = Some(x);
            }
            if matches!(next, Some(n) if n - x <= r) {
                horiz.insert(y, x);
            }
        }
    }
    let mut out = PixelSet::empty(h, w);
    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if horiz.contains(y, x) {
                last = Some(y);
            }
            if matches!(last, Some(l) if y - l <= r) {
                out.insert(y, x);
            }
        }
        let mut next: Option<usize> = None;
        for y in (0..h).rev() {
            if horiz.contains(y, x) {
                next = Some(y);
            }
            if matches!(next, Some(n) if n - y <= r) {
                out.insert(y, x);
            }
        }
    }
    out
}

/// Neighbourhood radius used by boundary recall.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Radius {
    /// `round(0.0025 · diagonal)`.
    Auto,
    Pixels(usize),
}

impl Radius {
    pub fn resolve(self, height: usize, width: usize) -> usize {
        match self {
            Radius::Pixels(r) => r,
            Radius::Auto => auto_radius(height, width),
        }
    }
}

impl std::fmt::Display for Radius {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Radius::Auto => f.write_str("AUTO"),
            Radius::Pixels(r) => write!(f, "{r}"),
        }
    }
}

impl std::str::FromStr for Radius {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Radius::Auto);
        }
        s.parse::<usize>()
            .map(Radius::Pixels)
            .map_err(|_| Error::Parameter(format!("radius must be AUTO or a non-negative integer, got {s:?}")))
    }
}

/// `round(0.0025 · √(H² + W²))`.
pub fn auto_radius(height: usize, width: usize) -> usize {
    let diag = ((height * height + width * width) as f64).sqrt();
    (0.0025 * diag).round() as usize
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryRecallVariant {
    /// The formula in the module docs.
    #[default]
    Verbatim,
    /// `n(b(y,0) ∩ b(ŷ,r)) / n(b(y,0))`.
    Standard,
}

/// Set counts behind boundary recall.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryCounts {
    /// `n(b(ŷ,0) ∩ b(y,r))`
    pub pred_near_truth: usize,
    /// `n(b(y,0) − b(ŷ,r))`
    pub truth_missed: usize,
    /// `n(b(y,0))`
    pub truth_boundary: usize,
    pub r: usize,
}

pub fn boundary_counts(pred: &LabelMap, truth: &LabelMap, r: Radius) -> Result<BoundaryCounts> {
    pred.ensure_same_dims(truth)?;
    let r = r.resolve(truth.height(), truth.width());
    let bp = boundary_pixels(pred);
    let bt = boundary_pixels(truth);
    let bt_r = dilate_set(&bt, r);
    let bp_r = dilate_set(&bp, r);
    Ok(BoundaryCounts {
        pred_near_truth: bp.intersection_count(&bt_r),
        truth_missed: bt.difference_count(&bp_r),
        truth_boundary: bt.len(),
        r,
    })
}

pub fn boundary_recall(pred: &LabelMap, truth: &LabelMap, r: Radius) -> Result<f64> {
    boundary_recall_variant(pred, truth, r, BoundaryRecallVariant::Verbatim)
}

pub fn boundary_recall_variant(
    pred: &LabelMap,
    truth: &LabelMap,
    r: Radius,
    variant: BoundaryRecallVariant,
) -> Result<f64> {
    let c = boundary_counts(pred, truth, r)?;
    if c.truth_boundary == 0 {
        return Err(Error::Data("boundary recall is undefined: ground truth has no boundary".into()));
    }
    Ok(match variant {
        BoundaryRecallVariant::Verbatim => {
            let den = c.pred_near_truth + c.truth_missed;
            if den == 0 {
                // unreachable while truth has a boundary
                0.0
            } else {
                c.pred_near_truth as f64 / den as f64
            }
        }
        BoundaryRecallVariant::Standard => {
            (c.truth_boundary - c.truth_missed) as f64 / c.truth_boundary as f64
        }
    })
}

/// Metrics of one prediction/ground-truth pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pixel_accuracy: f64,
    pub boundary_recall: f64,
    pub r_used: usize,
    pub evaluated_pixels: usize,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_hash: Option<String>,
}

impl MetricsReport {
    pub fn evaluate(pred: &LabelMap, truth: &LabelMap, r: Radius) -> Result<Self> {
        let (_, evaluated) = accuracy_counts(pred, truth)?;
        let counts = boundary_counts(pred, truth, r)?;
        Ok(Self {
            pixel_accuracy: pixel_accuracy(pred, truth)?,
            boundary_recall: boundary_recall(pred, truth, Radius::Pixels(counts.r))?,
            r_used: counts.r,
            evaluated_pixels: evaluated,
            seed: None,
            config_hash: None,
        })
    }
}
