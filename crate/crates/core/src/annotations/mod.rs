//! Coarse-annotation synthesis: per-class erosion, contour tracing,
//! polygon simplification and rasterization.

mod contour;
mod erode;
mod raster;
mod simplify;

pub use contour::trace_contours;
pub use erode::{erode_mask, squared_distance_to_unset};
pub use raster::{paint, polygon_pixels, rasterize, FillRule};
pub use simplify::{douglas_peucker, douglas_peucker_closed, segment_distance, signed_area, Point};

use crate::error::{Error, Result};
use crate::labels::{LabelMap, UNLABELED};
use crate::metrics::PixelSet;
use crate::superpixel::components;

/// Default Douglas–Peucker tolerance in pixels.
pub const DEFAULT_EPSILON: f64 = 2.0;

/// A closed polygon carrying a class id. The last vertex connects back to the
/// first.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub class_id: u32,
    vertices: Vec<Point>,
}

impl Polygon {
    /// Drops repeated consecutive vertices; fails with fewer than three left.
    pub fn new(class_id: u32, vertices: Vec<Point>) -> Result<Self> {
        let mut v: Vec<Point> = Vec::with_capacity(vertices.len());
        for p in vertices {
            if v.last() != Some(&p) {
                v.push(p);
            }
        }
        while v.len() > 1 && v.first() == v.last() {
            v.pop();
        }
        if v.len() < 3 {
            return Err(Error::Geometry(format!("polygon needs 3 distinct vertices, got {}", v.len())));
        }
        Ok(Self { class_id, vertices: v })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }
}

/// Binary mask of the pixels carrying `class_id`.
pub fn class_mask(map: &LabelMap, class_id: u32) -> PixelSet {
    PixelSet::from_fn(map.height(), map.width(), |y, x| map.get(y, x) == class_id)
}

fn ring_polygon(contour: &[(usize, usize)], class_id: u32, epsilon: f64) -> Option<Polygon> {
    let ring: Vec<Point> = contour
        .iter()
        .map(|&(x, y)| (x as f64 + 0.5, y as f64 + 0.5))
        .collect();
    Polygon::new(class_id, douglas_peucker_closed(&ring, epsilon)).ok()
}

// Components of the complement of `mask` that do not touch the image border.
fn holes(mask: &PixelSet) -> PixelSet {
    let (h, w) = mask.dims();
    let keys: Vec<usize> = mask.bits().iter().map(|&b| b as usize).collect();
    let (comp, sizes) = components(h, w, &keys);
    let mut touches = vec![false; sizes.len()];
    for y in 0..h {
        for x in 0..w {
            if y == 0 || x == 0 || y + 1 == h || x + 1 == w {
                touches[comp[y * w + x]] = true;
            }
        }
    }
    PixelSet::from_fn(h, w, |y, x| {
        let i = y * w + x;
        keys[i] == 0 && !touches[comp[i]]
    })
}

/// Polygons approximating the eroded regions of every class, plus
/// `UNLABELED` polygons for the holes inside them.
pub fn coarse_polygons(fine: &LabelMap, radius: f64, epsilon: f64) -> Result<Vec<Polygon>> {
    if !(radius >= 0.0) || !(epsilon >= 0.0) {
        return Err(Error::Parameter(format!(
            "radius and epsilon must be non-negative, got {radius} and {epsilon}"
        )));
    }
    let mut classes: Vec<u32> = fine.ids().iter().copied().filter(|&c| c != UNLABELED as u32).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut polygons = Vec::new();
    for class in classes {
        let eroded = erode_mask(&class_mask(fine, class), radius);
        for c in trace_contours(&eroded) {
            polygons.extend(ring_polygon(&c, class, epsilon));
        }
        for c in trace_contours(&holes(&eroded)) {
            polygons.extend(ring_polygon(&c, UNLABELED as u32, epsilon));
        }
    }
    Ok(polygons)
}

/// Coarse annotation of `fine`: every class is eroded by `radius`, traced,
/// simplified with tolerance `epsilon` and drawn back. Larger polygons are
/// drawn first, so nested regions and holes stay visible; pixels no polygon
/// covers are `UNLABELED`.
pub fn coarsen(fine: &LabelMap, radius: f64, epsilon: f64) -> Result<LabelMap> {
    let mut polygons = coarse_polygons(fine, radius, epsilon)?;
    // Holes go before class polygons of the same area.
    polygons.sort_by(|a, b| {
        b.area()
            .total_cmp(&a.area())
            .then_with(|| (a.class_id != UNLABELED as u32).cmp(&(b.class_id != UNLABELED as u32)))
    });
    let out = rasterize(&polygons, fine.height(), fine.width(), FillRule::Inclusive);
    if fine.height() * fine.width() > 0 && out.unlabeled_fraction() == 1.0 {
        log::warn!("erosion radius {radius} removed every region; coarse map is fully unlabeled");
    }
    Ok(out)
}

/// Fraction of labeled pixels in `coarse` that carry the same id in `fine`.
pub fn labeled_agreement(coarse: &LabelMap, fine: &LabelMap) -> Result<Option<f64>> {
    coarse.ensure_same_dims(fine)?;
    let (mut labeled, mut agree) = (0usize, 0usize);
    for (&c, &f) in coarse.ids().iter().zip(fine.ids()) {
        if c != UNLABELED as u32 {
            labeled += 1;
            agree += (c == f) as usize;
        }
    }
    Ok((labeled > 0).then(|| agree as f64 / labeled as f64))
}
