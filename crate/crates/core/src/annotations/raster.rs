use super::simplify::{segment_distance, Point};
use super::Polygon;
use crate::labels::{LabelMap, UNLABELED};

/// Which pixels a polygon covers. Pixel `(x, y)` is sampled at its center
/// `(x + 0.5, y + 0.5)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FillRule {
    /// Even-odd scanline fill with half-open spans: centers strictly inside are
    /// filled, centers on an edge follow a top-left convention.
    #[default]
    HalfOpen,
    /// As `HalfOpen`, plus every pixel whose center lies on an edge.
    Inclusive,
}

const ON_EDGE: f64 = 1e-9;

/// Pixels covered by `ring` on a `height × width` grid, in raster order.
pub fn polygon_pixels(ring: &[Point], height: usize, width: usize, rule: FillRule) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if ring.len() < 2 || height == 0 || width == 0 {
        return out;
    }
    let n = ring.len();
    let mut xs = Vec::new();
    for y in 0..height {
        let yc = y as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if (a.1 <= yc && yc < b.1) || (b.1 <= yc && yc < a.1) {
                xs.push(a.0 + (yc - a.1) * (b.0 - a.0) / (b.1 - a.1));
            }
        }
        xs.sort_by(f64::total_cmp);
        let mut row = vec![false; width];
        for pair in xs.chunks_exact(2) {
            // centers with pair[0] <= xc < pair[1]
            let lo = (pair[0] - 0.5).ceil().max(0.0);
            let hi = (pair[1] - 0.5).ceil().min(width as f64);
            let mut x = lo;
            while x < hi {
                row[x as usize] = true;
                x += 1.0;
            }
        }
        if rule == FillRule::Inclusive {
            for (x, cell) in row.iter_mut().enumerate() {
                if !*cell {
                    let c = (x as f64 + 0.5, yc);
                    *cell = (0..n).any(|i| segment_distance(c, ring[i], ring[(i + 1) % n]) <= ON_EDGE);
                }
            }
        }
        out.extend(row.iter().enumerate().filter(|(_, &f)| f).map(|(x, _)| (x, y)));
    }
    out
}

/// Paints `class_id` into `map` over the pixels covered by `ring`.
pub fn paint(map: &mut LabelMap, ring: &[Point], class_id: u32, rule: FillRule) {
    for (x, y) in polygon_pixels(ring, map.height(), map.width(), rule) {
        map.set(y, x, class_id);
    }
}

/// Draws `polygons` in order onto an all-`UNLABELED` map; later polygons
/// overwrite earlier ones.
pub fn rasterize(polygons: &[Polygon], height: usize, width: usize, rule: FillRule) -> LabelMap {
    let mut map = LabelMap::filled(height, width, UNLABELED as u32);
    for p in polygons {
        paint(&mut map, p.vertices(), p.class_id, rule);
    }
    map
}
