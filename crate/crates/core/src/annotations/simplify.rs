/// A polygon or polyline vertex `(x, y)`.
pub type Point = (f64, f64);

/// Distance from `p` to the segment `a`–`b`.
pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Douglas–Peucker simplification of an open polyline. Endpoints are always
/// kept; an interior point survives iff it lies at least `epsilon` from the
/// chord of its recursion interval, so `epsilon = 0` keeps every point.
pub fn douglas_peucker(points: &[Point], epsilon: f64) -> Vec<Point> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0, points.len() - 1)];
    while let Some((i, j)) = stack.pop() {
        if j <= i + 1 {
            continue;
        }
        let (mut best, mut at) = (-1.0, i);
        for k in i + 1..j {
            let d = segment_distance(points[k], points[i], points[j]);
            if d > best {
                best = d;
                at = k;
            }
        }
        if best >= epsilon {
            keep[at] = true;
            stack.push((i, at));
            stack.push((at, j));
        }
    }
    points
        .iter()
        .zip(keep)
        .filter_map(|(&p, k)| k.then_some(p))
        .collect()
}

/// Simplifies a closed ring (no repeated closing vertex). The ring is split at
/// its two mutually farthest vertices and each half is simplified as an open
/// polyline.
pub fn douglas_peucker_closed(ring: &[Point], epsilon: f64) -> Vec<Point> {
    let n = ring.len();
    if n <= 3 {
        return ring.to_vec();
    }
    let (mut a, mut b, mut best) = (0, 0, -1.0);
    for i in 0..n {
        for j in i + 1..n {
            let d = (ring[i].0 - ring[j].0).powi(2) + (ring[i].1 - ring[j].1).powi(2);
            if d > best {
                best = d;
                a = i;
                b = j;
            }
        }
    }
    let first: Vec<Point> = ring[a..=b].to_vec();
    let second: Vec<Point> = ring[b..].iter().chain(&ring[..=a]).copied().collect();
    let mut out = douglas_peucker(&first, epsilon);
    out.pop();
    let mut rest = douglas_peucker(&second, epsilon);
    rest.pop();
    out.extend(rest);
    out
}

/// Signed shoelace area; positive for clockwise rings in image coordinates.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (ring[i], ring[(i + 1) % n]);
        s += p.0 * q.1 - q.0 * p.1;
    }
    s / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epsilon_keeps_everything() {
        let pts = vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (3.0, 5.0)];
        assert_eq!(douglas_peucker(&pts, 0.0), pts);
    }

    #[test]
    fn collinear_points_are_removed() {
        let pts: Vec<Point> = (0..10).map(|i| (i as f64, 2.0 * i as f64)).collect();
        assert_eq!(douglas_peucker(&pts, 0.1), vec![(0.0, 0.0), (9.0, 18.0)]);
    }

    #[test]
    fn far_point_is_kept() {
        let pts = vec![(0.0, 0.0), (1.0, 0.1), (2.0, 3.0), (3.0, 0.1), (4.0, 0.0)];
        assert_eq!(douglas_peucker(&pts, 1.0), vec![(0.0, 0.0), (2.0, 3.0), (4.0, 0.0)]);
    }

    #[test]
    fn closed_square_outline_reduces_to_corners() {
        let ring = vec![
            (0.0, 0.0),
            (1.0, 0.0),
            (2.0, 0.0),
            (2.0, 1.0),
            (2.0, 2.0),
            (1.0, 2.0),
            (0.0, 2.0),
            (0.0, 1.0),
        ];
        let s = douglas_peucker_closed(&ring, 0.5);
        assert_eq!(s.len(), 4);
        for c in [(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)] {
            assert!(s.contains(&c));
        }
        assert_eq!(douglas_peucker_closed(&ring, 0.0), ring);
    }

    #[test]
    fn area_sign_and_magnitude() {
        let cw = vec![(0.0, 0.0), (2.0, 0.0), (2.0, 3.0), (0.0, 3.0)];
        assert_eq!(signed_area(&cw), 6.0);
        let ccw: Vec<Point> = cw.iter().rev().copied().collect();
        assert_eq!(signed_area(&ccw), -6.0);
    }

    #[test]
    fn segment_distance_cases() {
        assert_eq!(segment_distance((1.0, 1.0), (0.0, 0.0), (2.0, 0.0)), 1.0);
        assert_eq!(segment_distance((3.0, 0.0), (0.0, 0.0), (2.0, 0.0)), 1.0);
        assert_eq!(segment_distance((0.0, 2.0), (0.0, 0.0), (0.0, 0.0)), 2.0);
    }
}
