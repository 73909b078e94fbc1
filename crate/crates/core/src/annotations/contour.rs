use crate::metrics::PixelSet;

// Moore neighbourhood in clockwise order (image y axis points down),
// starting west. Offsets are (dx, dy).
const MOORE: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

/// Outer boundary of every 8-connected component of `mask`, traced clockwise
/// with Moore-neighbour tracing. Points are `(x, y)` pixel coordinates; each
/// contour starts at the component's first pixel in raster order. Components
/// are returned in raster order of those pixels.
pub fn trace_contours(mask: &PixelSet) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = mask.dims();
    let (comp, starts) = components8(mask);
    starts
        .iter()
        .enumerate()
        .map(|(c, &s)| trace_one(h, w, &comp, c, s))
        .collect()
}

/// 8-connected component id per set pixel (`usize::MAX` elsewhere) and the
/// raster-first pixel of each component.
fn components8(mask: &PixelSet) -> (Vec<usize>, Vec<usize>) {
    let (h, w) = mask.dims();
    let bits = mask.bits();
    let mut comp = vec![usize::MAX; h * w];
    let mut starts = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !bits[start] || comp[start] != usize::MAX {
            continue;
        }
        let id = starts.len();
        starts.push(start);
        comp[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            for (dx, dy) in MOORE {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if bits[j] && comp[j] == usize::MAX {
                    comp[j] = id;
                    stack.push(j);
                }
            }
        }
    }
    (comp, starts)
}

fn trace_one(h: usize, w: usize, comp: &[usize], id: usize, start: usize) -> Vec<(usize, usize)> {
    let inside = |(x, y): (i64, i64)| {
        x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && comp[y as usize * w + x as usize] == id
    };
    let s = ((start % w) as i64, (start / w) as i64);
    let mut out = vec![(s.0 as usize, s.1 as usize)];
    // The raster-first pixel is entered from the west.
    let (mut cur, mut back) = (s, (s.0 - 1, s.1));
    let mut second = None;
    // Each pixel is entered at most once per Moore direction.
    for _ in 0..8 * h * w {
        let rel = (back.0 - cur.0, back.1 - cur.1);
        let k0 = MOORE.iter().position(|&d| d == rel).expect("backtrack is a neighbour");
        let mut prev = back;
        let mut next = None;
        for k in 1..=8 {
            let (dx, dy) = MOORE[(k0 + k) % 8];
            let p = (cur.0 + dx, cur.1 + dy);
            if inside(p) {
                next = Some(p);
                break;
            }
            prev = p;
        }
        let Some(n) = next else {
            break; // isolated pixel
        };
        match second {
            None => second = Some(n),
            Some(first_move) if cur == s && n == first_move => {
                out.pop();
                break;
            }
            _ => {}
        }
        out.push((n.0 as usize, n.1 as usize));
        cur = n;
        back = prev;
    }
    out
}
