use crate::metrics::PixelSet;

const FAR: f64 = 1e20;

// 1-D squared distance transform of a sampled function (lower envelope of
// parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates from -inf
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        out[q] = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from every pixel to the nearest unset pixel,
/// treating everything outside the image as unset. Unset pixels get 0.
pub fn squared_distance_to_unset(mask: &PixelSet) -> Vec<f64> {
    let (h, w) = mask.dims();
    // One ring of unset padding stands in for the outside.
    let (ph, pw) = (h + 2, w + 2);
    let mut grid = vec![0.0; ph * pw];
    for y in 0..h {
        for x in 0..w {
            if mask.contains(y, x) {
                grid[(y + 1) * pw + x + 1] = FAR;
            }
        }
    }
    let n = ph.max(pw);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..pw {
        for y in 0..ph {
            f[y] = grid[y * pw + x];
        }
        edt_1d(&f[..ph], &mut out[..ph], &mut v, &mut z);
        for y in 0..ph {
            grid[y * pw + x] = out[y];
        }
    }
    for y in 0..ph {
        f[..pw].copy_from_slice(&grid[y * pw..(y + 1) * pw]);
        edt_1d(&f[..pw], &mut out[..pw], &mut v, &mut z);
        grid[y * pw..(y + 1) * pw].copy_from_slice(&out[..pw]);
    }
    let mut d = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            d.push(grid[(y + 1) * pw + x + 1]);
        }
    }
    d
}

/// Keeps a pixel iff its Euclidean distance to the nearest unset pixel
/// (outside counts as unset) exceeds `radius`.
pub fn erode_mask(mask: &PixelSet, radius: f64) -> PixelSet {
    if radius <= 0.0 {
        return mask.clone();
    }
    let (h, w) = mask.dims();
    let d = squared_distance_to_unset(mask);
    let r2 = radius * radius;
    PixelSet::from_fn(h, w, |y, x| d[y * w + x] > r2)
}
