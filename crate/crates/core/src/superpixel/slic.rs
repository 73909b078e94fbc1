//! Classic SLIC: k-means over `(L, a, b, y, x)` with a local search window,
//! followed by a connectivity pass.

use crate::color::srgb_to_cielab;
use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::tensor::FeatureMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlicParams {
    pub n_superpixels: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            n_superpixels: 100,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Center {
    lab: [f64; 3],
    y: f64,
    x: f64,
}

/// Runs SLIC on an sRGB image with values in `[0, 1]`. Ids of the result are
/// contiguous from zero and each superpixel is 4-connected.
pub fn slic(image: &FeatureMap, params: &SlicParams) -> Result<LabelMap> {
    let (h, w) = (image.height(), image.width());
    let n = params.n_superpixels;
    if n == 0 || n > h * w {
        return Err(Error::Parameter(format!(
            "cannot place {n} superpixels on a {h}x{w} image"
        )));
    }
    if params.iterations == 0 {
        return Err(Error::Parameter("SLIC needs at least one iteration".into()));
    }
    if !(params.compactness >= 0.0) {
        return Err(Error::Parameter(format!("invalid compactness {}", params.compactness)));
    }
    let lab = srgb_to_cielab(image)?;
    let step = ((h * w) as f64 / n as f64).sqrt();
    let rows = ((h as f64 / step).round() as usize).clamp(1, h.min(n));
    let cols = ((w as f64 / step).round() as usize).clamp(1, w).min(n / rows).max(1);

    let mut centers = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let cy = ((i as f64 + 0.5) * h as f64 / rows as f64) as usize;
            let cx = ((j as f64 + 0.5) * w as f64 / cols as f64) as usize;
            let (py, px) = lowest_gradient(&lab, cy.min(h - 1), cx.min(w - 1));
            let p = lab.pixel(py, px);
            centers.push(Center {
                lab: [p[0], p[1], p[2]],
                y: py as f64,
                x: px as f64,
            });
        }
    }

    // Start from the grid cell partition so pixels outside every window keep a label.
    let mut labels: Vec<usize> = (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            let r = (y * rows / h).min(rows - 1);
            let c = (x * cols / w).min(cols - 1);
            r * cols + c
        })
        .collect();
    let mut dist = vec![f64::INFINITY; h * w];
    let spatial = (params.compactness / step).powi(2);
    let radius = step.ceil() as isize;

    for _ in 0..params.iterations {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let y0 = (c.y.round() as isize - radius).max(0) as usize;
            let y1 = ((c.y.round() as isize + radius) as usize).min(h - 1);
            let x0 = (c.x.round() as isize - radius).max(0) as usize;
            let x1 = ((c.x.round() as isize + radius) as usize).min(w - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = lab.pixel(y, x);
                    let dl = p[0] - c.lab[0];
                    let da = p[1] - c.lab[1];
                    let db = p[2] - c.lab[2];
                    let dy = y as f64 - c.y;
                    let dx = x as f64 - c.x;
                    let d = dl * dl + da * da + db * db + spatial * (dy * dy + dx * dx);
                    let i = y * w + x;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = k;
                    }
                }
            }
        }
        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (i, &k) in labels.iter().enumerate() {
            let p = lab.pixel(i / w, i % w);
            let s = &mut sums[k];
            s[0] += p[0];
            s[1] += p[1];
            s[2] += p[2];
            s[3] += (i / w) as f64;
            s[4] += (i % w) as f64;
            s[5] += 1.0;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                *c = Center {
                    lab: [s[0] / s[5], s[1] / s[5], s[2] / s[5]],
                    y: s[3] / s[5],
                    x: s[4] / s[5],
                };
            }
        }
    }

    Ok(enforce_connectivity(h, w, &labels))
}

fn lowest_gradient(lab: &FeatureMap, cy: usize, cx: usize) -> (usize, usize) {
    let (h, w) = (lab.height(), lab.width());
    let grad = |y: usize, x: usize| {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
        let gx = d(lab.pixel(y, (x + 1).min(w - 1)), lab.pixel(y, x.saturating_sub(1)));
        let gy = d(lab.pixel((y + 1).min(h - 1), x), lab.pixel(y.saturating_sub(1), x));
        gx + gy
    };
    let mut best = (cy, cx);
    let mut best_g = grad(cy, cx);
    for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
        for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
            let g = grad(y, x);
            if g < best_g {
                best_g = g;
                best = (y, x);
            }
        }
    }
    best
}

/// 4-connected components of a labelling; component id per pixel and the
/// size of each component.
pub(crate) fn components(h: usize, w: usize, labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut comp = vec![usize::MAX; h * w];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let lbl = labels[start];
        comp[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (y, x) = (i / w, i % w);
            let mut visit = |j: usize| {
                if comp[j] == usize::MAX && labels[j] == lbl {
                    comp[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Keeps the largest component of every label and merges the other
/// components into the largest adjacent kept superpixel, then relabels ids
/// contiguously in raster order.
fn enforce_connectivity(h: usize, w: usize, labels: &[usize]) -> LabelMap {
    let (comp, sizes) = components(h, w, labels);
    let n_comp = sizes.len();
    let mut comp_label = vec![0usize; n_comp];
    for (i, &c) in comp.iter().enumerate() {
        comp_label[c] = labels[i];
    }
    // Largest component per label; ties go to the earlier component.
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut largest = vec![usize::MAX; max_label + 1];
    for c in 0..n_comp {
        let l = comp_label[c];
        if largest[l] == usize::MAX || sizes[c] > sizes[largest[l]] {
            largest[l] = c;
        }
    }
    // owner[c]: kept component that c has been merged into.
    let mut owner: Vec<Option<usize>> = (0..n_comp)
        .map(|c| (largest[comp_label[c]] == c).then_some(c))
        .collect();
    let mut kept_size: Vec<usize> = (0..n_comp).map(|c| if owner[c] == Some(c) { sizes[c] } else { 0 }).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    for (i, &c) in comp.iter().enumerate() {
        members[c].push(i);
    }

    loop {
        let mut changed = false;
        let mut pending = false;
        for c in 0..n_comp {
            if owner[c].is_some() {
                continue;
            }
            let mut best: Option<usize> = None;
            for &i in &members[c] {
                let (y, x) = (i / w, i % w);
                let mut nbrs = [usize::MAX; 4];
                if x > 0 {
                    nbrs[0] = i - 1;
                }
                if x + 1 < w {
                    nbrs[1] = i + 1;
                }
                if y > 0 {
                    nbrs[2] = i - w;
                }
                if y + 1 < h {
                    nbrs[3] = i + w;
                }
                for j in nbrs.into_iter().filter(|&j| j != usize::MAX) {
                    if let Some(o) = owner[comp[j]] {
                        if o == c {
                            continue;
                        }
                        best = match best {
                            Some(b) if kept_size[b] > kept_size[o] || (kept_size[b] == kept_size[o] && b <= o) => Some(b),
                            _ => Some(o),
                        };
                    }
                }
            }
            match best {
                Some(o) => {
                    owner[c] = Some(o);
                    kept_size[o] += sizes[c];
                    changed = true;
                }
                None => pending = true,
            }
        }
        if !pending || !changed {
            break;
        }
    }

    let mut remap = vec![u32::MAX; n_comp];
    let mut next = 0u32;
    let ids = comp
        .iter()
        .map(|&c| {
            let o = owner[c].unwrap_or(c);
            if remap[o] == u32::MAX {
                remap[o] = next;
                next += 1;
            }
            remap[o]
        })
        .collect();
    LabelMap::from_vec(h, w, ids).expect("sizes match")
}
