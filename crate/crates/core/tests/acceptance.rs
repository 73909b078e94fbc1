//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero when
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spixreg::annotations::{coarsen, douglas_peucker, labeled_agreement, segment_distance, Point};
use spixreg::color::srgb_to_cielab;
use spixreg::experiment::{run_cells, ExperimentConfig};
use spixreg::gradcheck::{gradient_check, CheckOptions};
use spixreg::losses::{slic_loss, ResidualNorm};
use spixreg::metrics::{
    accuracy_counts, boundary_counts, boundary_recall, mann_whitney_one_sided, Radius,
};
use spixreg::pooling::{q_pool, sp_downsample, sp_upsample};
use spixreg::superpixel::{
    grid_masks, hard_labels, softmax_candidates, AssignmentLevel, AssignmentPyramid, SeedGrid, CANDIDATES,
};
use spixreg::tape::{NodeId, Tape, TapePyramid};
use spixreg::trainer::{
    direct_fit, synth_dataset, training_loss, two_tone, DirectFitConfig, EncoderConfig, ToyEncoder, TrainConfig,
};
use spixreg::{FeatureMap, LabelMap, UNLABELED};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lib<T>(r: spixreg::Result<T>) -> Result<T, String> {
    r.map_err(|e| format!("error: {e}"))
}

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> FeatureMap {
    FeatureMap::from_fn(h, w, c, |_, _, _| rng.random_range(lo..hi))
}

fn random_level(rng: &mut ChaCha8Rng, h: usize, w: usize) -> AssignmentLevel {
    let grid = SeedGrid::for_level(h, w);
    let logits = random_map(rng, h, w, CANDIDATES, -2.0, 2.0);
    let weights = softmax_candidates(&logits, &grid_masks(&grid)).expect("valid logits");
    AssignmentLevel::new(grid, weights).expect("softmax rows sum to one")
}

fn random_pyramid(rng: &mut ChaCha8Rng, h: usize, w: usize, levels: usize) -> AssignmentPyramid {
    let (mut ph, mut pw) = (h, w);
    let mut out = Vec::new();
    for _ in 0..levels {
        out.push(random_level(rng, ph, pw));
        (ph, pw) = (ph.div_ceil(2), pw.div_ceil(2));
    }
    AssignmentPyramid::new(out).expect("consistent levels")
}

// ---------------------------------------------------------------- gradients

/// Registers per-level candidate logits as parameters and returns the
/// softmax weights as a tape pyramid.
fn tape_pyramid(tape: &mut Tape, ids: &[NodeId], h: usize, w: usize) -> spixreg::Result<TapePyramid> {
    let mut p = TapePyramid::new();
    let (mut ph, mut pw) = (h, w);
    for &id in ids {
        let grid = SeedGrid::for_level(ph, pw);
        let weights = tape.softmax_candidates(id, &grid)?;
        p.push(grid, weights);
        (ph, pw) = (ph.div_ceil(2), pw.div_ceil(2));
    }
    Ok(p)
}

fn logit_params(rng: &mut ChaCha8Rng, h: usize, w: usize, levels: usize) -> Vec<(String, FeatureMap)> {
    let (mut ph, mut pw) = (h, w);
    (0..levels)
        .map(|l| {
            let v = random_map(rng, ph, pw, CANDIDATES, -1.5, 1.5);
            (ph, pw) = (ph.div_ceil(2), pw.div_ceil(2));
            (format!("logits{l}"), v)
        })
        .collect()
}

/// `mean(‖out − target‖²)` turns a map-valued op into a scalar.
fn against_target(tape: &mut Tape, out: NodeId, target: &FeatureMap) -> spixreg::Result<NodeId> {
    let t = tape.constant(target.clone());
    let d = tape.sub(out, t)?;
    let n = tape.pixel_norm(d, ResidualNorm::Squared);
    Ok(tape.mean(n))
}

fn gradient_suite() -> Outcome {
    const COORDS: usize = 120;
    const TOL: f64 = 1e-4;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = CheckOptions {
        coordinates: Some(COORDS),
        ..CheckOptions::default()
    };
    let mut results: Vec<(&str, f64, usize)> = Vec::new();
    let mut record = |name, r: spixreg::Result<spixreg::gradcheck::CheckReport>| -> Result<(), String> {
        let r = lib(r)?;
        results.push((name, r.max_relative_error, r.coordinates_checked));
        Ok(())
    };

    for (name, stride) in [("conv2d stride 1", 1), ("conv2d stride 2", 2)] {
        let params = vec![
            ("x".to_string(), random_map(&mut rng, 10, 10, 2, -1.0, 1.0)),
            ("k".to_string(), random_map(&mut rng, 3, 3, 6, -1.0, 1.0)),
        ];
        let target = random_map(&mut rng, 10 / stride, 10 / stride, 3, -1.0, 1.0);
        record(
            name,
            gradient_check(
                |t, ids| {
                    let y = t.conv2d(ids[0], ids[1], stride, 1)?;
                    against_target(t, y, &target)
                },
                &params,
                &opts,
            ),
        )?;
    }

    {
        let params = logit_params(&mut rng, 12, 12, 1);
        let target = random_map(&mut rng, 12, 12, CANDIDATES, 0.0, 0.3);
        record(
            "softmax_candidates",
            gradient_check(
                |t, ids| {
                    let p = tape_pyramid(t, ids, 12, 12)?;
                    against_target(t, p.levels()[0].1, &target)
                },
                &params,
                &opts,
            ),
        )?;
    }

    {
        let mut params = logit_params(&mut rng, 10, 12, 1);
        params.push(("x".into(), random_map(&mut rng, 10, 12, 2, -1.0, 1.0)));
        let target = random_map(&mut rng, 5, 6, 2, -1.0, 1.0);
        record(
            "sp_downsample",
            gradient_check(
                |t, ids| {
                    let p = tape_pyramid(t, &ids[..1], 10, 12)?;
                    let (grid, w) = p.levels()[0];
                    let y = t.sp_downsample(ids[1], w, &grid)?;
                    against_target(t, y, &target)
                },
                &params,
                &opts,
            ),
        )?;
    }

    {
        let mut params = logit_params(&mut rng, 10, 12, 1);
        params.push(("seeds".into(), random_map(&mut rng, 5, 6, 3, -1.0, 1.0)));
        let target = random_map(&mut rng, 10, 12, 3, -1.0, 1.0);
        record(
            "sp_upsample",
            gradient_check(
                |t, ids| {
                    let p = tape_pyramid(t, &ids[..1], 10, 12)?;
                    let (grid, w) = p.levels()[0];
                    let y = t.sp_upsample(ids[1], w, &grid)?;
                    against_target(t, y, &target)
                },
                &params,
                &opts,
            ),
        )?;
    }

    {
        let mut params = logit_params(&mut rng, 16, 16, 2);
        params.push(("x".into(), random_map(&mut rng, 16, 16, 2, -1.0, 1.0)));
        let target = random_map(&mut rng, 16, 16, 2, -1.0, 1.0);
        record(
            "q_pool (2 levels)",
            gradient_check(
                |t, ids| {
                    let p = tape_pyramid(t, &ids[..2], 16, 16)?;
                    let y = t.q_pool(ids[2], &p)?;
                    against_target(t, y, &target)
                },
                &params,
                &opts,
            ),
        )?;
    }

    {
        let mut params = logit_params(&mut rng, 16, 16, 2);
        params.push(("scores".into(), random_map(&mut rng, 4, 4, 3, -1.0, 1.0)));
        let target = random_map(&mut rng, 16, 16, 3, -1.0, 1.0);
        record(
            "decode",
            gradient_check(
                |t, ids| {
                    let p = tape_pyramid(t, &ids[..2], 16, 16)?;
                    let y = t.decode(ids[2], &p)?;
                    against_target(t, y, &target)
                },
                &params,
                &opts,
            ),
        )?;
    }

    {
        let params = vec![("logits".to_string(), random_map(&mut rng, 8, 8, 4, -2.0, 2.0))];
        let labels = Arc::new(LabelMap::from_fn(8, 8, |y, x| {
            if (y + 2 * x) % 5 == 0 {
                UNLABELED as u32
            } else {
                ((y * 3 + x) % 4) as u32
            }
        }));
        record(
            "masked_cross_entropy",
            gradient_check(|t, ids| t.masked_cross_entropy(ids[0], labels.clone()), &params, &opts),
        )?;
    }

    {
        let params = logit_params(&mut rng, 16, 16, 2);
        let image = random_map(&mut rng, 16, 16, 3, 0.0, 1.0);
        let lab = lib(srgb_to_cielab(&image))?;
        record(
            "slic_loss",
            gradient_check(
                |t, ids| {
                    let p = tape_pyramid(t, ids, 16, 16)?;
                    let x = t.constant(lab.clone());
                    t.pooled_residual(x, &p, ResidualNorm::Euclidean)
                },
                &params,
                &opts,
            ),
        )?;
    }

    {
        let params = logit_params(&mut rng, 16, 16, 2);
        record(
            "compactness_term",
            gradient_check(
                |t, ids| {
                    let p = tape_pyramid(t, ids, 16, 16)?;
                    let x = t.constant(FeatureMap::coordinates(16, 16));
                    t.pooled_residual(x, &p, ResidualNorm::Euclidean)
                },
                &params,
                &opts,
            ),
        )?;
    }

    {
        let sample = lib(synth_dataset(1, 16, 16, 3, 2))?.remove(0);
        let lab = lib(srgb_to_cielab(&sample.image))?;
        let mut labels = sample.labels.clone();
        for y in 0..4 {
            for x in 0..16 {
                labels.set(y, x, UNLABELED as u32);
            }
        }
        let labels = Arc::new(labels);
        let net = lib(ToyEncoder::new(EncoderConfig {
            widths: vec![4, 6, 8],
            embed: 4,
            ..EncoderConfig::new(3)
        }))?;
        let train = TrainConfig {
            lambda: 0.075,
            m: 0.1,
            ..TrainConfig::default()
        };
        record(
            "full composed loss",
            gradient_check(
                |t, ids| {
                    let fwd = net.forward(t, ids, &sample.image)?;
                    Ok(training_loss(t, &fwd, labels.clone(), &lab, &train)?.total)
                },
                &net.init(4),
                &opts,
            ),
        )?;
    }

    let secs = start.elapsed().as_secs_f64();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let few = results.iter().filter(|r| r.2 < 100).map(|r| r.0).collect::<Vec<_>>();
    let failing = results.iter().filter(|r| !(r.1 < TOL)).map(|r| format!("{} {:.2e}", r.0, r.1)).collect::<Vec<_>>();
    let detail = format!(
        "{} ops, max rel. err {worst:.2e} (< {TOL:.0e}), {:.1}s (< 120s){}{}",
        results.len(),
        secs,
        if failing.is_empty() { String::new() } else { format!("; failing: {}", failing.join(", ")) },
        if few.is_empty() { String::new() } else { format!("; under 100 coordinates: {}", few.join(", ")) }
    );
    check(failing.is_empty() && few.is_empty() && secs < 120.0, detail)
}

// ------------------------------------------------------------- dense oracle

type Matrix = Vec<Vec<f64>>;

fn downsample_matrix(level: &AssignmentLevel) -> Matrix {
    let g = level.grid();
    let mut m = vec![vec![0.0; g.pixel_count()]; g.seed_count()];
    for y in 0..g.pixel_height {
        for x in 0..g.pixel_width {
            for s in 0..CANDIDATES {
                if let Some(i) = g.slot_index(y, x, s) {
                    m[i][y * g.pixel_width + x] += level.weights().get(y, x, s);
                }
            }
        }
    }
    for row in &mut m {
        let mass: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= mass);
    }
    m
}

fn upsample_matrix(level: &AssignmentLevel) -> Matrix {
    let g = level.grid();
    let mut m = vec![vec![0.0; g.seed_count()]; g.pixel_count()];
    for y in 0..g.pixel_height {
        for x in 0..g.pixel_width {
            for s in 0..CANDIDATES {
                if let Some(i) = g.slot_index(y, x, s) {
                    m[y * g.pixel_width + x][i] += level.weights().get(y, x, s);
                }
            }
        }
    }
    m
}

fn matmul(a: &Matrix, x: &Matrix) -> Matrix {
    a.iter()
        .map(|row| {
            (0..x[0].len())
                .map(|c| row.iter().zip(x).map(|(w, xr)| w * xr[c]).sum())
                .collect()
        })
        .collect()
}

fn as_matrix(f: &FeatureMap) -> Matrix {
    f.data().chunks(f.channels()).map(<[f64]>::to_vec).collect()
}

fn max_diff(f: &FeatureMap, m: &Matrix) -> f64 {
    f.data().iter().zip(m.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn dense_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..50 {
        let h = rng.random_range(1..=8);
        let w = rng.random_range(1..=8);
        let c = rng.random_range(1..=4);
        let levels = rng.random_range(1..=3);
        let pyr = random_pyramid(&mut rng, h, w, levels);
        let x = random_map(&mut rng, h, w, c, -5.0, 5.0);
        let level = &pyr.levels()[0];

        let down = lib(sp_downsample(&x, level))?.seeds;
        worst = worst.max(max_diff(&down, &matmul(&downsample_matrix(level), &as_matrix(&x))));
        let g = level.grid();
        let y = random_map(&mut rng, g.seed_height, g.seed_width, c, -5.0, 5.0);
        let up = lib(sp_upsample(&y, level))?;
        worst = worst.max(max_diff(&up, &matmul(&upsample_matrix(level), &as_matrix(&y))));

        let mut m = as_matrix(&x);
        for l in pyr.levels() {
            m = matmul(&downsample_matrix(l), &m);
        }
        for l in pyr.levels().iter().rev() {
            m = matmul(&upsample_matrix(l), &m);
        }
        worst = worst.max(max_diff(&lib(q_pool(&x, &pyr))?, &m));
        cases += 1;
    }
    check(worst < 1e-12, format!("{cases} random instances up to 8x8, max abs diff {worst:.2e} (< 1e-12)"))
}

// --------------------------------------------------------------- zero cases

fn zero_cases() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst_const: f64 = 0.0;
    for _ in 0..20 {
        let (h, w) = (rng.random_range(4..=16), rng.random_range(4..=16));
        let rgb = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        let image = FeatureMap::from_fn(h, w, 3, |_, _, c| rgb[c]);
        let levels = rng.random_range(1..=3);
        let pyr = random_pyramid(&mut rng, h, w, levels);
        worst_const = worst_const.max(lib(slic_loss(&image, &pyr))?.abs());
    }
    let mut worst_block: f64 = 0.0;
    for levels in 1..=3 {
        let side = 1 << levels;
        let (h, w) = (side * rng.random_range(1..=4), side * rng.random_range(1..=4));
        let colors: Vec<f64> = (0..h * w * 3).map(|_| rng.random()).collect();
        let image = FeatureMap::from_fn(h, w, 3, |y, x, c| colors[((y / side) * w + x / side) * 3 + c]);
        worst_block = worst_block.max(lib(slic_loss(&image, &AssignmentPyramid::blocks(h, w, levels)))?.abs());
    }
    check(
        worst_const <= 1e-10 && worst_block <= 1e-10,
        format!("constant image max {worst_const:.2e}, aligned blocks max {worst_block:.2e} (<= 1e-10)"),
    )
}

// ------------------------------------------------------------ idempotence

/// Random one-hot level in which every seed keeps the pixel at twice its
/// coordinates, so no seed is empty.
fn random_one_hot(rng: &mut ChaCha8Rng, h: usize, w: usize) -> AssignmentLevel {
    let grid = SeedGrid::for_level(h, w);
    AssignmentLevel::one_hot(grid, |y, x| {
        if y % 2 == 0 && x % 2 == 0 {
            return 4;
        }
        let valid: Vec<usize> = (0..CANDIDATES).filter(|&s| grid.slot_seed(y, x, s).is_some()).collect();
        valid[rng.random_range(0..valid.len())]
    })
    .expect("valid slots")
}

fn idempotence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut failures = 0;
    let trials = 100;
    for _ in 0..trials {
        let (h, w) = (rng.random_range(2..=24), rng.random_range(2..=24));
        let (mut ph, mut pw) = (h, w);
        let mut levels = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            levels.push(random_one_hot(&mut rng, ph, pw));
            (ph, pw) = (ph.div_ceil(2), pw.div_ceil(2));
        }
        let pyr = AssignmentPyramid::new(levels).expect("consistent levels");
        let x = random_map(&mut rng, h, w, 3, -10.0, 10.0);
        let once = lib(q_pool(&x, &pyr))?;
        let twice = lib(q_pool(&once, &pyr))?;
        if once != twice {
            failures += 1;
        }
    }
    check(failures == 0, format!("{} of {trials} random one-hot pyramids bit-identical", trials - failures))
}

// ----------------------------------------------------------------- metrics

fn brute_boundary(m: &LabelMap) -> Vec<(usize, usize)> {
    let (h, w) = m.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = m.get(y, x);
            let neighbours = [(y.wrapping_sub(1), x), (y + 1, x), (y, x.wrapping_sub(1)), (y, x + 1)];
            if neighbours.iter().any(|&(ny, nx)| ny < h && nx < w && m.get(ny, nx) != v) {
                out.push((y, x));
            }
        }
    }
    out
}

fn near(p: (usize, usize), set: &[(usize, usize)], r: usize) -> bool {
    set.iter().any(|q| p.0.abs_diff(q.0) <= r && p.1.abs_diff(q.1) <= r)
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut mismatches = 0;
    let mut identity_fail = 0;
    let mut monotone_fail = 0;
    for _ in 0..200 {
        let k = rng.random_range(2..=4);
        let random_labels = |rng: &mut ChaCha8Rng| {
            let blob = rng.random_range(1..=4);
            let seeds: Vec<u32> = (0..16 * 16).map(|_| rng.random_range(0..k)).collect();
            LabelMap::from_fn(16, 16, |y, x| {
                if rng.random::<f64>() < 0.05 {
                    UNLABELED as u32
                } else {
                    seeds[(y / blob) * 16 + x / blob]
                }
            })
        };
        let truth = random_labels(&mut rng);
        let pred = random_labels(&mut rng);

        let (m, n) = lib(accuracy_counts(&pred, &truth))?;
        let bm = pred.ids().iter().zip(truth.ids()).filter(|(p, t)| **t != UNLABELED as u32 && p == t).count();
        let bn = truth.ids().iter().filter(|t| **t != UNLABELED as u32).count();
        if (m, n) != (bm, bn) {
            mismatches += 1;
        }

        let (bp, bt) = (brute_boundary(&pred), brute_boundary(&truth));
        let mut prev = -1.0;
        for r in 0..5 {
            let c = lib(boundary_counts(&pred, &truth, Radius::Pixels(r)))?;
            let pnt = bp.iter().filter(|&&p| near(p, &bt, r)).count();
            let missed = bt.iter().filter(|&&p| !near(p, &bp, r)).count();
            if (c.pred_near_truth, c.truth_missed, c.truth_boundary) != (pnt, missed, bt.len()) {
                mismatches += 1;
            }
            if !bt.is_empty() {
                let br = lib(boundary_recall(&pred, &truth, Radius::Pixels(r)))?;
                let expect = pnt as f64 / (pnt + missed) as f64;
                if br != expect {
                    mismatches += 1;
                }
                if br < prev {
                    monotone_fail += 1;
                }
                prev = br;
                if lib(boundary_recall(&truth, &truth, Radius::Pixels(r)))? != 1.0 {
                    identity_fail += 1;
                }
            }
        }
    }
    let auto = Radius::Auto.resolve(512, 1024);
    check(
        mismatches == 0 && identity_fail == 0 && monotone_fail == 0 && auto == 3,
        format!(
            "200 pairs: {mismatches} count mismatches, {identity_fail} BR(x,x) != 1, {monotone_fail} monotonicity breaks; AUTO r at 1024x512 = {auto}"
        ),
    )
}

// ------------------------------------------------------------ Mann-Whitney

/// P(U ≥ u) by enumerating every subset of the pooled sample as group A.
fn enumerate_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let u = |mask: u32| -> f64 {
        let mut twice = 0;
        for i in 0..pooled.len() {
            for j in 0..pooled.len() {
                if mask & (1 << i) != 0 && mask & (1 << j) == 0 {
                    twice += if pooled[i] > pooled[j] { 2 } else { u32::from(pooled[i] == pooled[j]) };
                }
            }
        }
        twice as f64 / 2.0
    };
    let observed = u((1 << a.len()) - 1);
    let (mut ge, mut total) = (0, 0);
    for mask in 0u32..(1 << pooled.len()) {
        if mask.count_ones() as usize == a.len() {
            total += 1;
            if u(mask) >= observed {
                ge += 1;
            }
        }
    }
    ge as f64 / total as f64
}

fn mann_whitney() -> Outcome {
    let reference = lib(mann_whitney_one_sided(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]))?.p_value;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 1..=5 {
        for m in 1..=5 {
            for _ in 0..8 {
                // Small integer values make ties common.
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
                let b: Vec<f64> = (0..m).map(|_| rng.random_range(0..6) as f64).collect();
                let t = lib(mann_whitney_one_sided(&a, &b))?;
                if !t.exact {
                    return Err(format!("sizes {n},{m} did not use the exact null"));
                }
                worst = worst.max((t.p_value - enumerate_p(&a, &b)).abs());
                cases += 1;
            }
        }
    }
    check(
        (reference - 0.05).abs() < 1e-12 && worst < 1e-12,
        format!("{{4,5,6}} vs {{1,2,3}}: p = {reference:.6}; {cases} cases with sizes <= 5, max diff to enumeration {worst:.1e}"),
    )
}

// -------------------------------------------------------------- direct fit

fn direct_fit_alignment() -> Outcome {
    let mut brs = Vec::new();
    let mut times = Vec::new();
    let config = DirectFitConfig::default();
    for seed in 0..20 {
        let sample = two_tone(64, seed);
        let start = Instant::now();
        let fit = lib(direct_fit(&sample.image, &config))?;
        times.push(start.elapsed().as_secs_f64());
        brs.push(lib(boundary_recall(&hard_labels(&fit.pyramid), &sample.labels, Radius::Auto))?);
    }
    times.sort_by(f64::total_cmp);
    let median = (times[9] + times[10]) / 2.0;
    let min = brs.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        min >= 0.9 && median < 30.0,
        format!("20 images, {} level: min BR {min:.3} (>= 0.9), median {median:.2}s (< 30s)", config.levels),
    )
}

/// Not a criterion: the single-level case is easy because superpixels are
/// about 2x2 pixels, so the deeper pyramid is reported next to the blocks baseline.
fn direct_fit_deep() -> String {
    let config = DirectFitConfig {
        levels: 3,
        ..DirectFitConfig::default()
    };
    let (mut fit_br, mut block_br) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let sample = two_tone(64, seed);
        let Ok(fit) = direct_fit(&sample.image, &config) else {
            return "direct fit failed".into();
        };
        let blocks = hard_labels(&AssignmentPyramid::blocks(64, 64, 3));
        fit_br.push(boundary_recall(&hard_labels(&fit.pyramid), &sample.labels, Radius::Auto).unwrap_or(f64::NAN));
        block_br.push(boundary_recall(&blocks, &sample.labels, Radius::Auto).unwrap_or(f64::NAN));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    format!("3 levels on 5 images: mean BR {:.3} vs fixed blocks {:.3}", mean(&fit_br), mean(&block_br))
}

// ---------------------------------------------------------------- headline

fn headline() -> Outcome {
    let config = ExperimentConfig::default();
    let start = Instant::now();
    let cells = lib(run_cells(&config, None))?;
    let secs = start.elapsed().as_secs_f64();
    let pick = |v: f64, f: fn(&spixreg::experiment::CellResult) -> f64| {
        cells.iter().filter(|c| c.value == v).map(f).collect::<Vec<_>>()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (br0, br1) = (pick(0.0, |c| c.boundary_recall), pick(0.075, |c| c.boundary_recall));
    let (acc0, acc1) = (pick(0.0, |c| c.accuracy), pick(0.075, |c| c.accuracy));
    let p = lib(mann_whitney_one_sided(&br1, &br0))?.p_value;
    let (mb0, mb1, ma0, ma1) = (mean(&br0), mean(&br1), mean(&acc0), mean(&acc1));
    check(
        br0.len() == 5 && br1.len() == 5 && mb1 > mb0 && p < 0.05 && ma1 >= ma0 - 0.01 && secs <= 3600.0,
        format!(
            "{}x{} corpus, {} runs per arm: BR {mb0:.3} -> {mb1:.3} (p = {p:.4} < 0.05), ACC {ma0:.4} -> {ma1:.4} (drop <= 0.01), {:.0}s (<= 3600s)",
            config.size,
            config.size,
            br0.len(),
            secs
        ),
    )
}

// -------------------------------------------------------------- coarsening

fn random_polyline(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = rng.random_range(2..=60);
    let mut p = (0.0, 0.0);
    (0..n)
        .map(|_| {
            p = (p.0 + rng.random_range(-3.0..3.0), p.1 + rng.random_range(-3.0..3.0));
            p
        })
        .collect()
}

/// Largest distance from an input point to the simplified segment spanning it.
fn dp_deviation(points: &[Point], kept: &[Point]) -> Result<f64, String> {
    let mut idx = Vec::with_capacity(kept.len());
    let mut from = 0;
    for k in kept {
        let i = points[from..].iter().position(|p| p == k).ok_or("simplified point not in input")? + from;
        idx.push(i);
        from = i + 1;
    }
    if idx.first() != Some(&0) || idx.last() != Some(&(points.len() - 1)) {
        return Err("endpoints not kept".into());
    }
    let mut worst: f64 = 0.0;
    for pair in idx.windows(2) {
        for p in &points[pair[0]..=pair[1]] {
            worst = worst.max(segment_distance(*p, points[pair[0]], points[pair[1]]));
        }
    }
    Ok(worst)
}

fn coarsening() -> Outcome {
    let corpus = lib(synth_dataset(50, 64, 64, 4, 1000))?;
    let radii = [0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0];
    let mut monotone_breaks = 0;
    let mut worst_agreement: f64 = 1.0;
    for s in &corpus {
        let mut prev = -1.0;
        for r in radii {
            let f = lib(coarsen(&s.labels, r, 2.0_f64.min(r)))?.unlabeled_fraction();
            if f < prev {
                monotone_breaks += 1;
            }
            prev = f;
        }
    }
    for r in [1.0, 2.0, 4.0, 8.0] {
        for eps in [0.0, 1.0, 2.0, 4.0].into_iter().filter(|&e| e <= r) {
            let (mut agree, mut labeled) = (0.0, 0usize);
            for s in &corpus {
                let coarse = lib(coarsen(&s.labels, r, eps))?;
                let n = coarse.ids().iter().filter(|&&v| v != UNLABELED as u32).count();
                if let Some(a) = lib(labeled_agreement(&coarse, &s.labels))? {
                    agree += a * n as f64;
                    labeled += n;
                }
            }
            if labeled > 0 {
                worst_agreement = worst_agreement.min(agree / labeled as f64);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let line = random_polyline(&mut rng);
        let eps = rng.random_range(0.0..4.0);
        let dev = dp_deviation(&line, &douglas_peucker(&line, eps))?;
        worst_excess = worst_excess.max(dev - eps);
    }
    check(
        monotone_breaks == 0 && worst_agreement >= 0.99 && worst_excess <= 0.0,
        format!(
            "{monotone_breaks} unlabeled-fraction decreases over {} radii x 50 images; min agreement {worst_agreement:.4} (>= 0.99); 1000 polylines, max deviation minus epsilon {worst_excess:.3} (<= 0)",
            radii.len()
        ),
    )
}

// ------------------------------------------------------------- determinism

fn run_bin(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_spixreg"))
        .args(args)
        .output()
        .map_err(|e| format!("cannot run binary: {e}"))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let data = d.join("data");
    run_bin(&["synth", "--out-dir", path(&data), "--count", "6", "--size", "32", "--classes", "3", "--seed", "4", "--radius", "3"])?;
    let image = data.join("image_0000.ppm");
    let mut fits = Vec::new();
    let mut ckpts = Vec::new();
    for run in 0..2 {
        let labels = d.join(format!("fit{run}.pgm"));
        run_bin(&["fit", "--image", path(&image), "--levels", "2", "--steps", "60", "--seed", "3", "--out-labels", path(&labels)])?;
        fits.push(std::fs::read(&labels).map_err(|e| e.to_string())?);
        let ckpt = d.join(format!("model{run}.ckpt"));
        run_bin(&["train", "--data-dir", path(&data), "--epochs", "2", "--seed", "5", "--out-checkpoint", path(&ckpt)])?;
        ckpts.push(std::fs::read(&ckpt).map_err(|e| e.to_string())?);
    }
    check(
        fits[0] == fits[1] && ckpts[0] == ckpts[1],
        format!(
            "fit labels identical: {} ({} bytes); checkpoints identical: {} ({} bytes)",
            fits[0] == fits[1],
            fits[0].len(),
            ckpts[0] == ckpts[1],
            ckpts[0].len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient suite", gradient_suite),
        ("dense-oracle equivalence", dense_oracle),
        ("regularizer zero cases", zero_cases),
        ("q idempotence under hard assignments", idempotence),
        ("metric oracle", metric_oracle),
        ("Mann-Whitney exactness", mann_whitney),
        ("direct-fit boundary alignment", direct_fit_alignment),
        ("headline: regularization raises BR", headline),
        ("coarsening properties", coarsening),
        ("determinism of fit and train", determinism),
    ];
    // ACCEPTANCE_ONLY=<substring> runs a subset while iterating.
    let only = std::env::var("ACCEPTANCE_ONLY").unwrap_or_default();
    let criteria: Vec<_> = criteria.into_iter().filter(|(n, _)| n.contains(only.as_str())).collect();
    let mut failed = 0;
    for &(name, f) in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
        if name.starts_with("direct-fit") {
            println!("INFO  direct fit, deeper pyramid: {}", direct_fit_deep());
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
