// Fits superpixel assignments directly to synthetic two-tone images and
// reports how well the superpixel boundaries follow the colour edge,
// compared with fixed square blocks.

use std::time::Instant;

use spixreg::metrics::{boundary_recall, Radius};
use spixreg::superpixel::{hard_labels, AssignmentPyramid};
use spixreg::trainer::{direct_fit, two_tone, DirectFitConfig};

pub fn run(images: u64, levels: &[usize], steps: usize) -> spixreg::Result<()> {
    for &levels in levels {
        let config = DirectFitConfig {
            levels,
            steps,
            ..DirectFitConfig::default()
        };
        for seed in 0..images {
            let sample = two_tone(64, seed);
            let start = Instant::now();
            let fit = direct_fit(&sample.image, &config)?;
            let secs = start.elapsed().as_secs_f64();
            let br = boundary_recall(&hard_labels(&fit.pyramid), &sample.labels, Radius::Auto)?;
            let blocks = hard_labels(&AssignmentPyramid::blocks(64, 64, levels));
            let base = boundary_recall(&blocks, &sample.labels, Radius::Auto)?;
            println!(
                "levels {levels} image {seed}: loss {:.3} -> {:.3}, BR {br:.3} (blocks {base:.3}), {secs:.2}s",
                fit.losses[0],
                fit.losses.last().expect("losses are recorded")
            );
        }
    }
    Ok(())
}

fn main() -> spixreg::Result<()> {
    run(3, &[1, 2, 3], 300)
}
