// Pixel accuracy, boundary recall at growing radii, and the one-sided
// Mann-Whitney test on two small groups of scores.

use spixreg::metrics::{boundary_counts, mann_whitney_one_sided, pixel_accuracy, Radius};
use spixreg::LabelMap;

pub fn run() -> spixreg::Result<()> {
    // Truth splits a 32×32 image at column 16; the prediction is off by two.
    let truth = LabelMap::from_fn(32, 32, |_, x| (x >= 16) as u32);
    let pred = LabelMap::from_fn(32, 32, |_, x| (x >= 18) as u32);
    println!("pixel accuracy {:.4}", pixel_accuracy(&pred, &truth)?);
    for r in 0..4 {
        let c = boundary_counts(&pred, &truth, Radius::Pixels(r))?;
        let br = c.pred_near_truth as f64 / (c.pred_near_truth + c.truth_missed) as f64;
        println!("r = {r}: boundary recall {br:.3}");
    }
    println!("AUTO radius at 1024x512: {}", Radius::Auto.resolve(512, 1024));

    let regularized = [0.62, 0.70, 0.66, 0.74, 0.69];
    let baseline = [0.41, 0.43, 0.40, 0.42, 0.44];
    let test = mann_whitney_one_sided(&regularized, &baseline)?;
    println!("U = {}, p = {:.4} ({})", test.u, test.p_value, if test.exact { "exact" } else { "approximate" });
    Ok(())
}

fn main() -> spixreg::Result<()> {
    run()
}
