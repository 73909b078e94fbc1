// Turns fine synthetic label maps into coarse annotations at several erosion
// radii and reports how much is left unlabeled and how faithful the rest is.

use spixreg::annotations::{coarsen, labeled_agreement, DEFAULT_EPSILON};
use spixreg::trainer::synth_dataset;

pub fn run(images: usize) -> spixreg::Result<()> {
    let corpus = synth_dataset(images, 64, 64, 4, 5)?;
    println!("radius  unlabeled  agreement");
    for radius in [0.0, 2.0, 4.0, 8.0, 12.0] {
        let (mut unlabeled, mut agreement, mut n) = (0.0, 0.0, 0);
        for s in &corpus {
            let coarse = coarsen(&s.labels, radius, DEFAULT_EPSILON.min(radius))?;
            unlabeled += coarse.unlabeled_fraction();
            if let Some(a) = labeled_agreement(&coarse, &s.labels)? {
                agreement += a;
                n += 1;
            }
        }
        println!(
            "{radius:>6}  {:>9.3}  {:>9.4}",
            unlabeled / corpus.len() as f64,
            if n > 0 { agreement / n as f64 } else { f64::NAN }
        );
    }
    Ok(())
}

fn main() -> spixreg::Result<()> {
    run(20)
}
