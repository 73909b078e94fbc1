// Classic SLIC on a synthetic scene: superpixel count, size range and how
// many object boundary pixels the superpixel boundaries recover.

use spixreg::metrics::{boundary_recall_variant, BoundaryRecallVariant, Radius};
use spixreg::superpixel::{slic, SlicParams};
use spixreg::trainer::synth_dataset;

pub fn run(n_superpixels: usize) -> spixreg::Result<()> {
    let sample = synth_dataset(1, 96, 96, 4, 11)?.remove(0);
    for compactness in [1.0, 10.0, 40.0] {
        let params = SlicParams {
            n_superpixels,
            compactness,
            iterations: 10,
        };
        let labels = slic(&sample.image, &params)?;
        let mut sizes = vec![0usize; labels.distinct()];
        for &id in labels.ids() {
            sizes[id as usize] += 1;
        }
        let br = boundary_recall_variant(&labels, &sample.labels, Radius::Pixels(1), BoundaryRecallVariant::Standard)?;
        println!(
            "compactness {compactness:>4}: {} superpixels, sizes {}..{}, boundary recall (r = 1) {br:.3}",
            sizes.len(),
            sizes.iter().min().unwrap_or(&0),
            sizes.iter().max().unwrap_or(&0)
        );
    }
    Ok(())
}

fn main() -> spixreg::Result<()> {
    run(100)
}
