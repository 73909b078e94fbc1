// Superpixel pooling on a small image: hard block assignments average
// 4×4 tiles, soft colour-based assignments follow the image content, and
// decoding spreads coarse scores back to full resolution.

use spixreg::pooling::{decode, q_pool};
use spixreg::superpixel::{soft_assign, AssignmentLevel, AssignmentPyramid};
use spixreg::FeatureMap;

pub fn run() -> spixreg::Result<()> {
    let image = FeatureMap::from_fn(8, 8, 1, |y, x, _| if x + y < 8 { 0.0 } else { 1.0 });
    let blocks = AssignmentPyramid::blocks(8, 8, 2);
    let pooled = q_pool(&image, &blocks)?;
    let twice = q_pool(&pooled, &blocks)?;
    println!("block pooling of a diagonal edge, row 3: {:?}", &pooled.data()[24..32]);
    println!("pooling is idempotent: {}", twice == pooled);

    // Seeds take the mean of their 2x2 cell; pixels pick seeds by colour.
    let seeds = FeatureMap::from_fn(4, 4, 1, |y, x, _| {
        let cell = [(0, 0), (0, 1), (1, 0), (1, 1)];
        cell.iter().map(|(dy, dx)| image.get(2 * y + dy, 2 * x + dx, 0)).sum::<f64>() / 4.0
    });
    let level: AssignmentLevel = soft_assign(&image, &seeds, 0.05)?;
    let soft = AssignmentPyramid::new(vec![level])?;
    let residual = image.max_abs_diff(&q_pool(&image, &soft)?);
    println!("colour-based assignment, largest pooling residual {residual:.3}");

    let scores = FeatureMap::from_fn(4, 4, 2, |y, x, c| if (x + y < 4) == (c == 0) { 2.0 } else { -2.0 });
    let full = decode(&scores, &soft)?;
    println!("decoded scores: {:?}", full.dims());
    Ok(())
}

fn main() -> spixreg::Result<()> {
    run()
}
