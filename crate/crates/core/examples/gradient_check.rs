// Checks the gradient of the full training loss (encoder, superpixel
// decoding, cross-entropy and regularizer) against central differences.

use std::sync::Arc;

use spixreg::color::srgb_to_cielab;
use spixreg::gradcheck::{gradient_check, CheckOptions};
use spixreg::trainer::{synth_dataset, training_loss, EncoderConfig, ToyEncoder, TrainConfig};

pub fn run(coordinates: usize) -> spixreg::Result<f64> {
    let sample = synth_dataset(1, 16, 16, 3, 2)?.remove(0);
    let lab = srgb_to_cielab(&sample.image)?;
    let labels = Arc::new(sample.labels.clone());
    let config = EncoderConfig {
        widths: vec![4, 6, 8],
        embed: 4,
        ..EncoderConfig::new(3)
    };
    let net = ToyEncoder::new(config)?;
    let train = TrainConfig {
        lambda: 0.075,
        m: 0.1,
        ..TrainConfig::default()
    };
    let report = gradient_check(
        |tape, ids| {
            let fwd = net.forward(tape, ids, &sample.image)?;
            Ok(training_loss(tape, &fwd, labels.clone(), &lab, &train)?.total)
        },
        &net.init(4),
        &CheckOptions {
            coordinates: Some(coordinates),
            ..CheckOptions::default()
        },
    )?;
    println!(
        "{} coordinates, max relative error {:.3e} at {:?}",
        report.coordinates_checked, report.max_relative_error, report.worst
    );
    Ok(report.max_relative_error)
}

fn main() -> spixreg::Result<()> {
    run(200).map(|_| ())
}
