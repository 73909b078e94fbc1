use std::sync::Arc;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use spixreg::color::srgb_to_cielab;
use spixreg::tape::Tape;
use spixreg::trainer::{
    class_colors, dataset_accuracy, synth_dataset, train_toy, training_loss, two_tone, EncoderConfig, ToyEncoder,
    TrainConfig, NOISE_SIGMA,
};

#[test]
fn class_head_gets_no_gradient_from_the_regularizer() {
    let sample = synth_dataset(1, 16, 16, 3, 9).unwrap().remove(0);
    let lab = srgb_to_cielab(&sample.image).unwrap();
    let net = ToyEncoder::new(EncoderConfig::new(3)).unwrap();
    let mut tape = Tape::new();
    let ids = net.register(&mut tape, &net.init(1)).unwrap();
    let fwd = net.forward(&mut tape, &ids, &sample.image).unwrap();
    let config = TrainConfig {
        m: 0.5,
        ..TrainConfig::default()
    };
    let nodes = training_loss(&mut tape, &fwd, Arc::new(sample.labels), &lab, &config).unwrap();
    let grads = tape.backward(nodes.regularizer.expect("regularizer is built")).unwrap();
    for name in ["phi.w", "phi.b"] {
        if let Some(g) = grads.param(name) {
            assert!(g.data().iter().all(|&v| v == 0.0), "{name} has a regularizer gradient");
        }
    }
    let nonzero = grads.params().iter().filter(|(_, g)| g.data().iter().any(|&v| v != 0.0)).count();
    assert!(nonzero > 0, "the assignment heads should receive gradient");
}

#[test]
fn encoder_memorizes_a_small_training_set() {
    let data: Vec<_> = (0..4).map(|s| two_tone(32, s)).collect();
    let config = TrainConfig {
        epochs: 60,
        lr: 0.01,
        lambda: 0.0,
        ..TrainConfig::default()
    };
    let outcome = train_toy(&data, &[], &EncoderConfig::new(2), &config).unwrap();
    let net = ToyEncoder::new(EncoderConfig::new(2)).unwrap();
    let acc = dataset_accuracy(&net, &outcome.checkpoint.params, &data).unwrap().unwrap();
    assert!(acc >= 0.95, "training accuracy {acc}");
    let first = outcome.history.first().unwrap().cross_entropy;
    let last = outcome.history.last().unwrap().cross_entropy;
    assert!(last < first, "cross-entropy {first} -> {last}");
}

#[test]
fn synthetic_noise_is_gaussian_with_the_documented_sigma() {
    let classes = 4;
    let colors = class_colors(classes);
    let samples = synth_dataset(20, 32, 32, classes, 3).unwrap();
    let (mut stat, mut dof) = (0.0, 0usize);
    for s in &samples {
        for y in 0..32 {
            for x in 0..32 {
                let color = colors[s.labels.get(y, x) as usize];
                for c in 0..3 {
                    // Channels at 0 or 1 are clamped and not Gaussian.
                    if color[c] > 0.2 && color[c] < 0.8 {
                        let z = (s.image.get(y, x, c) - color[c]) / NOISE_SIGMA;
                        stat += z * z;
                        dof += 1;
                    }
                }
            }
        }
    }
    assert!(dof > 1000, "only {dof} unclamped channels");
    let p = ChiSquared::new(dof as f64).unwrap().sf(stat);
    assert!(p > 0.001 && p < 0.999, "chi-square {stat:.1} on {dof} dof, p = {p}");
}

#[test]
fn every_class_appears_in_the_corpus() {
    let classes = 5;
    let samples = synth_dataset(100, 32, 32, classes, 8).unwrap();
    let mut present = vec![0usize; classes];
    for s in &samples {
        for (c, count) in present.iter_mut().enumerate() {
            if s.labels.ids().contains(&(c as u32)) {
                *count += 1;
            }
        }
    }
    assert!(present.iter().all(|&n| n >= 30), "class presence {present:?}");
}
