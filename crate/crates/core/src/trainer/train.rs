use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::srgb_to_cielab;
use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::losses::ResidualNorm;
use crate::metrics::accuracy_counts;
use crate::tape::{NodeId, Tape};
use crate::tensor::FeatureMap;

use super::adam::{Adam, Params};
use super::checkpoint::Checkpoint;
use super::encoder::{EncoderConfig, Forward, ToyEncoder};
use super::synth::Sample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Regularization strength.
    pub lambda: f64,
    /// Compactness weight inside the regularizer.
    pub m: f64,
    pub seed: u64,
    /// Build the regularizer into the graph even when `lambda` is zero.
    pub slic_branch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.0005,
            epochs: 10,
            lambda: 0.075,
            m: 0.0,
            seed: 0,
            slic_branch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(Error::Parameter(format!("m must be finite and >= 0, got {}", self.m)));
        }
        Ok(())
    }
}

/// Loss nodes of one training step.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub total: NodeId,
    pub cross_entropy: NodeId,
    /// Regularizer `slic + m·compact`, when built.
    pub regularizer: Option<NodeId>,
}

/// Cross-entropy of the decoded scores plus `lambda` times the SLIC
/// regularizer on `lab` (and `m` times the compactness term).
pub fn training_loss(
    tape: &mut Tape,
    forward: &Forward,
    labels: Arc<LabelMap>,
    lab: &FeatureMap,
    config: &TrainConfig,
) -> Result<LossNodes> {
    let ce = tape.masked_cross_entropy(forward.logits, labels)?;
    if !config.slic_branch {
        return Ok(LossNodes {
            total: ce,
            cross_entropy: ce,
            regularizer: None,
        });
    }
    let x = tape.constant(lab.clone());
    let mut reg = tape.pooled_residual(x, &forward.pyramid, ResidualNorm::Euclidean)?;
    if config.m != 0.0 {
        let coords = tape.constant(FeatureMap::coordinates(lab.height(), lab.width()));
        let compact = tape.pooled_residual(coords, &forward.pyramid, ResidualNorm::Euclidean)?;
        let scaled = tape.scale(compact, config.m);
        reg = tape.add(reg, scaled)?;
    }
    let weighted = tape.scale(reg, config.lambda);
    Ok(LossNodes {
        total: tape.add(ce, weighted)?,
        cross_entropy: ce,
        regularizer: Some(reg),
    })
}

/// Per-epoch training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub cross_entropy: f64,
    pub val_accuracy: Option<f64>,
    pub skipped_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Weights of the epoch with the highest validation accuracy (the last
    /// epoch when there is no validation data).
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
}

fn check_pairs(samples: &[Sample], what: &str) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if (s.image.height(), s.image.width()) != s.labels.dims() {
            return Err(Error::Data(format!(
                "{what} pair {i}: image {}x{} but labels {}x{}",
                s.image.height(),
                s.image.width(),
                s.labels.height(),
                s.labels.width()
            )));
        }
    }
    Ok(())
}

/// Pooled pixel accuracy of `params` over `samples`, skipping fully
/// unlabeled maps.
pub fn dataset_accuracy(encoder: &ToyEncoder, params: &Params, samples: &[Sample]) -> Result<Option<f64>> {
    let (mut hit, mut total) = (0usize, 0usize);
    for s in samples {
        let pred = predict_with(encoder, params, &s.image)?;
        let (m, n) = accuracy_counts(&pred, &s.labels)?;
        hit += m;
        total += n;
    }
    Ok((total > 0).then(|| hit as f64 / total as f64))
}

/// Trains a [`ToyEncoder`] with one Adam step per image.
pub fn train_toy(train: &[Sample], val: &[Sample], encoder: &EncoderConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    check_pairs(train, "training")?;
    check_pairs(val, "validation")?;
    let net = ToyEncoder::new(encoder.clone())?;
    for s in train.iter().chain(val) {
        net.check_input(&s.image)?;
        s.labels.validate_classes(encoder.classes)?;
    }
    let labs: Vec<FeatureMap> = train.iter().map(|s| srgb_to_cielab(&s.image)).collect::<Result<_>>()?;
    let labels: Vec<Arc<LabelMap>> = train.iter().map(|s| Arc::new(s.labels.clone())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = net.init(config.seed);
    let mut opt = Adam::new(config.lr)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Params)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut ce_sum, mut skipped) = (0.0, 0.0, 0usize);
        for &i in &order {
            let mut tape = Tape::new();
            let ids = net.register(&mut tape, &params)?;
            let fwd = net.forward(&mut tape, &ids, &train[i].image)?;
            let nodes = training_loss(&mut tape, &fwd, labels[i].clone(), &labs[i], config)?;
            let total = tape.scalar(nodes.total)?;
            if !total.is_finite() {
                log::warn!("epoch {epoch}: non-finite loss on training image {i}; step skipped");
                skipped += 1;
                continue;
            }
            loss_sum += total;
            ce_sum += tape.scalar(nodes.cross_entropy)?;
            let grads = tape.backward(nodes.total)?;
            if !opt.step(&mut params, &grads.into_params())? {
                skipped += 1;
            }
        }
        let val_accuracy = if val.is_empty() {
            None
        } else {
            dataset_accuracy(&net, &params, val)?
        };
        let n = train.len() as f64;
        let log = EpochLog {
            epoch,
            loss: loss_sum / n,
            cross_entropy: ce_sum / n,
            val_accuracy,
            skipped_steps: skipped,
        };
        log::info!("epoch {epoch}: loss {:.5} val_acc {:?}", log.loss, log.val_accuracy);
        history.push(log);
        let score = val_accuracy.unwrap_or(f64::NEG_INFINITY);
        if val_accuracy.is_none() || best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, epoch, params.clone()));
        }
    }
    if history.iter().all(|h| h.skipped_steps == train.len()) && config.epochs > 0 {
        return Err(Error::Numerical("every training step was skipped".into()));
    }
    let (score, epoch, params) = best.unwrap_or((f64::NEG_INFINITY, 0, params));
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            encoder: encoder.clone(),
            train: Some(config.clone()),
            epoch,
            val_accuracy: score.is_finite().then_some(score),
            params,
        },
        history,
    })
}

/// Splits off the last `ceil(n / 5)` samples for validation (none when there
/// is a single sample).
pub fn holdout_split(mut data: Vec<Sample>) -> (Vec<Sample>, Vec<Sample>) {
    let n = data.len();
    let held = if n < 2 { 0 } else { n.div_ceil(5) };
    let val = data.split_off(n - held);
    (data, val)
}

/// Per-pixel argmax of a score map; ties go to the lowest class.
pub fn argmax_labels(scores: &FeatureMap) -> LabelMap {
    let (h, w, _) = scores.dims();
    LabelMap::from_fn(h, w, |y, x| {
        let p = scores.pixel(y, x);
        let mut best = 0;
        for (k, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = k;
            }
        }
        best as u32
    })
}

fn predict_with(net: &ToyEncoder, params: &Params, image: &FeatureMap) -> Result<LabelMap> {
    let mut tape = Tape::new();
    let ids = net.register(&mut tape, params)?;
    let fwd = net.forward(&mut tape, &ids, image)?;
    Ok(argmax_labels(tape.value(fwd.logits)))
}

/// Segments `image`: encoder, classifier, superpixel decoding, argmax.
pub fn predict(checkpoint: &Checkpoint, image: &FeatureMap) -> Result<LabelMap> {
    let net = ToyEncoder::new(checkpoint.encoder.clone())?;
    predict_with(&net, &checkpoint.params, image)
}
