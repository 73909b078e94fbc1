// Trains the toy encoder on coarse synthetic labels with and without the
// SLIC regularizer and scores both on fine test labels.

use spixreg::annotations::coarsen;
use spixreg::experiment::evaluate;
use spixreg::trainer::{synth_dataset, train_toy, Checkpoint, EncoderConfig, TrainConfig};

pub fn run(train: usize, epochs: usize) -> spixreg::Result<()> {
    let mut data = synth_dataset(train + 8, 32, 32, 3, 21)?;
    let test = data.split_off(train + 4);
    for s in &mut data {
        s.labels = coarsen(&s.labels, 3.0, 1.0)?;
    }
    let val = data.split_off(train);
    for lambda in [0.0, 0.075] {
        let config = TrainConfig {
            epochs,
            lambda,
            lr: 0.002,
            ..TrainConfig::default()
        };
        let outcome = train_toy(&data, &val, &EncoderConfig::new(3), &config)?;
        for h in &outcome.history {
            println!("lambda {lambda}: epoch {} loss {:.4} val acc {:?}", h.epoch, h.loss, h.val_accuracy);
        }
        let (acc, br) = evaluate(&outcome.checkpoint, &test)?;
        println!("lambda {lambda}: test ACC {acc:.4} BR {br:.4}");
        let bytes = outcome.checkpoint.to_bytes()?;
        let restored = Checkpoint::from_bytes(&bytes)?;
        println!("checkpoint: {} bytes, epoch {}", bytes.len(), restored.epoch);
    }
    Ok(())
}

fn main() -> spixreg::Result<()> {
    run(40, 3)
}
