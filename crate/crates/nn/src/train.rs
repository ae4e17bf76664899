//! Mini-batch training loop with Adam and per-epoch learning-rate decay.

use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::Adam;
use crate::arch::{Variant, NUM_CLASSES};
use crate::checkpoint;
use crate::error::{NnError, Result};
use crate::network::{argmax, cross_entropy, Dropout, Input, Network};

/// A training or validation example.
#[derive(Clone, Copy, Debug)]
pub struct Labeled<'a> {
    pub input: Input<'a>,
    pub label: usize,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate; epoch `i` uses `lr0 * lr_decay^i`.
    pub lr0: f64,
    pub lr_decay: f64,
    pub dropout: f32,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (and after the last one).
    pub checkpoint_every: Option<usize>,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Dlimd,
            epochs: 1000,
            batch_size: 1024,
            lr0: 1e-4,
            lr_decay: 0.999,
            dropout: 0.5,
            seed: 0,
            checkpoint_every: None,
            checkpoint_path: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches, weighted by batch size.
    pub loss: f64,
    /// Validation top-1 accuracy in percent (NaN without a validation set).
    pub accuracy: f64,
    pub lr: f64,
}

impl EpochLog {
    /// One line of the training log: `epoch loss accuracy lr`.
    pub fn line(&self) -> String {
        format!("{} {:.6} {:.4} {:.6e}", self.epoch, self.loss, self.accuracy, self.lr)
    }
}

fn check_labels(set: &[Labeled<'_>]) -> Result<()> {
    match set.iter().find(|e| e.label >= NUM_CLASSES) {
        Some(e) => Err(NnError::CorruptDataset(format!("label {} out of range", e.label))),
        None => Ok(()),
    }
}

/// Top-1 predictions for every example, evaluated in fixed-size batches.
pub fn predict_all(net: &Network<f32>, set: &[Labeled<'_>]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(set.len());
    for chunk in set.chunks(64) {
        let inputs: Vec<_> = chunk.iter().map(|e| e.input).collect();
        let pass = net.forward::<ChaCha8Rng>(&inputs, None)?;
        out.extend(pass.probs().chunks(NUM_CLASSES).map(argmax));
    }
    Ok(out)
}

pub fn validation_accuracy(net: &Network<f32>, set: &[Labeled<'_>]) -> Result<f64> {
    if set.is_empty() {
        return Ok(f64::NAN);
    }
    let preds = predict_all(net, set)?;
    let hits = preds.iter().zip(set).filter(|(p, e)| **p == e.label).count();
    Ok(hits as f64 / set.len() as f64 * 100.0)
}

/// Trains a freshly initialized network and returns it with the per-epoch log.
/// Each epoch's log line is also written to `log`.
pub fn train(
    config: &TrainConfig,
    train_set: &[Labeled<'_>],
    val_set: &[Labeled<'_>],
    log: &mut dyn Write,
) -> Result<(Network<f32>, Vec<EpochLog>)> {
    let net = Network::new(config.variant, config.seed);
    train_from(net, config, train_set, val_set, log)
}

/// Continues training `net` under `config`.
pub fn train_from(
    mut net: Network<f32>,
    config: &TrainConfig,
    train_set: &[Labeled<'_>],
    val_set: &[Labeled<'_>],
    log: &mut dyn Write,
) -> Result<(Network<f32>, Vec<EpochLog>)> {
    if train_set.is_empty() {
        return Err(NnError::CorruptDataset("empty training set".into()));
    }
    if config.batch_size == 0 {
        return Err(NnError::InvalidParams("batch size must be positive".into()));
    }
    check_labels(train_set)?;
    check_labels(val_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_d1a);
    let mut adam = Adam::new(net.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.lr0 * config.lr_decay.powi(epoch as i32);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let inputs: Vec<_> = batch.iter().map(|&i| train_set[i].input).collect();
            let labels: Vec<_> = batch.iter().map(|&i| train_set[i].label).collect();
            let pass =
                net.forward(&inputs, Some(Dropout { rate: config.dropout, rng: &mut rng }))?;
            loss_sum += cross_entropy(pass.probs(), &labels)? as f64 * batch.len() as f64;
            let grads = net.backward(&pass, &labels)?;
            adam.step(net.params_mut(), &grads, lr)?;
        }
        let entry = EpochLog {
            epoch,
            loss: loss_sum / train_set.len() as f64,
            accuracy: validation_accuracy(&net, val_set)?,
            lr,
        };
        writeln!(log, "{}", entry.line())?;
        history.push(entry);
        if let (Some(every), Some(path)) = (config.checkpoint_every, &config.checkpoint_path) {
            if every > 0 && ((epoch + 1) % every == 0 || epoch + 1 == config.epochs) {
                checkpoint::save(&net, path)?;
            }
        }
    }
    Ok((net, history))
}
