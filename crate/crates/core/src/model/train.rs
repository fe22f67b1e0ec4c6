use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{argmax, DcnnModel, ModelError, Result};
use crate::rng::derive_seed;
use crate::tensor::{softmax_rows, Adam, AdamConfig, DropoutMode, Optimizer, Tape, Tensor, TensorError};
use crate::textprep::{encode, EncodedSequence, Vocabulary};

pub const TRAIN_CSV_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;

/// Encoded sequences with one class id each.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EncodedSet {
    pub sequences: Vec<EncodedSequence>,
    pub labels: Vec<usize>,
}

impl EncodedSet {
    pub fn new(sequences: Vec<EncodedSequence>, labels: Vec<usize>) -> Self {
        assert_eq!(sequences.len(), labels.len(), "one label per sequence");
        EncodedSet { sequences, labels }
    }

    pub fn from_tokens<S: AsRef<str>>(docs: &[Vec<S>], labels: &[usize], vocab: &Vocabulary, seq_len: usize) -> Self {
        let sequences = docs.iter().map(|d| encode(d, vocab, seq_len)).collect();
        Self::new(sequences, labels.to_vec())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Learning curve of one training run. Equality ignores timings.
#[derive(Clone, Debug, Serialize)]
pub struct TrainRecord {
    pub rows: Vec<EpochRow>,
    /// Epoch whose parameters were restored (lowest validation loss).
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Seconds per epoch. Not part of the CSV so that reruns compare equal.
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

impl PartialEq for TrainRecord {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.best_epoch == other.best_epoch && self.stopped_early == other.stopped_early
    }
}

impl TrainRecord {
    pub fn best(&self) -> &EpochRow {
        &self.rows[self.best_epoch - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAIN_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc).unwrap();
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    /// Mean loss over the batch, before the update.
    pub loss: f64,
    pub correct: usize,
}

fn check_labels(set: &EncodedSet, classes: usize) -> Result<()> {
    match set.labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(ModelError::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}

impl DcnnModel {
    pub fn optimizer(&self) -> Adam {
        let config = AdamConfig {
            lr: self.config.learning_rate,
            ..AdamConfig::default()
        };
        Adam::new(config, self.params.tensors())
    }

    /// One forward/backward pass and Adam update on a single batch.
    pub fn train_step(
        &mut self,
        opt: &mut Adam,
        batch: &[&EncodedSequence],
        labels: &[usize],
        dropout_seed: u64,
    ) -> Result<StepOutput> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let logits = self.forward(&mut tape, &vars, batch, DropoutMode::Train, dropout_seed, None)?;
        let (loss, probs) = tape.softmax_cross_entropy(logits, labels)?;
        let c = self.config.num_classes;
        let correct = probs
            .data()
            .chunks(c)
            .zip(labels)
            .filter(|(row, &l)| argmax(row) == l)
            .count();
        let loss_value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        let grad_refs = vars.iter().map(|v| grads.get(*v)).collect::<Result<Vec<&Tensor>, TensorError>>()?;
        opt.step(self.params.tensors_mut(), &grad_refs)?;
        Ok(StepOutput {
            loss: loss_value,
            correct,
        })
    }

    /// Mean cross-entropy and accuracy with dropout off.
    pub fn evaluate(&self, set: &EncodedSet) -> Result<(f64, f64)> {
        if set.is_empty() {
            return Err(ModelError::EmptyData("evaluation"));
        }
        check_labels(set, self.config.num_classes)?;
        let c = self.config.num_classes;
        let (mut nll, mut correct) = (0.0, 0);
        for (seqs, labels) in set
            .sequences
            .chunks(self.config.batch_size)
            .zip(set.labels.chunks(self.config.batch_size))
        {
            let refs: Vec<&EncodedSequence> = seqs.iter().collect();
            let logits = self.logits(&refs)?;
            let (probs, batch_nll) = softmax_rows(logits.data(), refs.len(), c, Some(labels));
            nll += batch_nll;
            correct += probs.chunks(c).zip(labels).filter(|(row, &l)| argmax(row) == l).count();
        }
        let n = set.len() as f64;
        Ok((nll / n, correct as f64 / n))
    }
}

fn at_epoch(epoch: usize) -> impl Fn(ModelError) -> ModelError {
    move |e| match e {
        ModelError::Tensor(TensorError::NonFinite(_)) => ModelError::NonFiniteLoss { epoch },
        other => other,
    }
}

/// Mini-batch Adam with per-epoch seeded shuffling and early stopping on
/// validation loss. On return the model holds the parameters of the best
/// epoch.
pub fn train(model: &mut DcnnModel, train: &EncodedSet, val: &EncodedSet) -> Result<TrainRecord> {
    if train.is_empty() {
        return Err(ModelError::EmptyData("training"));
    }
    if val.is_empty() {
        return Err(ModelError::EmptyData("validation"));
    }
    let cfg = model.config.clone();
    check_labels(train, cfg.num_classes)?;
    check_labels(val, cfg.num_classes)?;

    let mut opt = model.optimizer();
    let mut rows = Vec::new();
    let mut epoch_seconds = Vec::new();
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed ^ SHUFFLE_STREAM, epoch as u64));
        order.shuffle(&mut rng);

        let (mut loss_sum, mut correct) = (0.0, 0);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&EncodedSequence> = chunk.iter().map(|&i| &train.sequences[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let seed = derive_seed(derive_seed(cfg.seed ^ DROPOUT_STREAM, epoch as u64), b as u64);
            let out = model
                .train_step(&mut opt, &batch, &labels, seed)
                .map_err(at_epoch(epoch))?;
            loss_sum += out.loss * chunk.len() as f64;
            correct += out.correct;
        }
        let (val_loss, val_acc) = model.evaluate(val).map_err(at_epoch(epoch))?;
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch });
        }
        rows.push(EpochRow {
            epoch,
            train_loss,
            train_acc: correct as f64 / train.len() as f64,
            val_loss,
            val_acc,
        });
        epoch_seconds.push(start.elapsed().as_secs_f64());

        if best.as_ref().map_or(true, |(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, model.params.tensors().to_vec()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    model.params.tensors_mut().clone_from_slice(&params);
    Ok(TrainRecord {
        rows,
        best_epoch,
        stopped_early,
        epoch_seconds,
    })
}
