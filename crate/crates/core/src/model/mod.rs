//! The convolutional-recurrent attention classifier.
//!
//! Layer order: embedding, conv1d + ReLU, conv1d + ReLU, LSTM, attention,
//! global max pooling, dense + ReLU, dropout, dense. The network emits
//! logits; softmax is applied by the loss during training and by
//! [`DcnnModel::predict`] at inference.

mod search;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AspectLabel, Comment, Label, LabelField, Manifest};
use crate::tensor::{Activation, DropoutMode, ParamSet, Tape, Tensor, TensorError, Var};
use crate::textprep::EncodedSequence;

pub use search::{grid_search, rank_order, SearchData, SearchSpace, Trial, TrialTable};
pub use train::{train, EncodedSet, EpochRow, StepOutput, TrainRecord, TRAIN_CSV_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("{0} set is empty")]
    EmptyData(&'static str),
    #[error("expected sequences of length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("search space is empty: {0}")]
    EmptySpace(String),
    #[error("invalid search space: {0}")]
    BadSpace(String),
    #[error("bad model checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Which label the classifier predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Aspect,
    Polarity,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Aspect, Task::Polarity];

    pub fn name(self) -> &'static str {
        match self {
            Task::Aspect => "aspect",
            Task::Polarity => "polarity",
        }
    }

    pub fn field(self) -> LabelField {
        match self {
            Task::Aspect => LabelField::Aspect,
            Task::Polarity => LabelField::Polarity,
        }
    }

    /// 4 for aspect, the manifest's class count for polarity.
    pub fn num_classes(self, manifest: &Manifest) -> usize {
        match self {
            Task::Aspect => AspectLabel::ALL.len(),
            Task::Polarity => manifest.num_polarity_classes(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "aspect" => Ok(Task::Aspect),
            "polarity" => Ok(Task::Polarity),
            _ => Err(format!("unknown task '{s}' (expected aspect or polarity)")),
        }
    }
}

/// Token appended to polarity inputs to tell the model which aspect the
/// comment is about.
pub fn aspect_token(aspect: AspectLabel) -> String {
    format!("<aspect:{}>", aspect.name().to_ascii_lowercase())
}

/// Model input tokens for one comment. For polarity the text is cut to
/// `seq_len - 1` tokens so the aspect token always survives truncation.
pub fn task_tokens(mut tokens: Vec<String>, comment: &Comment, task: Task, seq_len: usize) -> Vec<String> {
    if task == Task::Polarity {
        tokens.truncate(seq_len.saturating_sub(1));
        tokens.push(aspect_token(comment.aspect));
    }
    tokens
}

/// Cuts `tokens` to `len`, keeping the final token in last place. Applied
/// to untruncated polarity inputs this equals [`task_tokens`] at `len`.
pub fn truncate_keep_last<S: AsRef<str>>(tokens: &[S], len: usize) -> Vec<String> {
    let owned = |t: &[S]| t.iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>();
    match tokens.split_last() {
        Some((last, head)) if tokens.len() > len && len > 0 => {
            let mut out = owned(&head[..len - 1]);
            out.push(last.as_ref().to_string());
            out
        }
        _ => owned(&tokens[..tokens.len().min(len)]),
    }
}

/// Missing keys take their [`Default`] values when deserialising.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub embed_dim: usize,
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub lstm_hidden: usize,
    pub dense_units: usize,
    pub dropout_rate: f64,
    pub num_classes: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 2,
            seq_len: 32,
            embed_dim: 64,
            conv1_filters: 32,
            conv1_kernel: 2,
            conv2_filters: 64,
            conv2_kernel: 2,
            lstm_hidden: 64,
            dense_units: 256,
            dropout_rate: 0.5,
            num_classes: 4,
            seed: 0,
            epochs: 50,
            batch_size: 32,
            patience: 5,
            learning_rate: 1e-2,
        }
    }
}

/// Output shape of one layer, as recorded by [`DcnnModel::shape_trace`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerShape {
    pub layer: &'static str,
    pub shape: Vec<usize>,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, num_classes: usize) -> Self {
        ModelConfig {
            vocab_size,
            num_classes,
            ..Self::default()
        }
    }

    pub fn for_task(task: Task, manifest: &Manifest, vocab_size: usize) -> Self {
        Self::new(vocab_size, task.num_classes(manifest))
    }

    /// Sequence length after both convolutions.
    pub fn conv_out_len(&self) -> usize {
        (self.seq_len + 2).saturating_sub(self.conv1_kernel + self.conv2_kernel)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::BadConfig(m));
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("seq_len", self.seq_len),
            ("embed_dim", self.embed_dim),
            ("conv1_filters", self.conv1_filters),
            ("conv1_kernel", self.conv1_kernel),
            ("conv2_filters", self.conv2_filters),
            ("conv2_kernel", self.conv2_kernel),
            ("lstm_hidden", self.lstm_hidden),
            ("dense_units", self.dense_units),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must cover the two reserved ids".into());
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if self.seq_len + 2 <= self.conv1_kernel + self.conv2_kernel {
            return bad(format!(
                "seq_len {} too short for kernels {} and {}",
                self.seq_len, self.conv1_kernel, self.conv2_kernel
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        Ok(())
    }

    /// Analytic per-layer parameter counts in layer order.
    pub fn layer_parameter_counts(&self) -> Vec<(&'static str, usize)> {
        let (d, h) = (self.embed_dim, self.lstm_hidden);
        let (f1, f2) = (self.conv1_filters, self.conv2_filters);
        vec![
            ("embedding", self.vocab_size * d),
            ("conv1", self.conv1_kernel * d * f1 + f1),
            ("conv2", self.conv2_kernel * f1 * f2 + f2),
            ("lstm", 4 * h * (f2 + h) + 4 * h),
            ("attention", h),
            ("global_max_pool", 0),
            ("dense1", h * self.dense_units + self.dense_units),
            ("dropout", 0),
            ("dense2", self.dense_units * self.num_classes + self.num_classes),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_parameter_counts().iter().map(|(_, n)| n).sum()
    }

    /// `key=value` pairs in field order; used to label and order grid trials.
    pub fn describe(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialises");
        value
            .as_object()
            .expect("config is an object")
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

// Parameter order inside the model's ParamSet.
const EMBEDDING: usize = 0;
const CONV1_K: usize = 1;
const CONV1_B: usize = 2;
const CONV2_K: usize = 3;
const CONV2_B: usize = 4;
const LSTM_W_IN: usize = 5;
const LSTM_W_HID: usize = 6;
const LSTM_B: usize = 7;
const ATTENTION: usize = 8;
const DENSE1_W: usize = 9;
const DENSE1_B: usize = 10;
const DENSE2_W: usize = 11;
const DENSE2_B: usize = 12;

const MODEL_FORMAT: &str = "absa-dcnn";
const MODEL_VERSION: u32 = 1;

/// Class ids and probability rows from [`DcnnModel::predict`].
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcnnModel {
    config: ModelConfig,
    params: ParamSet,
}

fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-limit..limit))
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl DcnnModel {
    /// Builds a freshly initialised network: embeddings uniform in
    /// (-0.05, 0.05), weight matrices Glorot-uniform, biases zero.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let (d, h, u) = (c.embed_dim, c.lstm_hidden, c.dense_units);
        let (k1, k2, f1, f2) = (c.conv1_kernel, c.conv2_kernel, c.conv1_filters, c.conv2_filters);
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut p = ParamSet::new();
        p.insert(
            "embedding",
            Tensor::from_fn(&[c.vocab_size, d], |_| rng.gen_range(-0.05..0.05)),
        );
        p.insert("conv1.kernel", glorot(&mut rng, &[k1, d, f1], k1 * d, k1 * f1));
        p.insert("conv1.bias", Tensor::zeros(&[f1]));
        p.insert("conv2.kernel", glorot(&mut rng, &[k2, f1, f2], k2 * f1, k2 * f2));
        p.insert("conv2.bias", Tensor::zeros(&[f2]));
        p.insert("lstm.w_in", glorot(&mut rng, &[f2, 4 * h], f2, 4 * h));
        p.insert("lstm.w_hid", glorot(&mut rng, &[h, 4 * h], h, 4 * h));
        p.insert("lstm.bias", Tensor::zeros(&[4 * h]));
        p.insert("attention.w", glorot(&mut rng, &[h], h, 1));
        p.insert("dense1.w", glorot(&mut rng, &[h, u], h, u));
        p.insert("dense1.b", Tensor::zeros(&[u]));
        p.insert("dense2.w", glorot(&mut rng, &[u, c.num_classes], u, c.num_classes));
        p.insert("dense2.b", Tensor::zeros(&[c.num_classes]));
        Ok(DcnnModel { config, params: p })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Puts every parameter on `tape` as a trainable leaf, in model order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.tensors().iter().map(|t| tape.param(t.clone())).collect()
    }

    fn check_batch(&self, batch: &[&EncodedSequence]) -> Result<()> {
        for s in batch {
            if s.ids.len() != self.config.seq_len {
                return Err(ModelError::ShapeMismatch {
                    expected: self.config.seq_len,
                    got: s.ids.len(),
                });
            }
        }
        Ok(())
    }

    /// Records the forward pass on `tape` and returns the `[B,C]` logits.
    ///
    /// Attention is restricted to convolution outputs that overlap at least
    /// one real token, i.e. the first `min(true_length, T)` steps (at least
    /// one).
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &[&EncodedSequence],
        mode: DropoutMode,
        dropout_seed: u64,
        mut trace: Option<&mut Vec<LayerShape>>,
    ) -> Result<Var> {
        self.check_batch(batch)?;
        let c = &self.config;
        let t_out = c.conv_out_len();
        let ids: Vec<Vec<usize>> = batch.iter().map(|s| s.ids.clone()).collect();
        let lengths: Vec<usize> = batch.iter().map(|s| s.true_length.clamp(1, t_out)).collect();

        let mut record = |tape: &Tape, layer: &'static str, v: Var| {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(LayerShape {
                    layer,
                    shape: tape.value(v).shape().to_vec(),
                });
            }
        };
        let x = tape.embedding(&ids, vars[EMBEDDING])?;
        record(tape, "embedding", x);
        let x = tape.conv1d(x, vars[CONV1_K], vars[CONV1_B])?;
        record(tape, "conv1", x);
        let x = tape.conv1d(x, vars[CONV2_K], vars[CONV2_B])?;
        record(tape, "conv2", x);
        let x = tape.lstm(x, vars[LSTM_W_IN], vars[LSTM_W_HID], vars[LSTM_B])?;
        record(tape, "lstm", x);
        let (x, _) = tape.attention(x, vars[ATTENTION], &lengths)?;
        record(tape, "attention", x);
        let x = tape.global_max_pool(x)?;
        record(tape, "global_max_pool", x);
        let x = tape.dense(x, vars[DENSE1_W], vars[DENSE1_B], Activation::Relu)?;
        record(tape, "dense1", x);
        let x = tape.dropout(x, c.dropout_rate, mode, dropout_seed)?;
        record(tape, "dropout", x);
        let x = tape.dense(x, vars[DENSE2_W], vars[DENSE2_B], Activation::None)?;
        record(tape, "dense2", x);
        Ok(x)
    }

    /// Per-layer output shapes for `batch` in eval mode.
    pub fn shape_trace(&self, batch: &[&EncodedSequence]) -> Result<Vec<LayerShape>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let mut trace = Vec::new();
        self.forward(&mut tape, &vars, batch, DropoutMode::Eval, 0, Some(&mut trace))?;
        Ok(trace)
    }

    /// Eval-mode logits for one batch as `[B,C]`.
    pub fn logits(&self, batch: &[&EncodedSequence]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.tensors().iter().map(|t| tape.constant(t.clone())).collect();
        let out = self.forward(&mut tape, &vars, batch, DropoutMode::Eval, 0, None)?;
        Ok(tape.value(out).clone())
    }

    /// Softmax probabilities and argmax labels, dropout off. Ties go to the
    /// lower class id.
    pub fn predict(&self, sequences: &[EncodedSequence]) -> Result<Prediction> {
        let c = self.config.num_classes;
        let mut labels = Vec::with_capacity(sequences.len());
        let mut probabilities = Vec::with_capacity(sequences.len());
        for chunk in sequences.chunks(self.config.batch_size.max(1)) {
            let refs: Vec<&EncodedSequence> = chunk.iter().collect();
            let logits = self.logits(&refs)?;
            let (probs, _) = crate::tensor::softmax_rows(logits.data(), refs.len(), c, None);
            for row in probs.chunks(c) {
                labels.push(argmax(row));
                probabilities.push(row.to_vec());
            }
        }
        Ok(Prediction { labels, probabilities })
    }

    pub fn to_checkpoint_value(&self) -> serde_json::Value {
        serde_json::json!({
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": self.config,
            "params": self.params.to_checkpoint_value(),
        })
    }

    pub fn to_checkpoint(&self) -> String {
        serde_json::to_string(&self.to_checkpoint_value()).expect("checkpoint serialises")
    }

    pub fn from_checkpoint_value(value: &serde_json::Value) -> Result<Self> {
        let bad = |m: String| ModelError::BadCheckpoint(m);
        if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT)
            || value.get("version").and_then(|v| v.as_u64()) != Some(MODEL_VERSION as u64)
        {
            return Err(bad(format!("expected {MODEL_FORMAT} v{MODEL_VERSION}")));
        }
        let config: ModelConfig = serde_json::from_value(value["config"].clone()).map_err(|e| bad(e.to_string()))?;
        let params = ParamSet::from_checkpoint_value(value["params"].clone()).map_err(|e| bad(e.to_string()))?;
        let mut model = DcnnModel::build(config)?;
        model.params.load_from(&params).map_err(|e| bad(e.to_string()))?;
        Ok(model)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
        Self::from_checkpoint_value(&value)
    }
}
