//! Aspect-based sentiment analysis for low-resource review corpora.
//!
//! The crate covers the full pipeline: corpus loading and splitting
//! ([`corpus`]), text cleanup and featurisation ([`textprep`]), a small
//! reverse-mode autodiff engine ([`tensor`]), the convolutional-recurrent
//! attention classifier built on it ([`model`]), four classical baselines
//! over TF-IDF features ([`baselines`]) and confusion-matrix metrics
//! ([`metrics`]).

pub mod baselines;
pub mod corpus;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod textprep;

pub use baselines::{BaselineConfig, BaselineKind, BaselineModel};
pub use corpus::{AspectLabel, Comment, Dataset, LabelField, LanguageTag, Manifest, PolarityLabel};
pub use matrix::Matrix;
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use model::{DcnnModel, ModelConfig, ModelError, Task, TrainRecord};
pub use rng::derive_seed;
pub use tensor::{Tape, Tensor, TensorError, Var};
