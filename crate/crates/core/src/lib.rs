//! Time-aware generative model of event sequences with a latent class and
//! a monotone latent stage, fit by EM over exact dynamic-programming
//! posteriors.
//!
//! The crate covers the full pipeline: model parameters and validation
//! ([`model`]), interval distributions ([`timedist`]), exact inference
//! ([`inference`]), EM fitting ([`em`]), sampling of random models and
//! sequences ([`generator`]), JSONL data I/O ([`dataset`]), prediction,
//! classification and representative extraction ([`predict`]), and a
//! synthetic recovery experiment ([`experiment`]).

pub mod dataset;
pub mod em;
pub mod error;
pub mod experiment;
pub mod generator;
pub mod inference;
pub mod math;
pub mod model;
pub mod predict;
pub mod report;
pub mod timedist;

pub use dataset::{parse_dataset, parse_dataset_with_vocab, write_dataset, Dataset, SequenceRecord};
pub use em::{fit, FitConfig, FitTrace, InitMode};
pub use error::{Error, Result};
pub use experiment::{run_synthetic_experiment, ExperimentRow, SyntheticConfig};
pub use generator::{sample_model, sample_sequence, ModelHyperPrior};
pub use inference::{posteriors, sequence_log_likelihood, PosteriorTables};
pub use model::{
    log_joint, validate_model, ActionVocab, EventSequence, ModelParams, StageRange, END_LABEL,
};
pub use predict::{
    classify, evaluate_mae, mae_table, predict_next_time, representatives, BaselineTables,
    PredictConfig, PredictionMode,
};
pub use timedist::{TimeDist, TimeFamily};
