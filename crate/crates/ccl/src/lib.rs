//! Cluster-wise contrastive learning (CCL) with a filtered negative queue and
//! momentum encoder, progressive source-to-target loss scheduling (PDA), and an
//! auxiliary cross-entropy loss on the amplitude spectrum of encoder features (FA).
//!
//! The numeric core is generic over the scalar type (`f32`/`f64`) through the
//! [`scalar::Scalar`] trait; the training stack and CLI run in double precision
//! via the aliases below.

pub mod clustering;
pub mod config;
pub mod data;
pub mod encoder;
pub mod evaluator;
pub mod fourier;
pub mod linalg;
pub mod losses;
pub mod memory;
pub mod model_io;
pub mod scalar;
pub mod schedule;
pub mod trainer;

use thiserror::Error;

/// Concrete scalar used by the training stack.
pub type Real = f64;
/// Double-precision vector, the working feature type.
pub type Vector = linalg::Vector<Real>;
/// Double-precision matrix.
pub type Matrix = linalg::Matrix<Real>;
/// Double-precision encoder.
pub type Encoder = encoder::Encoder<Real>;
/// Double-precision classifier head.
pub type ClassifierHead = losses::ClassifierHead<Real>;
/// Double-precision negative queue.
pub type NegativeQueue = memory::NegativeQueue<Real>;
/// Double-precision pseudo-labeling.
pub type PseudoLabeling = clustering::PseudoLabeling<Real>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("degenerate cluster: anchor has no usable negatives")]
    DegenerateCluster,
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("stale round: queue is at round {queue_round}, got {got}")]
    StaleRound { queue_round: u64, got: u64 },
    #[error("round id must increase: queue is at round {queue_round}, got {got}")]
    RoundOrder { queue_round: u64, got: u64 },
    #[error("zero-amplitude spectrum component without epsilon guard")]
    ZeroAmplitude,
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error("training aborted: {0}")]
    Abort(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
