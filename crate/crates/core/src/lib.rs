//! Learning-to-hash toolkit.
//!
//! Trains small feed-forward embedding networks with triplet objectives and
//! in-batch negative mining, binarizes the outputs to sign codes, and evaluates
//! retrieval (KNN accuracy and mAP) over either real-valued embeddings or a
//! bit-packed Hamming index.
//!
//! Module map:
//! - [`data`]: synthetic datasets, splits, and the `FEAT`/`BCOD`/CSV file formats.
//! - [`model`]: MLP forward/backward, Adam, JSON checkpoints.
//! - [`losses`]: triplet hinge loss, hash likelihood loss, quantization penalty.
//! - [`mining`]: P×K batch plans and the three in-batch triplet selectors.
//! - [`hashing`]: sign binarization, bit packing, Hamming search.
//! - [`eval`]: KNN accuracy, average precision, metrics reports.
//! - [`pipeline`]: training loops, α/λ schedules, run configuration.

pub mod data;
pub mod error;
pub mod eval;
pub mod hashing;
pub mod losses;
pub mod mining;
pub mod model;
pub mod pipeline;

pub use data::{BlobSpec, Dataset, FeatureFormat};
pub use error::{Error, Result};
pub use eval::{Metric, MetricsReport};
pub use hashing::{HammingIndex, PackedCodes};
pub use losses::{HashLossParams, Triplet, TripletSet};
pub use mining::{BatchPlan, SelectorKind};
pub use model::{AdamConfig, AdamState, ForwardCache, MlpParams};
pub use pipeline::{ScheduleSpec, TrainConfig, TrainHistory, TrainMode};
