//! Local differential-privacy text rewriting and a size-varying
//! privacy/utility evaluation toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`]: documents, loaders, labeling helpers and deterministic splits.
//! * [`embeddings`]: word vectors, exact neighbor lists, document vectors and
//!   rank queries.
//! * [`mechanisms`]: word-level geometric rewriting, per-token temperature
//!   sampling and document-vector clip-and-noise.
//! * [`classifiers`]: featurization, multinomial logistic regression and
//!   micro-F1 based utility/adversary evaluation.
//! * [`metrics`]: relative gain and the nearest-neighbor indistinguishability
//!   score.
//! * [`stats`]: OLS, equal-width binning, Kruskal-Wallis and Dunn's test.
//! * [`harness`]: experiment configuration, the end-to-end pipeline and
//!   report rendering.

pub mod classifiers;
pub mod corpus;
pub mod embeddings;
pub mod harness;
pub mod mechanisms;
pub mod metrics;
pub mod seeding;
pub mod stats;
pub mod synthetic;

pub use corpus::{Corpus, Document, SplitSpec};
pub use embeddings::{EmbeddingTable, NeighborIndex};
pub use mechanisms::MechanismConfig;
pub use metrics::EvalRecord;
