//! Model selection for abductive natural language inference.
//!
//! Two ways to score a frozen encoder on the task:
//!
//! * the similarity track ([`similarity`]) picks the hypothesis whose
//!   sentence embedding is closest (cosine) to the embedding of the
//!   observations; it needs no training and runs in seconds;
//! * the classification track ([`classifier`]) trains a linear softmax head
//!   on `(observations + hypothesis)` embeddings.
//!
//! [`stats`] measures how well the cheap track's accuracies predict the
//! expensive one's across encoders. Embeddings come in through the binary
//! store in [`store`], so no model runtime is linked here.

pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod similarity;
pub mod stats;
pub mod store;
pub mod synth;
pub mod tensor;

pub use classifier::{
    evaluate_clf, head_prob, init_head, loss_and_grad, predict_clf, train_head, HeadParams, TrainConfig, TrainHistory,
};
pub use dataset::{load_instances, load_labels, AnliInstance, FieldMap, Hypothesis};
pub use error::{Error, Result};
pub use similarity::{evaluate_sim, predict_sim, Prediction, Track, TrackResult};
pub use stats::{correlate_runs, pearson, spearman, t_p_value, CorrelationReport, ModelRun};
pub use store::{pool_store, read_embedding_store, write_embedding_store, EmbeddingRole, EmbeddingStore, StoreKind};
pub use tensor::{cosine, linear_forward, mean_pool, softmax, TokenMatrix, Vector};
