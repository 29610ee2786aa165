//! Synthetic corpus, configuration, training, evaluation, persistence and
//! diagnostics.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod gradcheck;
pub mod io;
pub mod norms;
pub mod train;

pub use checkpoint::{best_checkpoint_path, load_checkpoint, save_checkpoint, Checkpoint, ScheduleState};
pub use config::{Config, Preset, TrainConfig};
pub use corpus::{
    gen_synthetic_corpus, Dataset, GroundTruth, QueryRecord, Split, SyntheticCorpus,
    SyntheticCorpusSpec, VideoRecord,
};
pub use eval::{evaluate_retrieval, rank, rank_of, rank_order, split_queries, MetricsReport};
pub use gradcheck::{gradcheck_module, gradcheck_suite, GradcheckSettings, ModuleGradcheck};
pub use io::{load_dataset, load_ground_truth, save_corpus, save_dataset};
pub use norms::{inspect_norms, NormReport};
pub use train::{resume, train, train_with_progress, EpochRecord, TrainOutcome};
