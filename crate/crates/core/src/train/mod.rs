//! Datasets, initialisation, SGD and the experiment runners.

mod ablation;
mod config;
mod data;
mod experiment;
mod init;
mod sgd;

pub use ablation::{
    run_ablation, AblationCell, AblationColumn, AblationGrid, AblationTable, RunSummary, DEFAULT_SEEDS,
};
pub use config::{parse_key_values, TrainConfig};
pub use data::{
    gen_toy, load_fashion_mnist, load_idx, write_idx_images, write_idx_labels, DatasetSplit, ToyKind, IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC, PINWHEEL_RADIAL_STD, PINWHEEL_RATE, PINWHEEL_TANGENTIAL_STD,
};
pub use experiment::{build_activation, build_model, run_experiment, test_error, MetricsLog, StepRecord, EVAL_CHUNK};
pub use init::{init_weights, InitScheme};
pub use sgd::{Sgd, SgdConfig};
