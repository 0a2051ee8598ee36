//! Neural protocol model: network, training, persistence.

mod adam;
mod io;
mod memory;
mod mlp;
mod model;
mod policy;
mod train;

pub use adam::Adam;
pub use io::{load_npm, npm_hash, save_npm};
pub use memory::{EpisodicMemory, MemoryRecord};
pub use mlp::{DenseLayer, MlpSegment, SegmentCache};
pub use model::{greedy_action, huber, huber_grad, Architecture, CycleForward, NpModel, TdSample, Q_WIDTH};
pub use policy::NpmPolicy;
pub use train::{
    metrics_csv, sanitize, train_npm, EpisodeMetrics, TrainConfig, TrainOutcome, Trainer, METRICS_CSV_HEADER,
};
