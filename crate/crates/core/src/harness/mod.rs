//! Synthetic datasets, the training loop, PSNR evaluation and latency timing.

mod dataset;
mod train;

pub use dataset::{
    denormalize_phase, make_dataset, normalize_phase, split_sizes, Dataset, DatasetSpec, LabelSource, Sample, Split,
    PHASE_MAX,
};
pub use train::{
    crop_pair, evaluate, history_csv, measure_latency, psnr, summary_text, train, train_step, EpochRecord, Inference,
    Metrics, Predictor, StepLoss, TrainConfig, TrainOutcome, PSNR_CAP_DB,
};
pub(crate) use train::epoch_order;
