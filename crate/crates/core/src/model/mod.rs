//! The view inter-prediction model: section construction, the per-shape
//! memory bank, losses, and the adversarial training loop.

mod losses;
mod memory;
mod network;
mod sections;
mod train;

pub use losses::{loss_adversarial, loss_center, loss_discriminator, loss_neighbors, loss_total};
pub use memory::MemoryBank;
pub use network::{BoundGenerator, EncoderOutput, GeneratorNet, NetworkConfig, VipGanParams};
pub use sections::{build_sections, Section, ShapeSection};
pub use train::{
    all_sections, evaluate_shape, fit_known_test, fit_known_test_from, infer_unknown_test, pool, pooled_feature,
    predict_center, resize_image, train_epoch, train_step, EpochObserver, EpochRecord, HyperParams, PoolKind,
    ShapeViews, StepStats,
};
