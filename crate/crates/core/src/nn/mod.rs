//! Minimal deterministic neural-network engine: layers, a backbone with a
//! dedicated FC1 feature layer, both loss functions, the adaptive-rate
//! momentum optimizer, and finite-difference gradient verification.

mod backbone;
mod gdx;
mod gradcheck;
mod layers;
mod loss;
mod train;

pub use backbone::{BackboneNet, BackwardPass, ForwardPass, Gradients};
pub use gdx::{GdxConfig, GdxState, StepOutcome};
pub use gradcheck::{grad_check, grad_check_against, GradCheckReport, LayerCheck};
pub use layers::{LayerSpec, WeightInit};
pub use loss::{binary_ce_loss, multiclass_ce_loss, LOG_CLAMP_EPSILON};
pub use train::{train_backbone, AugmentConfig, TrainConfig, TrainReport};

pub(crate) use layers::Dense;
