//! Score-distillation gradients (SDS, VSD, PGSD) and the alternating
//! optimization of the texture field and the camera-aware score estimator.

mod engine;
mod gradient;
mod mode;

pub use engine::{
    canonical_cameras, canonical_renders, chain_to_field, distill, render_field, DistillConfig, DistillReport,
    DistillState, StepRecord, CANONICAL_AZIMUTHS, CANONICAL_ELEVATION,
};
pub use gradient::{model_input_backward, pgsd_gradient, phi_update, sds_gradient, to_model_input};
pub use mode::{ControlChoice, DistillKind, DistillMode, PhiSource, ABLATIONS};
