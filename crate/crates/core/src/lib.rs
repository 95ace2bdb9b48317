//! Relightable texture transfer by personalized geometry-aware score
//! distillation.
//!
//! A neural BRDF field on a target mesh is optimized so that its renders
//! look, to a personalized normal-conditioned denoiser, like a handful of
//! exemplar images of a source object. Everything runs on the CPU with an
//! in-repo toy diffusion model.
//!
//! Module map:
//!
//! - [`geometry`]: meshes, cameras, the G-buffer rasterizer and condition images.
//! - [`shading`]: microfacet BRDF, discretized environment light, shading and its adjoint.
//! - [`field`]: hash-grid texture field, its optimizer and UV baking.
//! - [`diffusion`]: noise schedule, tokens, the denoiser, corpus and pretraining.
//! - [`personalize`]: few-shot fine-tuning bound to the `[V]` token.
//! - [`distill`]: SDS / VSD / PGSD gradients and the alternating optimization loop.
//! - [`pipeline`]: run configuration, weights files, metrics and commands.

pub mod diffusion;
pub mod distill;
pub mod error;
pub mod field;
pub mod geometry;
pub mod image;
pub mod personalize;
pub mod pipeline;
pub mod rng;
pub mod shading;

pub use error::{Error, Result};
