//! Hash-grid encoded BRDF field over the normalized bounding box, with
//! exact reverse-mode gradients, a lazy Adam optimizer and UV baking.

mod bake;
mod grid;
mod mlp;
mod optim;
mod texture;

pub use bake::{bake, BakedTextures};
pub use grid::{corner_lookup, spatial_hash, HashGridConfig, HASH_PRIMES};
pub use mlp::{sigmoid, Activation, Mlp, MlpCache, MlpSpec};
pub use optim::{AdamConfig, FieldOptimizer};
pub use texture::{FieldCache, FieldGradients, TextureField, HEAD_CHANNELS};
