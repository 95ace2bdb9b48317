//! Microfacet shading under a frozen, discretized environment light.

mod brdf;
mod env;
mod material;
mod shade;

pub use brdf::{
    directional_albedo, eval_brdf, eval_terms, eval_with_jacobian, ggx_d, smith_visibility,
    BrdfJacobian, BrdfSample, BrdfTerms, LobeGeometry, DIELECTRIC_F0, ROUGHNESS_MIN,
};
pub use env::{
    discretize_environment, latlong_direction, preset_radiance, EnvPreset, EnvSource,
    EnvironmentLight,
};
pub use material::{palette_color, render_material, Pattern, ProceduralMaterial, PALETTE};
pub use shade::{
    compose, shade, shade_backward, shade_pixel_terms, shade_terms, tone_map, BrdfGradient,
    RenderedImage, GAMMA,
};
