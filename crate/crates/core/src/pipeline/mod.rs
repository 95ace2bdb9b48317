//! Run configuration, checkpoint files, evaluation metrics and the
//! end-to-end commands.

pub mod commands;
mod config;
mod metrics;
mod stages;
mod weights;

pub use commands::{run, transfer_dir, Command};
pub use config::{
    DiffusionSection, DistillSection, EvalSection, ExemplarSection, FieldSection, GeometrySection, LightingSection,
    PersonalizeSection, RunConfig, ScheduleSection, FULL_SCALE_CAMERA_EMBED_WIDTH, FULL_SCALE_CROP,
};
pub use metrics::{
    appearance_similarity, chi_squared, colour_histograms, diversity, gradient_histogram, normal_alignment,
    pair_similarity, render_difference, EvalReport, MaskedImage, ViewScore,
};
pub use stages::{
    albedo_image, build_environment, canonical_masked_renders, energy_split, evaluate_field, exemplar_targets,
    exemplar_views, load_target_mesh, new_denoiser, new_field, render_baked, render_exemplars, run_environment,
    run_transfer, TransferOutcome,
};
pub use weights::{
    denoiser_from_weights, denoiser_to_weights, field_from_weights, field_to_weights, ArrayData, NamedArray,
    WeightsFile, DENOISER_KIND, FIELD_KIND, MAGIC,
};
