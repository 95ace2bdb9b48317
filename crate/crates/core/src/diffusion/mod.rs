//! In-repo pixel-space diffusion model: noise schedule, token prompts, the
//! denoiser with control branches and camera encoder, guidance, ancestral
//! sampling, the procedural corpus and pretraining.

mod corpus;
mod denoiser;
pub mod nn;
mod sampling;
mod schedule;
mod tensor;
mod tokens;
mod train;

pub use corpus::{generate_corpus, shape_mesh, Corpus, CorpusSample, CorpusSpec, SHAPES};
pub use denoiser::{
    timestep_embedding, Conditioning, ControlInput, Denoiser, DenoiserCache, DenoiserConfig, ParamGroup,
    CAMERA_INPUT,
};
pub use sampling::{combine_guidance, guided_noise, sample, sampling_timesteps, standard_normal};
pub use schedule::NoiseSchedule;
pub use tensor::{silu, silu_grad, Tensor};
pub use tokens::{
    personalized_prompt, token_id, view_word, view_word_for, vocab_size, PromptTokens, IDENTIFIER, MAX_TOKENS,
    PAD, VIEW_WORDS, VOCABULARY,
};
pub use train::{
    class_prompt, denoising_loss, example_loss_and_grad, pretrain, train_step, DivergenceDetector, Example, TrainConfig,
    TrainReport,
};
