//! Toy denoising backbone, noise schedule, sampler, and latent decoder.

mod config;
mod model;
mod params;
mod sampler;
mod schedule;

pub use config::BackboneConfig;
pub use model::{position_embedding, time_embedding, Conditions, ForwardVars, Model};
pub use params::{
    block_prefix, BlockParams, BlockVars, BoundParams, ContentAttnParams, ContentAttnVars,
    MlpParams, MlpVars, ModelParams, SelfAttnParams, SelfAttnVars,
};
pub use sampler::{add_noise, decode, sample, NoisePredictor};
pub use schedule::NoiseSchedule;
