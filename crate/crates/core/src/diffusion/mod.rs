//! Diffusion prior: noise schedule, denoisers and DDIM sampling.

mod denoiser;
mod mixture;
mod sampler;
mod schedule;

pub use denoiser::{
    time_embedding, train_denoiser, Denoiser, MlpDenoiser, TrainConfig, TrainedDenoiser,
    output_coefficients, HIDDEN, SIGMA_DATA, TIME_EMBED_DIM,
};
pub use mixture::GaussianMixture;
pub use sampler::{
    ddim_mean_nodes, ddim_reverse_from, ddim_sample, ddim_step, forward_sample,
    forward_with_noise, posterior_mean, posterior_mean_node, DdimNodes, PosteriorMode,
};
pub use schedule::NoiseSchedule;
