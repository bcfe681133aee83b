//! Collapsed posterior inference.

pub mod cache;
pub mod chain;
pub mod collapsed;
pub mod sampler;

pub use cache::CountCache;
pub use chain::{initial_state, run_chain, run_chain_with, ChainConfig, PosteriorSamples};
pub use collapsed::{
    label_distribution, log_beta, log_marginal_w_column, log_marginal_w_count, log_predictive,
    posterior_mean_qtilde, predictive_x, predictive_y,
};
pub use sampler::Sampler;
