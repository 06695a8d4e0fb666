//! The product-of-experts VAE: per-domain encoders and decoders, Gaussian
//! expert fusion, the multinomial likelihood, and the training objectives.

mod gaussian;
mod inference;
mod network;
mod objective;

pub use gaussian::{kl_to_standard_normal, product_of_experts, GaussianPosterior};
pub use inference::{
    decode_domain, encode_domain, infer_latent, recommend, top_k, InferenceOptions,
};
pub use network::{DomainNetwork, Linear, ModelShape, PoeModel};
pub use objective::{
    elbo, multinomial_log_likelihood, subsampled_objective, LossConfig, UserFeedback,
};
