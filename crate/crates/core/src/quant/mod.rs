//! Quantized latent weights, the learned probability model used as a rate
//! proxy during training, and post-training frequency tables.

mod freq;
mod latent;
mod prob;

pub use freq::FrequencyTable;
pub use latent::{decode_latent, noisy_sample, ste_round, ste_round_backward, QuantizedLatent};
pub use prob::{entropy_loss, entropy_loss_with_noise, EntropyGrads, ProbabilityModel, LIKELIHOOD_FLOOR, PM_PARAMS};
