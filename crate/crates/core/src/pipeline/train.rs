use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{draw_noise, group_loss, GroupModel, LossBreakdown, WeightMode};
use crate::quant::ProbabilityModel;
use crate::tensor::{AdamParams, AdamState, Real, Tensor};

/// Adam step sizes per parameter family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub latent: f64,
    pub scale: f64,
    pub prob_model: f64,
    pub head: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            latent: 5e-4,
            scale: 1e-4,
            prob_model: 1e-4,
            head: 5e-4,
        }
    }
}

/// Optimizer settings shared by every group of an encode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub lambda: f64,
    pub lr: LearningRates,
    pub adam: AdamParams,
}

/// Trainable state carried from group to group within a chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T = f32> {
    pub model: GroupModel<T>,
    /// One per latent, in [`GroupModel::latents`] order.
    pub prob_models: Vec<ProbabilityModel<T>>,
}

/// Initial spread of a fresh probability model, in latent units.
pub const PROB_INIT_SCALE: f64 = 10.0;

impl<T: Real> TrainState<T> {
    pub fn new<R: Rng + ?Sized>(model: GroupModel<T>, rng: &mut R) -> Self {
        let prob_models = (0..model.latents().len())
            .map(|_| ProbabilityModel::new(PROB_INIT_SCALE, rng))
            .collect();
        Self { model, prob_models }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainStats {
    pub iterations: usize,
    /// Loss at the first step, `None` when no step ran.
    pub first: Option<LossBreakdown>,
    /// Loss at the last step, evaluated before its update.
    pub last: Option<LossBreakdown>,
}

/// Runs `iterations` full-batch Adam steps on one group.
///
/// Every step predicts with the rounded weights (straight-through gradients)
/// and charges the entropy of freshly perturbed latents. Optimizer moments
/// start from zero on each call.
pub fn train_group<T: Real, R: Rng + ?Sized>(
    state: &mut TrainState<T>,
    centroids: &Tensor<T>,
    targets: &[T],
    iterations: usize,
    settings: &TrainSettings,
    rng: &mut R,
) -> Result<TrainStats> {
    let mut stats = TrainStats {
        iterations,
        first: None,
        last: None,
    };
    if iterations == 0 {
        return Ok(stats);
    }
    let adam = settings.adam;
    let lr = settings.lr;
    let mut latent_opt: Vec<AdamState<T>> = state
        .model
        .latents()
        .iter()
        .map(|l| AdamState::new(l.len(), adam))
        .collect();
    // Scales are optimized as multiples of their starting values so the step size
    // is relative to each tensor's magnitude.
    let phi0: Vec<T> = state.model.latents().iter().map(|l| l.scale).collect();
    let mut rel = vec![T::one(); phi0.len()];
    let mut scale_opt = AdamState::new(phi0.len(), adam);
    let mut head_opt = AdamState::new(state.model.num_head_params(), adam);
    let mut pm_opt: Vec<AdamState<T>> = state
        .prob_models
        .iter()
        .map(|p| AdamState::new(p.params.len(), adam))
        .collect();
    let mut head = state.model.head_params();

    for it in 0..iterations {
        let noise = draw_noise(&state.model, rng);
        let (loss, grads) = group_loss(
            &state.model,
            centroids,
            targets,
            settings.lambda,
            &state.prob_models,
            &noise,
            WeightMode::Quantized,
        )?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: it,
                mse: loss.mse,
                entropy_bits: loss.entropy_bits,
            });
        }
        stats.first.get_or_insert(loss);
        stats.last = Some(loss);

        for ((lat, opt), g) in state
            .model
            .latents_mut()
            .into_iter()
            .zip(&mut latent_opt)
            .zip(&grads.surrogates)
        {
            opt.step(&mut lat.surrogate, g, lr.latent)?;
        }
        let g_rel: Vec<T> = grads.scales.iter().zip(&phi0).map(|(g, p)| *g * *p).collect();
        scale_opt.step(&mut rel, &g_rel, lr.scale)?;
        for ((lat, r), p) in state.model.latents_mut().into_iter().zip(&rel).zip(&phi0) {
            lat.scale = *p * *r;
        }
        head_opt.step(&mut head, &grads.head, lr.head)?;
        state.model.set_head_params(&head)?;
        for ((pm, opt), g) in state.prob_models.iter_mut().zip(&mut pm_opt).zip(&grads.models) {
            opt.step(&mut pm.params, g, lr.prob_model)?;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::{HeadSpec, ModelConfig};

    fn small() -> ModelConfig {
        ModelConfig {
            num_siren_layers: 2,
            width: 32,
            omega0: 30.0,
            patch_h: 8,
            patch_w: 8,
            group_size: 2,
            positional_base: 1.25,
            head: HeadSpec::for_patch(8, &[2]).unwrap(),
            latent_levels: 8.0,
        }
    }

    fn settings(lambda: f64) -> TrainSettings {
        TrainSettings {
            lambda,
            lr: LearningRates::default(),
            adam: AdamParams::default(),
        }
    }

    fn setup(seed: u64) -> (TrainState<f32>, Tensor<f32>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = GroupModel::init(&small(), seed).unwrap();
        let state = TrainState::new(model, &mut rng);
        let c = Tensor::new(vec![4, 2], vec![-0.5, -0.5, 0.5, -0.5, -0.5, 0.5, 0.5, 0.5]).unwrap();
        (state, c, rng)
    }

    #[test]
    fn zero_iterations_is_identity() {
        let (mut s, c, mut rng) = setup(1);
        let before = s.clone();
        let st = train_group(&mut s, &c, &vec![0.5; 4 * 2 * 64 * 3], 0, &settings(1e-4), &mut rng).unwrap();
        assert_eq!(s, before);
        assert!(st.first.is_none());
    }

    #[test]
    fn constant_color_descends() {
        let (mut s, c, mut rng) = setup(2);
        let target = vec![0.7f32; 4 * 2 * 64 * 3];
        let st = train_group(&mut s, &c, &target, 500, &settings(1e-4), &mut rng).unwrap();
        assert!(st.last.unwrap().mse < st.first.unwrap().mse);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let (mut s, c, mut rng) = setup(3);
        let mut target = vec![0.5f32; 4 * 2 * 64 * 3];
        target[7] = f32::NAN;
        let err = train_group(&mut s, &c, &target, 3, &settings(0.0), &mut rng).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { iteration: 0, .. }));
    }
}
