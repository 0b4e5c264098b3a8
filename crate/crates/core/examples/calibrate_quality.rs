//! 64-bit reference run behind the quality floor of the acceptance suite.
//!
//! Trains every group of the 64×64×12 translating clip in `f64` with warm
//! starts, the tiny config and the default entropy weight, then prints the
//! PSNR of the rounded-weight reconstruction. As in the encoder, the head is
//! frozen after the first group. Nothing is entropy coded, so no group can
//! fall back to reusing its predecessor.
//!
//! `cargo run --release --example calibrate_quality`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nirvana::model::{GroupModel, ModelConfig, WeightMode};
use nirvana::pipeline::{psnr_from_mse, train_group, EncodeConfig, TrainState};
use nirvana::synth::{generate, SynthKind, SynthSpec};
use nirvana::tensor::Tensor;
use nirvana::video_io::{extract_volumes, group_frame_indices, num_groups, patch_centroids};

const SEED: u64 = 10;
const ITERS_FIRST: usize = 4000;
const ITERS_REST: usize = 500;

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

fn main() -> nirvana::Result<()> {
    let video = generate(&SynthSpec::new(SynthKind::Translating, 64, 64, 12, SEED))?;
    let cfg = ModelConfig::tiny();
    let encode = EncodeConfig {
        model: cfg.clone(),
        ..EncodeConfig::default()
    };
    let settings = encode.train_settings();
    let grid = patch_centroids(64, 64, (cfg.patch_h, cfg.patch_w))?;
    let centroids = Tensor::new(vec![grid.len(), 2], widen(&grid.centroid_data()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut state = TrainState::new(GroupModel::<f64>::init(&cfg, SEED)?, &mut rng);
    let groups = num_groups(video.num_frames(), cfg.group_size);
    let mut total = 0.0;
    for g in 0..groups {
        let frames = group_frame_indices(g, cfg.group_size, video.num_frames());
        let targets = widen(&extract_volumes(&video, &grid, &frames));
        let iters = if g == 0 { ITERS_FIRST } else { ITERS_REST };
        let mut s = settings;
        if g > 0 {
            s.lr.head = 0.0;
        }
        train_group(&mut state, &centroids, &targets, iters, &s, &mut rng)?;
        let out = state.model.forward(&centroids, WeightMode::Quantized)?;
        let mse = out
            .data()
            .iter()
            .zip(&targets)
            .map(|(p, t)| (p.clamp(0.0, 1.0) - t).powi(2))
            .sum::<f64>()
            / targets.len() as f64;
        println!("group {g}: psnr {:.2} dB", psnr_from_mse(mse));
        total += mse;
    }
    println!("video psnr {:.2} dB", psnr_from_mse(total / groups as f64));
    Ok(())
}
