use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nirvana::codec::head::{HEAD_DELTA, HEAD_REUSE};
use nirvana::codec::read_container;
use nirvana::model::{GroupModel, HeadSpec, ModelConfig, WeightMode};
use nirvana::pipeline::{
    decode_chunk, decode_video, encode_chunked, encode_video, train_group, EncodeConfig,
    EncodeOutput, TrainState,
};
use nirvana::synth::{generate, SynthKind, SynthSpec};
use nirvana::tensor::Tensor;
use nirvana::video_io::{extract_volumes, patch_centroids, Video};
use nirvana::Error;

fn clip(kind: SynthKind, size: usize, frames: usize, seed: u64) -> Video {
    generate(&SynthSpec::new(kind, size, size, frames, seed)).unwrap()
}

fn quick(iters_first: usize, iters_rest: usize, lambda: f64) -> EncodeConfig {
    EncodeConfig {
        model: ModelConfig::tiny(),
        iters_first,
        iters_rest,
        lambda,
        seed: 1,
        ..EncodeConfig::default()
    }
}

fn encode(video: &Video, config: &EncodeConfig) -> EncodeOutput {
    encode_video(video, config).unwrap()
}

#[test]
fn one_group_video_has_no_residuals() {
    let out = encode(&clip(SynthKind::Translating, 32, 3, 1), &quick(40, 10, 1e-4));
    assert_eq!(out.report.groups.len(), 1);
    assert_eq!(out.group_latents.len(), 1);
    let c = read_container(out.bytes.clone()).unwrap();
    assert_eq!(c.payload_sizes().unwrap().len(), 1);
    assert_eq!(decode_video(out.bytes).unwrap().video, out.reconstruction);
}

#[test]
fn decoding_twice_is_identical() {
    let out = encode(&clip(SynthKind::Translating, 32, 6, 2), &quick(40, 10, 1e-4));
    let a = decode_video(out.bytes.clone()).unwrap();
    let b = decode_video(out.bytes.clone()).unwrap();
    assert_eq!(a.video.to_rgb24(), b.video.to_rgb24());
    assert_eq!(a.video, out.reconstruction);
}

#[test]
fn second_chunk_decodes_alone() {
    let video = clip(SynthKind::Translating, 32, 12, 3);
    let config = EncodeConfig {
        chunks: 2,
        ..quick(40, 10, 1e-4)
    };
    let out = encode_chunked(&video, &config, 1).unwrap();
    let c = read_container(out.bytes.clone()).unwrap();
    let second = decode_chunk(&c, 1).unwrap();
    assert_eq!(second.first_frame, 6);
    assert_eq!(second.frames.len(), 6);
    for (i, f) in second.frames.iter().enumerate() {
        assert_eq!(f.as_slice(), out.reconstruction.frame(6 + i));
    }
    assert_eq!(second.group_latents, out.group_latents[2..]);
}

#[test]
fn more_chunks_than_groups_is_rejected() {
    let video = clip(SynthKind::Static, 32, 6, 4);
    let config = EncodeConfig {
        chunks: 3,
        ..quick(5, 5, 1e-4)
    };
    assert!(matches!(encode_chunked(&video, &config, 1), Err(Error::InvalidConfig(_))));
}

#[test]
fn tampered_payload_is_corrupt() {
    let out = encode(&clip(SynthKind::Translating, 32, 6, 5), &quick(30, 10, 1e-4));
    let mut bytes = out.bytes;
    let at = bytes.len() - 6;
    bytes[at] ^= 0x01;
    assert!(matches!(decode_video(bytes), Err(Error::CorruptStream(_))));
}

#[test]
fn static_video_residuals_are_sparse() {
    let out = encode(&clip(SynthKind::Static, 32, 9, 6), &quick(300, 100, 1e-4));
    for w in out.group_latents.windows(2) {
        for (cur, prev) in w[1].iter().zip(&w[0]) {
            let zeros = cur.iter().zip(prev).filter(|(a, b)| a == b).count();
            assert!(2 * zeros > cur.len(), "{zeros} of {} residuals zero", cur.len());
        }
    }
    let g = &out.report.groups;
    let later: usize = g[1..].iter().map(|s| s.bytes).sum();
    assert!(4 * later < g[0].bytes, "{later} vs {}", g[0].bytes);
}

#[test]
fn head_is_frozen_unless_refined() {
    let video = clip(SynthKind::Translating, 32, 9, 7);
    let frozen = encode(&video, &quick(60, 30, 0.0));
    assert!(frozen.report.groups[1..].iter().all(|g| g.head_mode == HEAD_REUSE));

    let refined = encode(
        &video,
        &EncodeConfig {
            refine_head: true,
            ..quick(60, 30, 0.0)
        },
    );
    assert!(refined.report.groups[1..].iter().any(|g| g.head_mode == HEAD_DELTA));
    assert_eq!(decode_video(refined.bytes).unwrap().video, refined.reconstruction);
}

#[test]
fn entropy_weight_costs_distortion() {
    let cfg = ModelConfig {
        num_siren_layers: 2,
        width: 32,
        omega0: 30.0,
        patch_h: 8,
        patch_w: 8,
        group_size: 2,
        positional_base: 1.25,
        head: HeadSpec::for_patch(8, &[2]).unwrap(),
        latent_levels: 8.0,
    };
    let grid = patch_centroids(16, 16, (8, 8)).unwrap();
    let centroids = Tensor::new(vec![grid.len(), 2], grid.centroid_data()).unwrap();
    let final_mse = |lambda: f64, seed: u64| {
        let video = clip(SynthKind::Translating, 16, 2, seed);
        let targets = extract_volumes(&video, &grid, &[0, 1]);
        let settings = nirvana::pipeline::TrainSettings {
            lambda,
            ..quick(1, 1, 0.0).train_settings()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = TrainState::new(GroupModel::init(&cfg, seed).unwrap(), &mut rng);
        train_group(&mut state, &centroids, &targets, 300, &settings, &mut rng).unwrap();
        let out = state.model.forward(&centroids, WeightMode::Quantized).unwrap();
        out.data()
            .iter()
            .zip(&targets)
            .map(|(p, t)| f64::from(p - t).powi(2))
            .sum::<f64>()
            / targets.len() as f64
    };
    let free: f64 = (1..=3).map(|s| final_mse(0.0, s)).sum();
    let taxed: f64 = (1..=3).map(|s| final_mse(1e-4, s)).sum();
    assert!(free <= taxed, "λ=0 {free} vs λ=1e-4 {taxed}");
}
