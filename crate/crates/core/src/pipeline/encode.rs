use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{motion_proxy, mse, psnr_from_mse};
use super::train::{train_group, TrainState};
use super::{EncodeConfig, EncodeReport, GroupStats, StreamSettings};
use crate::codec::head::{
    apply_deltas, compress_deltas, raw_bytes, HEAD_DELTA, HEAD_RAW, HEAD_REUSE,
};
use crate::codec::{
    bpp, encode_container, residual, BitstreamHeader, ChunkEntry, GroupPayload, LatentKind,
    TensorPayload,
};
use crate::error::{Error, Result};
use crate::model::{GroupModel, WeightMode};
use crate::tensor::Tensor;
use crate::video_io::{
    assemble_frames, extract_volumes, group_frame_indices, num_groups, patch_centroids, PatchGrid,
    Video,
};

/// A finished encode: the stream bytes plus what the encoder itself reconstructs.
#[derive(Clone, Debug)]
pub struct EncodeOutput {
    pub bytes: Vec<u8>,
    pub report: EncodeReport,
    /// Frames exactly as the decoder will rebuild them.
    pub reconstruction: Video,
    /// Integer latents of every group, per tensor.
    pub group_latents: Vec<Vec<Vec<i32>>>,
}

/// Contiguous `(first group, group count)` ranges, earlier chunks taking the remainder.
pub fn chunk_partition(num_groups: usize, chunks: usize) -> Vec<(usize, usize)> {
    let chunks = chunks.clamp(1, num_groups.max(1));
    let base = num_groups / chunks;
    let extra = num_groups % chunks;
    let mut first = 0;
    (0..chunks)
        .map(|c| {
            let count = base + usize::from(c < extra);
            let r = (first, count);
            first += count;
            r
        })
        .collect()
}

/// Encodes every chunk in turn on the calling thread.
pub fn encode_video(video: &Video, config: &EncodeConfig) -> Result<EncodeOutput> {
    let start = Instant::now();
    let plan = Plan::new(video, config)?;
    let results = plan
        .chunks
        .iter()
        .map(|&(first, count)| encode_chunk(video, &plan.grid, config, first, count))
        .collect::<Result<Vec<_>>>()?;
    finish(video, config, &plan, results, start)
}

/// Encodes chunks concurrently on a pool of `workers` threads.
///
/// Kernel-level parallelism inside each chunk shares the same pool.
pub fn encode_chunked(video: &Video, config: &EncodeConfig, workers: usize) -> Result<EncodeOutput> {
    if workers == 0 {
        return Err(Error::InvalidConfig("need at least one worker".into()));
    }
    let start = Instant::now();
    let plan = Plan::new(video, config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let results = pool.install(|| {
        plan.chunks
            .par_iter()
            .map(|&(first, count)| encode_chunk(video, &plan.grid, config, first, count))
            .collect::<Result<Vec<_>>>()
    })?;
    finish(video, config, &plan, results, start)
}

struct Plan {
    grid: PatchGrid,
    chunks: Vec<(usize, usize)>,
}

impl Plan {
    fn new(video: &Video, config: &EncodeConfig) -> Result<Self> {
        let m = &config.model;
        let grid = patch_centroids(video.width(), video.height(), (m.patch_h, m.patch_w))?;
        if video.width() > u16::MAX as usize || video.height() > u16::MAX as usize {
            return Err(Error::InvalidConfig("frame dimensions must fit in 16 bits".into()));
        }
        let n_g = num_groups(video.num_frames(), m.group_size);
        config.validate(n_g)?;
        Ok(Self {
            grid,
            chunks: chunk_partition(n_g, config.chunks),
        })
    }
}

struct ChunkResult {
    payloads: Vec<Vec<u8>>,
    stats: Vec<GroupStats>,
    frames: Vec<Vec<f32>>,
    latents: Vec<Vec<Vec<i32>>>,
}

/// Seed of the chunk starting at `first_group`; chunk 0 uses the configured seed itself.
fn chunk_seed(seed: u64, first_group: usize) -> u64 {
    seed ^ (first_group as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Decoder-view frames of one group, clamped to `[0, 1]`.
pub fn reconstruct_frames(model: &GroupModel<f32>, grid: &PatchGrid) -> Result<Vec<Vec<f32>>> {
    let centroids = Tensor::new(vec![grid.len(), 2], grid.centroid_data())?;
    let out = model.forward(&centroids, WeightMode::Quantized)?;
    let clamped: Vec<f32> = out.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    assemble_frames(&clamped, grid, model.config.group_size)
}

fn volume_mse(model: &GroupModel<f32>, centroids: &Tensor<f32>, targets: &[f32]) -> Result<f64> {
    let out = model.forward(centroids, WeightMode::Quantized)?;
    let n = targets.len() as f64;
    Ok(out
        .data()
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let e = f64::from(*p) - f64::from(*t);
            e * e
        })
        .sum::<f64>()
        / n)
}

fn encode_chunk(
    video: &Video,
    grid: &PatchGrid,
    config: &EncodeConfig,
    first: usize,
    count: usize,
) -> Result<ChunkResult> {
    let g_size = config.model.group_size;
    let n = video.num_frames();
    let seed = chunk_seed(config.seed, first);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let model = GroupModel::<f32>::init(&config.model, seed)?;
    let mut state = TrainState::new(model, &mut rng);
    let centroids = Tensor::new(vec![grid.len(), 2], grid.centroid_data())?;
    let settings = config.train_settings();

    let mut out = ChunkResult {
        payloads: Vec::with_capacity(count),
        stats: Vec::with_capacity(count),
        frames: Vec::new(),
        latents: Vec::with_capacity(count),
    };
    // The model exactly as the decoder holds it after the previous group.
    let mut prev: Option<GroupModel<f32>> = None;
    for g in first..first + count {
        let sources = group_frame_indices(g, g_size, n);
        let targets = extract_volumes(video, grid, &sources);
        let iterations = if prev.is_none() {
            config.iters_first
        } else {
            config.iters_rest
        };
        let stats = if prev.is_none() || config.refine_head {
            train_group(&mut state, &centroids, &targets, iterations, &settings, &mut rng)?
        } else {
            // A zero rate leaves Adam's head update at exactly zero.
            let mut frozen = settings;
            frozen.lr.head = 0.0;
            train_group(&mut state, &centroids, &targets, iterations, &frozen, &mut rng)?
        };

        let (payload, head_mode, latents_reused) = match &prev {
            None => {
                let head = raw_bytes(&state.model.head_params());
                (group_payload(g, &state.model, None, HEAD_RAW, head)?, HEAD_RAW, false)
            }
            Some(p) => {
                let prev_head = p.head_params();
                let deltas: Vec<f32> = state
                    .model
                    .head_params()
                    .iter()
                    .zip(&prev_head)
                    .map(|(a, b)| a - b)
                    .collect();
                let packed = compress_deltas(&deltas)?;
                // The decoder sees `prev + delta`, which can differ from the trained head in the last bit.
                state.model.set_head_params(&apply_deltas(&prev_head, &deltas))?;
                let mse_update = volume_mse(&state.model, &centroids, &targets)?;
                let mut head_reuse = state.model.clone();
                head_reuse.set_head_params(&prev_head)?;
                let mse_head_reuse = volume_mse(&head_reuse, &centroids, &targets)?;
                let lambda = config.lambda;
                // Keep the previous head when the update does not pay for its own bits.
                let (head_mode, head_bytes, mse_update) =
                    if mse_head_reuse <= mse_update + lambda * 8.0 * packed.len() as f64 {
                        state.model = head_reuse;
                        (HEAD_REUSE, Vec::new(), mse_head_reuse)
                    } else {
                        (HEAD_DELTA, packed, mse_update)
                    };
                let update = group_payload(g, &state.model, Some(p), head_mode, head_bytes)?;
                // Same test for the group as a whole: zero residuals reproduce the previous model.
                let skip = group_payload(g, p, Some(p), HEAD_REUSE, Vec::new())?;
                let mse_skip = volume_mse(p, &centroids, &targets)?;
                let cost = |mse: f64, bytes: &[u8]| mse + lambda * 8.0 * bytes.len() as f64;
                if cost(mse_skip, &skip) <= cost(mse_update, &update) {
                    state.model = p.clone();
                    (skip, HEAD_REUSE, true)
                } else {
                    (update, head_mode, false)
                }
            }
        };
        let latents: Vec<Vec<i32>> = state.model.latents().iter().map(|l| l.latent()).collect();

        let frames = reconstruct_frames(&state.model, grid)?;
        let real = (n - g * g_size).min(g_size);
        let originals: Vec<Vec<f32>> = sources[..real].iter().map(|&f| video.frame(f).to_vec()).collect();
        let group_mse = mse(&originals, &frames[..real])?;
        let motion: Vec<f64> = sources[..real]
            .iter()
            .filter(|&&f| f > 0)
            .map(|&f| mse(&[video.frame(f - 1).to_vec()], &[video.frame(f).to_vec()]))
            .collect::<Result<_>>()?;

        out.stats.push(GroupStats {
            index: g,
            psnr_db: psnr_from_mse(group_mse),
            bytes: payload.len() + 8,
            mse: group_mse,
            entropy_bits: stats.last.map_or(0.0, |l| l.entropy_bits),
            motion_mse: if motion.is_empty() {
                0.0
            } else {
                motion.iter().sum::<f64>() / motion.len() as f64
            },
            head_mode,
            latents_reused,
            iterations,
        });
        out.frames.extend(frames.into_iter().take(real));
        out.payloads.push(payload);
        prev = Some(state.model.clone());
        out.latents.push(latents);
    }
    Ok(out)
}

/// Serialized payload of group `g`: absolute latents, or residuals against `prev`.
fn group_payload(
    g: usize,
    model: &GroupModel<f32>,
    prev: Option<&GroupModel<f32>>,
    head_mode: u8,
    head: Vec<u8>,
) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    for (i, q) in model.latents().iter().enumerate() {
        let lat = q.latent();
        let symbols = match prev {
            None => lat.iter().map(|&v| i64::from(v)).collect(),
            Some(p) => residual(&lat, &p.latents()[i].latent())?,
        };
        tensors.push(TensorPayload::encode(q.scale, &symbols)?);
    }
    Ok(GroupPayload {
        group_index: g as u32,
        kind: if prev.is_none() {
            LatentKind::Absolute
        } else {
            LatentKind::Residual
        },
        tensors,
        head_mode,
        head,
    }
    .to_bytes())
}

fn finish(
    video: &Video,
    config: &EncodeConfig,
    plan: &Plan,
    results: Vec<ChunkResult>,
    start: Instant,
) -> Result<EncodeOutput> {
    let m = &config.model;
    let header = BitstreamHeader {
        num_frames: u32::try_from(video.num_frames())
            .map_err(|_| Error::InvalidConfig("too many frames".into()))?,
        height: video.height() as u16,
        width: video.width() as u16,
        patch_h: m.patch_h as u8,
        patch_w: m.patch_w as u8,
        group_size: m.group_size as u8,
        config_digest: m.digest(),
        chunks: plan
            .chunks
            .iter()
            .map(|&(first, count)| ChunkEntry {
                first_group: first as u32,
                group_count: count as u32,
                offset: 0,
            })
            .collect(),
        config_block: StreamSettings::from_config(config).to_bytes(),
    };
    let payloads: Vec<Vec<Vec<u8>>> = results.iter().map(|r| r.payloads.clone()).collect();
    let bytes = encode_container(&header, &payloads)?;

    let mut groups = Vec::new();
    let mut frames = Vec::with_capacity(video.num_frames());
    let mut group_latents = Vec::new();
    for r in results {
        groups.extend(r.stats);
        frames.extend(r.frames);
        group_latents.extend(r.latents);
    }
    let reconstruction = Video::new(video.width(), video.height(), frames)?;
    let total_mse = mse(video.frames(), reconstruction.frames())?;
    let motion_mean = motion_proxy(video).map_or(0.0, |m| m.mean);
    let report = EncodeReport {
        groups,
        psnr_db: psnr_from_mse(total_mse),
        mse: total_mse,
        bpp: bpp(bytes.len() as u64, video.num_frames(), video.height(), video.width()),
        file_bytes: bytes.len(),
        seconds: start.elapsed().as_secs_f64(),
        motion_mean,
    };
    Ok(EncodeOutput {
        bytes,
        report,
        reconstruction,
        group_latents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_covers_groups() {
        assert_eq!(chunk_partition(6, 2), vec![(0, 3), (3, 3)]);
        assert_eq!(chunk_partition(5, 2), vec![(0, 3), (3, 2)]);
        assert_eq!(chunk_partition(4, 1), vec![(0, 4)]);
        assert_eq!(chunk_partition(3, 3), vec![(0, 1), (1, 1), (2, 1)]);
    }

    #[test]
    fn chunk_seeds_distinct() {
        assert_eq!(chunk_seed(5, 0), 5);
        assert_ne!(chunk_seed(5, 1), chunk_seed(5, 2));
    }
}
