use std::path::Path;

use super::encode::reconstruct_frames;
use super::StreamSettings;
use crate::codec::head::{apply_deltas, decompress_deltas, from_raw_bytes, HEAD_DELTA, HEAD_RAW, HEAD_REUSE};
use crate::codec::{accumulate, read_container, read_container_file, Container, GroupPayload, LatentKind};
use crate::error::{Error, Result};
use crate::model::GroupModel;
use crate::video_io::{num_groups, patch_centroids, Video};

#[derive(Clone, Debug)]
pub struct DecodedChunk {
    /// Index of the first real frame of this chunk in the video.
    pub first_frame: usize,
    pub frames: Vec<Vec<f32>>,
    /// Cumulative integer latents of every group, per tensor.
    pub group_latents: Vec<Vec<Vec<i32>>>,
}

#[derive(Clone, Debug)]
pub struct DecodedVideo {
    pub video: Video,
    pub group_latents: Vec<Vec<Vec<i32>>>,
}

/// Parses and checks the configuration block against the header.
pub fn stream_settings(container: &Container) -> Result<StreamSettings> {
    let h = &container.header;
    let s = StreamSettings::from_bytes(&h.config_block)?;
    let m = &s.model;
    if m.digest() != h.config_digest {
        return Err(Error::CorruptStream("configuration digest mismatch".into()));
    }
    if m.patch_h != h.patch_h as usize || m.patch_w != h.patch_w as usize || m.group_size != h.group_size as usize {
        return Err(Error::CorruptStream("header disagrees with model configuration".into()));
    }
    Ok(s)
}

/// Rebuilds the frames of chunk `chunk` without touching other chunks' payloads.
pub fn decode_chunk(container: &Container, chunk: usize) -> Result<DecodedChunk> {
    let settings = stream_settings(container)?;
    let h = &container.header;
    let cfg = &settings.model;
    let n = h.num_frames as usize;
    let grid = patch_centroids(h.width as usize, h.height as usize, (cfg.patch_h, cfg.patch_w))
        .map_err(|e| Error::CorruptStream(format!("stored geometry invalid: {e}")))?;
    let entry = *h
        .chunks
        .get(chunk)
        .ok_or_else(|| Error::InvalidConfig(format!("stream has no chunk {chunk}")))?;
    let bodies = container.chunk_payloads(chunk)?;

    // Shapes come from a template network; its values are all overwritten.
    let mut model = GroupModel::<f32>::init(cfg, 0)?;
    let g_size = cfg.group_size;
    let mut out = DecodedChunk {
        first_frame: entry.first_group as usize * g_size,
        frames: Vec::new(),
        group_latents: Vec::with_capacity(bodies.len()),
    };
    let mut prev: Option<Vec<Vec<i32>>> = None;
    let mut prev_head: Option<Vec<f32>> = None;
    for (k, body) in bodies.into_iter().enumerate() {
        let g = entry.first_group as usize + k;
        let p = GroupPayload::from_bytes(body)?;
        if p.group_index as usize != g {
            return Err(Error::CorruptStream(format!(
                "payload for group {} found in slot {g}",
                p.group_index
            )));
        }
        let expected = if k == 0 { LatentKind::Absolute } else { LatentKind::Residual };
        if p.kind != expected {
            return Err(Error::CorruptStream(format!("group {g} has latent kind {:?}", p.kind)));
        }
        let n_latents = model.latents().len();
        if p.tensors.len() != n_latents {
            return Err(Error::CorruptStream(format!(
                "group {g} carries {} tensors, model has {n_latents}",
                p.tensors.len()
            )));
        }
        let mut latents = Vec::with_capacity(n_latents);
        for (i, (t, lat)) in p.tensors.iter().zip(model.latents_mut()).enumerate() {
            let symbols = t.decode_symbols(lat.len())?;
            let values = match &prev {
                None => symbols
                    .iter()
                    .map(|&s| {
                        i32::try_from(s).map_err(|_| Error::CorruptStream("latent exceeds 32 bits".into()))
                    })
                    .collect::<Result<Vec<i32>>>()?,
                Some(prev) => accumulate(&prev[i], &symbols)?,
            };
            for (s, v) in lat.surrogate.iter_mut().zip(&values) {
                *s = *v as f32;
            }
            lat.scale = t.scale;
            latents.push(values);
        }

        let count = model.num_head_params();
        let head = match (p.head_mode, &prev_head) {
            (HEAD_RAW, None) => from_raw_bytes(&p.head, count)?,
            (HEAD_DELTA, Some(base)) => apply_deltas(base, &decompress_deltas(&p.head, count)?),
            (HEAD_REUSE, Some(base)) if p.head.is_empty() => base.clone(),
            (mode, _) => {
                return Err(Error::CorruptStream(format!("head mode {mode} invalid for group {g}")))
            }
        };
        model.set_head_params(&head)?;

        let frames = reconstruct_frames(&model, &grid)?;
        let real = n.saturating_sub(g * g_size).min(g_size);
        out.frames.extend(frames.into_iter().take(real));
        prev_head = Some(head);
        prev = Some(latents.clone());
        out.group_latents.push(latents);
    }
    Ok(out)
}

pub fn decode_container(container: &Container) -> Result<DecodedVideo> {
    let h = &container.header;
    let n = h.num_frames as usize;
    if n == 0 {
        return Err(Error::CorruptStream("stream holds no frames".into()));
    }
    debug_assert_eq!(h.num_groups(), num_groups(n, h.group_size as usize));
    let mut frames = Vec::with_capacity(n);
    let mut group_latents = Vec::new();
    for c in 0..h.chunks.len() {
        let chunk = decode_chunk(container, c)?;
        frames.extend(chunk.frames);
        group_latents.extend(chunk.group_latents);
    }
    if frames.len() != n {
        return Err(Error::CorruptStream(format!("decoded {} of {n} frames", frames.len())));
    }
    Ok(DecodedVideo {
        video: Video::new(h.width as usize, h.height as usize, frames)?,
        group_latents,
    })
}

/// Decodes a whole stream held in memory.
pub fn decode_video(bytes: Vec<u8>) -> Result<DecodedVideo> {
    decode_container(&read_container(bytes)?)
}

impl DecodedVideo {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        decode_container(&read_container_file(path)?)
    }
}
