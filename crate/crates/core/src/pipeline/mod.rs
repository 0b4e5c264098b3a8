//! End-to-end encoding and decoding of whole videos.
//!
//! Frame groups are fitted one after another; each group starts from the
//! previous group's trained state and ships only latent residuals. Groups can
//! be split into independent chunks that encode in parallel.

mod decode;
mod encode;
mod metrics;
mod train;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use decode::{decode_chunk, decode_container, decode_video, stream_settings, DecodedChunk, DecodedVideo};
pub use encode::{
    chunk_partition, encode_chunked, encode_video, reconstruct_frames, EncodeOutput,
};
pub use metrics::{motion_proxy, mse, psnr, psnr_from_mse, MotionProxy};
pub use train::{train_group, LearningRates, TrainSettings, TrainState, TrainStats, PROB_INIT_SCALE};

use crate::codec::head::COMPRESSOR_LZMA_SHUFFLED;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::AdamParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeConfig {
    pub model: ModelConfig,
    /// Iterations for the first group of every chunk.
    pub iters_first: usize,
    /// Iterations for warm-started groups.
    pub iters_rest: usize,
    /// Weight of the entropy term in `MSE + λ · bits`.
    pub lambda: f64,
    pub lr: LearningRates,
    pub adam: AdamParams,
    pub chunks: usize,
    pub seed: u64,
    /// Keep training the convolutional head after a chunk's first group and
    /// send its delta whenever that beats reusing the previous head. Off by
    /// default: uncompressed head deltas cost more than all latent residuals
    /// at small scale, and the latents adapt to a frozen head instead.
    pub refine_head: bool,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            iters_first: 16000,
            iters_rest: 2000,
            lambda: 1e-4,
            lr: LearningRates::default(),
            adam: AdamParams::default(),
            chunks: 1,
            seed: 0,
            refine_head: false,
        }
    }
}

impl EncodeConfig {
    pub fn validate(&self, num_groups: usize) -> Result<()> {
        self.model.validate()?;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.iters_first == 0 || self.iters_rest == 0 {
            return bad("iteration counts must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be finite and non-negative", self.lambda));
        }
        let lr = &self.lr;
        if [lr.latent, lr.scale, lr.prob_model, lr.head]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return bad("learning rates must be finite and non-negative".into());
        }
        if self.chunks == 0 || self.chunks > num_groups {
            return bad(format!(
                "chunk count {} must lie in 1..={num_groups}",
                self.chunks
            ));
        }
        Ok(())
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            lambda: self.lambda,
            lr: self.lr,
            adam: self.adam,
        }
    }
}

/// Settings recorded in the stream header's configuration block.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamSettings {
    pub model: ModelConfig,
    pub compressor: u8,
    /// The remaining fields are informational.
    pub lambda: f64,
    pub iters_first: u32,
    pub iters_rest: u32,
    pub seed: u64,
}

impl StreamSettings {
    fn from_config(c: &EncodeConfig) -> Self {
        Self {
            model: c.model.clone(),
            compressor: COMPRESSOR_LZMA_SHUFFLED,
            lambda: c.lambda,
            iters_first: c.iters_first.min(u32::MAX as usize) as u32,
            iters_rest: c.iters_rest.min(u32::MAX as usize) as u32,
            seed: c.seed,
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.model.to_bytes();
        out.push(self.compressor);
        out.extend_from_slice(&self.lambda.to_le_bytes());
        out.extend_from_slice(&self.iters_first.to_le_bytes());
        out.extend_from_slice(&self.iters_rest.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out
    }

    fn from_bytes(buf: &[u8]) -> Result<Self> {
        let (model, pos) = ModelConfig::from_bytes(buf)?;
        let rest = &buf[pos..];
        if rest.len() != 1 + 8 + 4 + 4 + 8 {
            return Err(Error::CorruptStream("configuration block has wrong length".into()));
        }
        let compressor = rest[0];
        if compressor != COMPRESSOR_LZMA_SHUFFLED {
            return Err(Error::CorruptStream(format!("unknown compressor {compressor}")));
        }
        Ok(Self {
            model,
            compressor,
            lambda: f64::from_le_bytes(rest[1..9].try_into().unwrap()),
            iters_first: u32::from_le_bytes(rest[9..13].try_into().unwrap()),
            iters_rest: u32::from_le_bytes(rest[13..17].try_into().unwrap()),
            seed: u64::from_le_bytes(rest[17..25].try_into().unwrap()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupStats {
    pub index: usize,
    /// Over the group's real frames, using the decoder's weights.
    pub psnr_db: f64,
    /// Framed payload size in the container.
    pub bytes: usize,
    pub mse: f64,
    /// Entropy estimate at the last training step.
    pub entropy_bits: f64,
    /// Mean squared difference between each real frame and its predecessor.
    pub motion_mse: f64,
    #[serde(skip)]
    pub head_mode: u8,
    /// The group repeats the previous group's model with all-zero residuals.
    #[serde(skip)]
    pub latents_reused: bool,
    #[serde(skip)]
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodeReport {
    pub groups: Vec<GroupStats>,
    pub psnr_db: f64,
    pub mse: f64,
    pub bpp: f64,
    pub file_bytes: usize,
    pub seconds: f64,
    /// Mean over all consecutive frame pairs; zero for single-frame videos.
    pub motion_mean: f64,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    index: &'a str,
    psnr_db: f64,
    bytes: usize,
    mse: f64,
    entropy_bits: f64,
    motion_mse: f64,
    bpp: Option<f64>,
    seconds: Option<f64>,
}

impl EncodeReport {
    /// One row per group followed by a `total` row carrying BPP and wall-clock time.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for g in &self.groups {
            let index = g.index.to_string();
            w.serialize(CsvRow {
                index: &index,
                psnr_db: g.psnr_db,
                bytes: g.bytes,
                mse: g.mse,
                entropy_bits: g.entropy_bits,
                motion_mse: g.motion_mse,
                bpp: None,
                seconds: None,
            })
            .map_err(csv_err)?;
        }
        w.serialize(CsvRow {
            index: "total",
            psnr_db: self.psnr_db,
            bytes: self.file_bytes,
            mse: self.mse,
            entropy_bits: self.groups.iter().map(|g| g.entropy_bits).sum(),
            motion_mse: self.motion_mean,
            bpp: Some(self.bpp),
            seconds: Some(self.seconds),
        })
        .map_err(csv_err)?;
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
