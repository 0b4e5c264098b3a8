use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One upsampling block of the head: 3×3 conv to `channels · upsample²`, then pixel shuffle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadBlock {
    pub channels: usize,
    pub upsample: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    /// Spatial grid the patch feature is reshaped onto.
    pub base_h: usize,
    pub base_w: usize,
    pub blocks: Vec<HeadBlock>,
    /// Frequency of the sine activation after each block.
    pub omega: f64,
    /// Multiplier on the uniform kernel init bound `√(6 / fan_in)`.
    pub init_gain: f64,
}

impl HeadSpec {
    /// Blocks on a 4×4 base grid whose upsampling factors multiply to `patch / 4`,
    /// using factors of 4 first then 2. `channels` lists the post-shuffle widths.
    pub fn for_patch(patch: usize, channels: &[usize]) -> Result<Self> {
        if patch < 4 || patch % 4 != 0 || !(patch / 4).is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "no default head for patch size {patch}"
            )));
        }
        let mut factors = Vec::new();
        let mut rest = patch / 4;
        while rest > 1 {
            let f = if rest % 4 == 0 { 4 } else { 2 };
            factors.push(f);
            rest /= f;
        }
        if factors.len() != channels.len() {
            return Err(Error::InvalidConfig(format!(
                "patch {patch} needs {} head blocks, got {} channel widths",
                factors.len(),
                channels.len()
            )));
        }
        Ok(Self {
            base_h: 4,
            base_w: 4,
            blocks: factors
                .into_iter()
                .zip(channels)
                .map(|(upsample, &channels)| HeadBlock { channels, upsample })
                .collect(),
            omega: 1.0,
            init_gain: 1.0,
        })
    }

    pub fn total_upsample(&self) -> usize {
        self.blocks.iter().map(|b| b.upsample).product()
    }
}

/// Architecture of every group network in a stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_siren_layers: usize,
    /// Hidden width `d`, also the patch feature size.
    pub width: usize,
    pub omega0: f64,
    pub patch_h: usize,
    pub patch_w: usize,
    pub group_size: usize,
    pub positional_base: f64,
    pub head: HeadSpec,
    /// Initial quantization step is chosen so latents start within about `±latent_levels`.
    pub latent_levels: f64,
}

impl Default for ModelConfig {
    /// 5 SIREN layers of width 512 predicting 32×32 patches for 3 frames.
    fn default() -> Self {
        Self {
            num_siren_layers: 5,
            width: 512,
            omega0: 30.0,
            patch_h: 32,
            patch_w: 32,
            group_size: 3,
            positional_base: 1.25,
            head: HeadSpec {
                base_h: 4,
                base_w: 4,
                blocks: vec![
                    HeadBlock {
                        channels: 16,
                        upsample: 4,
                    },
                    HeadBlock {
                        channels: 8,
                        upsample: 2,
                    },
                ],
                omega: 1.0,
                init_gain: 1.0,
            },
            latent_levels: 8.0,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration used by tests, benchmarks and the acceptance suite.
    pub fn tiny() -> Self {
        Self {
            num_siren_layers: 3,
            width: 128,
            omega0: 30.0,
            patch_h: 16,
            patch_w: 16,
            group_size: 3,
            positional_base: 1.25,
            head: HeadSpec::for_patch(16, &[8]).expect("valid tiny head"),
            latent_levels: 1.0,
        }
    }

    /// Same architecture for another patch size (square patches, 4×4 base grid).
    pub fn with_patch(mut self, patch: usize) -> Result<Self> {
        let mut n = 0;
        let mut rest = patch / 4;
        while rest > 1 {
            rest /= if rest % 4 == 0 { 4 } else { 2 };
            n += 1;
        }
        let first = self.head.blocks.first().map_or(4, |b| b.channels);
        let widths: Vec<usize> = (0..n).map(|i| (first >> i).max(2)).collect();
        let mut head = HeadSpec::for_patch(patch, &widths)?;
        head.omega = self.head.omega;
        head.init_gain = self.head.init_gain;
        self.head = head;
        self.patch_h = patch;
        self.patch_w = patch;
        Ok(self)
    }

    pub fn feature_channels(&self) -> usize {
        self.width / (self.head.base_h * self.head.base_w)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_siren_layers == 0 {
            return bad("need at least one SIREN layer".into());
        }
        if self.width == 0 || self.width % 2 != 0 {
            return bad(format!("width {} must be positive and even", self.width));
        }
        if self.group_size == 0 || self.group_size > u8::MAX as usize {
            return bad(format!("group size {} out of range", self.group_size));
        }
        if !(self.omega0 > 0.0 && self.positional_base > 0.0 && self.head.omega > 0.0) {
            return bad("frequencies and positional base must be positive".into());
        }
        if !(self.latent_levels > 0.0) {
            return bad("latent_levels must be positive".into());
        }
        let h = &self.head;
        if h.base_h == 0 || h.base_w == 0 || self.width % (h.base_h * h.base_w) != 0 {
            return bad(format!(
                "width {} does not reshape onto a {}x{} grid",
                self.width, h.base_h, h.base_w
            ));
        }
        if h.blocks.iter().any(|b| b.channels == 0 || b.upsample == 0) {
            return bad("head blocks need positive channels and upsampling".into());
        }
        let up = h.total_upsample();
        if h.base_h * up != self.patch_h || h.base_w * up != self.patch_w {
            return bad(format!(
                "head produces {}x{} but patch is {}x{}",
                h.base_h * up,
                h.base_w * up,
                self.patch_h,
                self.patch_w
            ));
        }
        if self.patch_h > u8::MAX as usize || self.patch_w > u8::MAX as usize {
            return bad("patch dimensions must fit in a byte".into());
        }
        Ok(())
    }

    /// Canonical little-endian encoding stored in the stream header.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.num_siren_layers as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&self.omega0.to_le_bytes());
        out.extend_from_slice(&(self.patch_h as u32).to_le_bytes());
        out.extend_from_slice(&(self.patch_w as u32).to_le_bytes());
        out.extend_from_slice(&(self.group_size as u32).to_le_bytes());
        out.extend_from_slice(&self.positional_base.to_le_bytes());
        out.extend_from_slice(&(self.head.base_h as u32).to_le_bytes());
        out.extend_from_slice(&(self.head.base_w as u32).to_le_bytes());
        out.extend_from_slice(&(self.head.blocks.len() as u32).to_le_bytes());
        for b in &self.head.blocks {
            out.extend_from_slice(&(b.channels as u32).to_le_bytes());
            out.extend_from_slice(&(b.upsample as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.head.omega.to_le_bytes());
        out.extend_from_slice(&self.head.init_gain.to_le_bytes());
        out.extend_from_slice(&self.latent_levels.to_le_bytes());
        out
    }

    /// Parses [`ModelConfig::to_bytes`]; returns the config and bytes consumed.
    pub fn from_bytes(buf: &[u8]) -> Result<(Self, usize)> {
        let mut pos = 0;
        let num_siren_layers = read_u32(buf, &mut pos)?;
        let width = read_u32(buf, &mut pos)?;
        let omega0 = read_f64(buf, &mut pos)?;
        let patch_h = read_u32(buf, &mut pos)?;
        let patch_w = read_u32(buf, &mut pos)?;
        let group_size = read_u32(buf, &mut pos)?;
        let positional_base = read_f64(buf, &mut pos)?;
        let base_h = read_u32(buf, &mut pos)?;
        let base_w = read_u32(buf, &mut pos)?;
        let n_blocks = read_u32(buf, &mut pos)?;
        if n_blocks > 16 {
            return Err(Error::CorruptStream(format!("{n_blocks} head blocks")));
        }
        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            blocks.push(HeadBlock {
                channels: read_u32(buf, &mut pos)?,
                upsample: read_u32(buf, &mut pos)?,
            });
        }
        let omega = read_f64(buf, &mut pos)?;
        let init_gain = read_f64(buf, &mut pos)?;
        let latent_levels = read_f64(buf, &mut pos)?;
        let cfg = Self {
            num_siren_layers,
            width,
            omega0,
            patch_h,
            patch_w,
            group_size,
            positional_base,
            head: HeadSpec {
                base_h,
                base_w,
                blocks,
                omega,
                init_gain,
            },
            latent_levels,
        };
        cfg.validate()
            .map_err(|e| Error::CorruptStream(format!("stored model config invalid: {e}")))?;
        Ok((cfg, pos))
    }

    /// First 16 bytes of the SHA-256 of [`ModelConfig::to_bytes`].
    pub fn digest(&self) -> [u8; 16] {
        let d = Sha256::digest(self.to_bytes());
        let mut out = [0u8; 16];
        out.copy_from_slice(&d[..16]);
        out
    }
}

fn read_u32(buf: &[u8], pos: &mut usize) -> Result<usize> {
    let v = buf
        .get(*pos..*pos + 4)
        .ok_or_else(|| Error::CorruptStream("model config truncated".into()))?;
    *pos += 4;
    Ok(u32::from_le_bytes(v.try_into().unwrap()) as usize)
}

fn read_f64(buf: &[u8], pos: &mut usize) -> Result<f64> {
    let v = buf
        .get(*pos..*pos + 8)
        .ok_or_else(|| Error::CorruptStream("model config truncated".into()))?;
    *pos += 8;
    Ok(f64::from_le_bytes(v.try_into().unwrap()))
}
