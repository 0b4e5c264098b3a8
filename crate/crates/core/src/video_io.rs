//! Raw RGB24 video I/O, patch grids, and frame-group segmentation.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{shape_err, Error, Result};

/// Frames of interleaved RGB values in `[0, 1]`, each `height × width × 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    width: usize,
    height: usize,
    frames: Vec<Vec<f32>>,
}

impl Video {
    pub fn new(width: usize, height: usize, frames: Vec<Vec<f32>>) -> Result<Self> {
        let len = width * height * 3;
        if width == 0 || height == 0 {
            return Err(shape_err("video dimensions must be positive"));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.len() != len {
                return Err(shape_err(format!(
                    "frame {i} has {} values, expected {len}",
                    f.len()
                )));
            }
            if let Some(v) = f.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(shape_err(format!("frame {i} holds out-of-range pixel {v}")));
            }
        }
        Ok(Self {
            width,
            height,
            frames,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Vec<f32>] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.frames[i]
    }

    pub fn frame_len(&self) -> usize {
        self.width * self.height * 3
    }

    /// Parses frame-major, row-major interleaved RGB24 bytes.
    pub fn from_rgb24(bytes: &[u8], width: usize, height: usize, num_frames: usize) -> Result<Self> {
        let frame_len = width * height * 3;
        let expected = (frame_len * num_frames) as u64;
        if bytes.len() as u64 != expected {
            return Err(Error::FileSizeMismatch {
                expected,
                actual: bytes.len() as u64,
            });
        }
        let frames = if frame_len == 0 {
            vec![Vec::new(); num_frames]
        } else {
            bytes
                .chunks_exact(frame_len)
                .map(|c| c.iter().map(|&b| b as f32 / 255.0).collect())
                .collect()
        };
        Self::new(width, height, frames)
    }

    /// Quantizes every pixel with `round(v · 255)` (half away from zero), clamped.
    pub fn to_rgb24(&self) -> Vec<u8> {
        self.frames
            .iter()
            .flat_map(|f| f.iter().map(|&v| pixel_to_byte(v)))
            .collect()
    }

    /// Clone of the first `n` frames.
    pub fn truncated(&self, n: usize) -> Video {
        Video {
            width: self.width,
            height: self.height,
            frames: self.frames[..n.min(self.frames.len())].to_vec(),
        }
    }
}

pub fn pixel_to_byte(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn load_raw_video(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    num_frames: usize,
) -> Result<Video> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Video::from_rgb24(&bytes, width, height, num_frames)
}

pub fn write_raw_video(video: &Video, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&video.to_rgb24())?;
    w.flush()?;
    Ok(())
}

/// Patch tiling of a frame plus the normalized centroid of every patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub patch_h: usize,
    pub patch_w: usize,
    pub rows: usize,
    pub cols: usize,
    /// `(x, y)` in `(-1, 1)`, row-major.
    pub centroids: Vec<[f32; 2]>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn frame_width(&self) -> usize {
        self.cols * self.patch_w
    }

    pub fn frame_height(&self) -> usize {
        self.rows * self.patch_h
    }

    /// Centroids as a flat `[B, 2]` buffer.
    pub fn centroid_data(&self) -> Vec<f32> {
        self.centroids.iter().flat_map(|c| c.iter().copied()).collect()
    }
}

/// Builds the patch grid for a `width × height` frame.
///
/// A patch whose center pixel sits at `x_c` gets coordinate `2·(x_c + 0.5)/W − 1`.
pub fn patch_centroids(width: usize, height: usize, patch: (usize, usize)) -> Result<PatchGrid> {
    let (patch_h, patch_w) = patch;
    if patch_h == 0
        || patch_w == 0
        || width == 0
        || height == 0
        || width % patch_w != 0
        || height % patch_h != 0
    {
        return Err(Error::NonDivisibleResolution {
            width,
            height,
            patch_w,
            patch_h,
        });
    }
    let rows = height / patch_h;
    let cols = width / patch_w;
    let mut centroids = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let xc = (c * patch_w) as f64 + (patch_w as f64 - 1.0) / 2.0;
            let yc = (r * patch_h) as f64 + (patch_h as f64 - 1.0) / 2.0;
            centroids.push([
                (2.0 * (xc + 0.5) / width as f64 - 1.0) as f32,
                (2.0 * (yc + 0.5) / height as f64 - 1.0) as f32,
            ]);
        }
    }
    Ok(PatchGrid {
        patch_h,
        patch_w,
        rows,
        cols,
        centroids,
    })
}

/// `G` consecutive frames cut into per-centroid patch volumes.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGroup {
    pub index: usize,
    /// Source frame index of each of the `G` slots; the tail may repeat the last frame.
    pub source_frames: Vec<usize>,
    /// `[B, G, H_p, W_p, 3]` flat, one volume per centroid in grid order.
    pub volumes: Vec<f32>,
}

impl FrameGroup {
    pub fn group_size(&self) -> usize {
        self.source_frames.len()
    }

    /// Number of real (non-padding) frames in this group.
    pub fn real_frames(&self) -> usize {
        let mut seen = 0;
        for (slot, &src) in self.source_frames.iter().enumerate() {
            if slot > 0 && src == self.source_frames[slot - 1] {
                break;
            }
            seen += 1;
        }
        seen
    }
}

pub fn num_groups(num_frames: usize, group_size: usize) -> usize {
    num_frames.div_ceil(group_size)
}

/// Frame indices of group `g`, repeating the final frame past the end of the video.
pub fn group_frame_indices(g: usize, group_size: usize, num_frames: usize) -> Vec<usize> {
    (0..group_size)
        .map(|t| (g * group_size + t).min(num_frames - 1))
        .collect()
}

/// Extracts the patch volumes of the given frames.
pub fn extract_volumes(video: &Video, grid: &PatchGrid, frames: &[usize]) -> Vec<f32> {
    let g = frames.len();
    let (ph, pw) = (grid.patch_h, grid.patch_w);
    let w = video.width();
    let vol = g * ph * pw * 3;
    let mut out = vec![0.0f32; grid.len() * vol];
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let dst = &mut out[(r * grid.cols + c) * vol..][..vol];
            for (t, &fi) in frames.iter().enumerate() {
                let frame = video.frame(fi);
                for y in 0..ph {
                    let src = ((r * ph + y) * w + c * pw) * 3;
                    dst[(t * ph + y) * pw * 3..][..pw * 3]
                        .copy_from_slice(&frame[src..src + pw * 3]);
                }
            }
        }
    }
    out
}

/// Splits a video into frame groups of `group_size`, padding the last group by
/// repeating the final frame.
pub fn segment_groups(
    video: &Video,
    patch: (usize, usize),
    group_size: usize,
) -> Result<Vec<FrameGroup>> {
    if group_size == 0 {
        return Err(Error::InvalidConfig("group size must be positive".into()));
    }
    if video.num_frames() == 0 {
        return Err(shape_err("video has no frames"));
    }
    let grid = patch_centroids(video.width(), video.height(), patch)?;
    let n = video.num_frames();
    Ok((0..num_groups(n, group_size))
        .map(|g| {
            let source_frames = group_frame_indices(g, group_size, n);
            let volumes = extract_volumes(video, &grid, &source_frames);
            FrameGroup {
                index: g,
                source_frames,
                volumes,
            }
        })
        .collect())
}

/// Inverse of the patch extraction: stitches `[B, G, H_p, W_p, 3]` volumes into `G` frames.
pub fn assemble_frames(volumes: &[f32], grid: &PatchGrid, group_size: usize) -> Result<Vec<Vec<f32>>> {
    let (ph, pw) = (grid.patch_h, grid.patch_w);
    let vol = group_size * ph * pw * 3;
    if volumes.len() != grid.len() * vol {
        return Err(shape_err(format!(
            "expected {} volume values for {} patches, got {}",
            grid.len() * vol,
            grid.len(),
            volumes.len()
        )));
    }
    let w = grid.frame_width();
    let h = grid.frame_height();
    let mut frames = vec![vec![0.0f32; w * h * 3]; group_size];
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let src = &volumes[(r * grid.cols + c) * vol..][..vol];
            for (t, frame) in frames.iter_mut().enumerate() {
                for y in 0..ph {
                    let dst = ((r * ph + y) * w + c * pw) * 3;
                    frame[dst..dst + pw * 3]
                        .copy_from_slice(&src[(t * ph + y) * pw * 3..][..pw * 3]);
                }
            }
        }
    }
    Ok(frames)
}
