//! Storage of the continuous decoder-head parameters.
//!
//! The first group of a chunk stores raw little-endian `f32`s. Later groups
//! store `f32` deltas against the previous group, byte-plane shuffled and
//! compressed with LZMA.

use std::io::{Read, Write};

use xz2::stream::{LzmaOptions, Stream};

use crate::error::{Error, Result};

/// Identifier of the lossless compressor recorded in the stream header.
pub const COMPRESSOR_LZMA_SHUFFLED: u8 = 1;

/// Head block modes of a group payload.
pub const HEAD_RAW: u8 = 0;
/// Deltas against the previous group, compressed with the stream's compressor.
pub const HEAD_DELTA: u8 = 1;
/// Previous group's head reused unchanged; the head block is empty.
pub const HEAD_REUSE: u8 = 2;

const LZMA_PRESET: u32 = 9;

pub fn raw_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn from_raw_bytes(bytes: &[u8], count: usize) -> Result<Vec<f32>> {
    if bytes.len() != count * 4 {
        return Err(Error::CorruptStream(format!(
            "raw head block has {} bytes, expected {}",
            bytes.len(),
            count * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Groups byte `k` of every value together so exponent bytes sit side by side.
fn shuffle(values: &[f32]) -> Vec<u8> {
    let n = values.len();
    let mut out = vec![0u8; n * 4];
    for (i, v) in values.iter().enumerate() {
        for (k, b) in v.to_le_bytes().iter().enumerate() {
            out[k * n + i] = *b;
        }
    }
    out
}

fn unshuffle(bytes: &[u8], n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| f32::from_le_bytes([bytes[i], bytes[n + i], bytes[2 * n + i], bytes[3 * n + i]]))
        .collect()
}

pub fn compress_deltas(deltas: &[f32]) -> Result<Vec<u8>> {
    let opts = LzmaOptions::new_preset(LZMA_PRESET).map_err(std::io::Error::from)?;
    let stream = Stream::new_lzma_encoder(&opts).map_err(std::io::Error::from)?;
    let mut enc = xz2::write::XzEncoder::new_stream(Vec::new(), stream);
    enc.write_all(&shuffle(deltas))?;
    Ok(enc.finish()?)
}

pub fn decompress_deltas(bytes: &[u8], count: usize) -> Result<Vec<f32>> {
    let stream = Stream::new_lzma_decoder(u64::MAX)
        .map_err(|e| Error::CorruptStream(format!("lzma: {e}")))?;
    let mut dec = xz2::read::XzDecoder::new_stream(bytes, stream);
    let mut raw = Vec::with_capacity(count * 4);
    dec.read_to_end(&mut raw)
        .map_err(|e| Error::CorruptStream(format!("lzma: {e}")))?;
    if raw.len() != count * 4 {
        return Err(Error::CorruptStream(format!(
            "head delta block holds {} bytes, expected {}",
            raw.len(),
            count * 4
        )));
    }
    Ok(unshuffle(&raw, count))
}

/// `previous + delta`, the reconstruction both encoder and decoder apply.
pub fn apply_deltas(previous: &[f32], deltas: &[f32]) -> Vec<f32> {
    previous.iter().zip(deltas).map(|(a, d)| a + d).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deltas_roundtrip_bit_exactly() {
        let vals: Vec<f32> = (0..1000).map(|i| ((i as f32) * 0.37).sin() * 1e-3).collect();
        let packed = compress_deltas(&vals).unwrap();
        let back = decompress_deltas(&packed, vals.len()).unwrap();
        assert_eq!(
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            vals.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn zero_deltas_compress_well() {
        let packed = compress_deltas(&vec![0.0; 5000]).unwrap();
        assert!(packed.len() < 200, "{} bytes", packed.len());
    }

    #[test]
    fn wrong_count_or_garbage_is_corrupt() {
        let packed = compress_deltas(&[1.0, 2.0]).unwrap();
        assert!(decompress_deltas(&packed, 3).is_err());
        assert!(decompress_deltas(&[1, 2, 3, 4, 5], 1).is_err());
        assert!(from_raw_bytes(&[0; 7], 2).is_err());
    }
}
