//! Entropy coding, latent residuals, and the bitstream container.

mod container;
pub mod head;
mod payload;
mod range;
pub mod varint;

pub use container::{
    encode_container, read_container, read_container_file, write_container, BitstreamHeader,
    ChunkEntry, Container, FORMAT_VERSION, MAGIC,
};
pub use payload::{GroupPayload, LatentKind, TensorPayload};
pub use range::{ac_decode, ac_encode};

use crate::error::{shape_err, Error, Result};

/// `current − previous`, elementwise.
pub fn residual(current: &[i32], previous: &[i32]) -> Result<Vec<i64>> {
    if current.len() != previous.len() {
        return Err(shape_err(format!(
            "residual of {} values against {}",
            current.len(),
            previous.len()
        )));
    }
    Ok(current
        .iter()
        .zip(previous)
        .map(|(&c, &p)| c as i64 - p as i64)
        .collect())
}

/// `previous + residual`, elementwise; fails if a result leaves the `i32` range.
pub fn accumulate(previous: &[i32], residual: &[i64]) -> Result<Vec<i32>> {
    if residual.len() != previous.len() {
        return Err(shape_err(format!(
            "accumulating {} residuals onto {} values",
            residual.len(),
            previous.len()
        )));
    }
    previous
        .iter()
        .zip(residual)
        .map(|(&p, &r)| {
            i32::try_from(p as i64 + r)
                .map_err(|_| Error::CorruptStream("accumulated latent overflows i32".into()))
        })
        .collect()
}

/// Bits per pixel of a stream: `8 · bytes / (N · H · W)`.
pub fn bpp(total_stream_bytes: u64, num_frames: usize, height: usize, width: usize) -> f64 {
    8.0 * total_stream_bytes as f64 / (num_frames * height * width) as f64
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn residual_examples() {
        assert_eq!(residual(&[4, -2, 9], &[4, -2, 9]).unwrap(), vec![0, 0, 0]);
        assert_eq!(residual(&[4, -2, 9], &[0, 0, 0]).unwrap(), vec![4, -2, 9]);
        assert!(residual(&[1], &[1, 2]).is_err());
        assert!(accumulate(&[i32::MAX], &[1]).is_err());
    }

    #[test]
    fn bpp_examples() {
        assert_eq!(bpp(125, 10, 10, 10), 1.0);
        assert_eq!(bpp(0, 10, 10, 10), 0.0);
        assert_eq!(bpp(125, 20, 10, 10), 0.5);
    }

    proptest! {
        #[test]
        fn accumulate_inverts_residual(
            pairs in prop::collection::vec((any::<i32>(), any::<i32>()), 0..200)
        ) {
            let (cur, prev): (Vec<i32>, Vec<i32>) = pairs.into_iter().unzip();
            let r = residual(&cur, &prev).unwrap();
            prop_assert_eq!(accumulate(&prev, &r).unwrap(), cur);
        }

        #[test]
        fn residuals_telescope(
            base in prop::collection::vec(-1000i32..1000, 8),
            steps in prop::collection::vec(prop::collection::vec(-50i32..50, 8), 1..6),
        ) {
            let mut encoder_side = vec![base.clone()];
            for s in &steps {
                let last = encoder_side.last().unwrap();
                encoder_side.push(last.iter().zip(s).map(|(a, b)| a + b).collect());
            }
            let mut decoded = base;
            for g in 1..encoder_side.len() {
                let r = residual(&encoder_side[g], &encoder_side[g - 1]).unwrap();
                decoded = accumulate(&decoded, &r).unwrap();
                prop_assert_eq!(&decoded, &encoder_side[g]);
            }
        }
    }
}
