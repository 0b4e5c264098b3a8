use crate::error::{shape_err, Error, Result};
use crate::video_io::Video;

/// Mean squared error over all pixels and channels of two equal-length frame sets.
pub fn mse(reference: &[Vec<f32>], reconstruction: &[Vec<f32>]) -> Result<f64> {
    if reference.len() != reconstruction.len() {
        return Err(shape_err(format!(
            "{} reference frames vs {} reconstructed",
            reference.len(),
            reconstruction.len()
        )));
    }
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for (a, b) in reference.iter().zip(reconstruction) {
        if a.len() != b.len() {
            return Err(shape_err("frame sizes differ"));
        }
        sum += a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let e = f64::from(*x) - f64::from(*y);
                e * e
            })
            .sum::<f64>();
        n += a.len();
    }
    if n == 0 {
        return Err(Error::EmptyTensor);
    }
    Ok(sum / n as f64)
}

/// `10 · log10(1 / mse)`; `+∞` when `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// PSNR in dB with a peak value of 1.
pub fn psnr(reference: &Video, reconstruction: &Video) -> Result<f64> {
    if reference.width() != reconstruction.width() || reference.height() != reconstruction.height() {
        return Err(shape_err(format!(
            "{}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            reconstruction.width(),
            reconstruction.height()
        )));
    }
    Ok(psnr_from_mse(mse(reference.frames(), reconstruction.frames())?))
}

/// Mean squared difference between consecutive frames.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionProxy {
    /// Entry `t` compares frames `t` and `t + 1`.
    pub pairs: Vec<f64>,
    pub mean: f64,
}

pub fn motion_proxy(video: &Video) -> Result<MotionProxy> {
    let n = video.num_frames();
    if n < 2 {
        return Err(Error::TooFewFrames(n));
    }
    let pairs = video
        .frames()
        .windows(2)
        .map(|w| mse(&w[..1], &w[1..]))
        .collect::<Result<Vec<_>>>()?;
    let mean = pairs.iter().sum::<f64>() / pairs.len() as f64;
    Ok(MotionProxy { pairs, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(values: &[f32]) -> Video {
        Video::new(2, 2, values.iter().map(|&v| vec![v; 12]).collect()).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = solid(&[0.3, 0.6]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((psnr(&solid(&[0.0]), &solid(&[1.0])).unwrap()).abs() < 1e-12);
        assert!((psnr(&solid(&[0.0]), &solid(&[0.1])).unwrap() - 20.0).abs() < 1e-5);
        assert!(psnr(&solid(&[0.0]), &Video::new(1, 4, vec![vec![0.0; 12]]).unwrap()).is_err());
    }

    #[test]
    fn motion_examples() {
        assert_eq!(motion_proxy(&solid(&[0.4; 5])).unwrap().mean, 0.0);
        let m = motion_proxy(&solid(&[0.0, 1.0, 0.0, 1.0])).unwrap();
        assert_eq!(m.pairs, vec![1.0; 3]);
        assert_eq!(m.mean, 1.0);
        assert!(matches!(motion_proxy(&solid(&[0.5])), Err(Error::TooFewFrames(1))));
    }
}
