use rand::Rng;

use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tensor};

/// A network parameter tensor represented as `φ · round(Ŵ)`.
///
/// `surrogate` is the continuous Ŵ that the optimizer updates; the shipped
/// integer latent is its rounding and `scale` is the learned scalar φ.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLatent<T> {
    pub surrogate: Vec<T>,
    pub scale: T,
    pub shape: Vec<usize>,
}

impl<T: Real> QuantizedLatent<T> {
    /// Binds continuous weights to a latent with the given step size.
    pub fn from_weights(weights: &Tensor<T>, scale: T) -> Self {
        Self {
            surrogate: weights.data().iter().map(|&w| w / scale).collect(),
            scale,
            shape: weights.shape().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.surrogate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surrogate.is_empty()
    }

    /// Integer latent W̃, rounding half away from zero.
    pub fn latent(&self) -> Vec<i32> {
        self.surrogate
            .iter()
            .map(|&v| ste_round(v).to_i32().unwrap_or(i32::MAX))
            .collect()
    }

    /// `reshape(φ · W̃)`.
    pub fn decode_weights(&self) -> Tensor<T> {
        let data = self
            .surrogate
            .iter()
            .map(|&v| self.scale * ste_round(v))
            .collect();
        Tensor::new(self.shape.clone(), data).expect("latent shape is consistent")
    }

    /// `reshape(φ · Ŵ)` without rounding, for checking the straight-through path.
    pub fn relaxed_weights(&self) -> Tensor<T> {
        let data = self.surrogate.iter().map(|&v| self.scale * v).collect();
        Tensor::new(self.shape.clone(), data).expect("latent shape is consistent")
    }

    /// Snaps every surrogate onto its rounded value.
    pub fn snap(&mut self) {
        for v in &mut self.surrogate {
            *v = ste_round(*v);
        }
    }
}

/// Decoder-side weight reconstruction from shipped integers.
pub fn decode_latent<T: Real>(latent: &[i32], scale: T, shape: &[usize]) -> Result<Tensor<T>> {
    let n: usize = shape.iter().product();
    if n != latent.len() {
        return Err(shape_err(format!(
            "latent of {} values cannot fill shape {:?}",
            latent.len(),
            shape
        )));
    }
    Tensor::new(
        shape.to_vec(),
        latent.iter().map(|&q| scale * T::lit(q as f64)).collect(),
    )
}

/// Forward pass of the straight-through rounding: half away from zero.
#[inline]
pub fn ste_round<T: Real>(v: T) -> T {
    v.round()
}

/// Backward pass of the straight-through rounding: the identity.
#[inline]
pub fn ste_round_backward<T: Real>(upstream: T) -> T {
    upstream
}

/// `Ŵ + n` with `n ~ U(-½, ½)` drawn independently per element.
pub fn noisy_sample<T: Real, R: Rng + ?Sized>(surrogate: &[T], rng: &mut R) -> Vec<T> {
    surrogate
        .iter()
        .map(|&v| v + T::lit(rng.gen_range(-0.5..0.5)))
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn decode_examples() {
        let w = decode_latent::<f64>(&[3, -2], 0.02, &[2]).unwrap();
        assert!((w.data()[0] - 0.06).abs() < 1e-15);
        assert!((w.data()[1] + 0.04).abs() < 1e-15);
        let w = decode_latent::<f32>(&[3, -2], 0.0, &[2]).unwrap();
        assert!(w.data().iter().all(|&v| v == 0.0));
        let w = decode_latent::<f32>(&[0, 0, 0], 7.5, &[3]).unwrap();
        assert!(w.data().iter().all(|&v| v == 0.0));
        assert!(decode_latent::<f32>(&[1, 2], 1.0, &[3]).is_err());
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(ste_round(2.4f64), 2.0);
        assert_eq!(ste_round(2.5f64), 3.0);
        assert_eq!(ste_round(-2.5f64), -3.0);
        assert_eq!(ste_round(-7.0f32), -7.0);
        assert_eq!(ste_round_backward(0.3f64), 0.3);
    }

    #[test]
    fn snapped_latent_decodes_exactly() {
        let w = Tensor::<f32>::new(vec![2, 2], vec![0.013, -0.029, 0.5, 0.0]).unwrap();
        let mut q = QuantizedLatent::from_weights(&w, 0.01);
        let latent = q.latent();
        q.snap();
        let direct = decode_latent(&latent, q.scale, &q.shape).unwrap();
        assert_eq!(q.decode_weights(), direct);
        assert_eq!(q.relaxed_weights(), direct);
    }

    #[test]
    fn noise_support_mean_and_reproducibility() {
        let base = vec![1.5f64; 100_000];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noisy = noisy_sample(&base, &mut rng);
        let diffs: Vec<f64> = noisy.iter().zip(&base).map(|(a, b)| a - b).collect();
        assert!(diffs.iter().all(|d| (-0.5..0.5).contains(d)));
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        let again = noisy_sample(&base, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(noisy, again);
    }
}
