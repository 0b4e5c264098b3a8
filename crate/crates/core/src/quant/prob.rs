use rand::Rng;
use rayon::prelude::*;

use super::latent::noisy_sample;
use super::QuantizedLatent;
use crate::error::{shape_err, Result};
use crate::tensor::Real;

/// Number of trainable scalars in one [`ProbabilityModel`].
pub const PM_PARAMS: usize = 28;

/// Lower bound applied to interval probabilities before taking logs.
pub const LIKELIHOOD_FLOOR: f64 = 1e-9;

// Parameter layout: three monotone stages 1→3→3→1.
const H1: usize = 0;
const B1: usize = 3;
const A1: usize = 6;
const H2: usize = 9;
const B2: usize = 18;
const A2: usize = 21;
const H3: usize = 24;
const B3: usize = 27;

const CHUNK: usize = 2048;

/// Learned univariate CDF `C(x) = σ(f₃(f₂(f₁(x))))`.
///
/// Each stage is an affine map with softplus-positive weights. The first two
/// stages add the bounded nonlinearity `u + tanh(a)·tanh(u)`, whose slope stays
/// positive, so `C` is strictly increasing for every parameter setting.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityModel<T> {
    pub params: Vec<T>,
}

/// Parameters after the positivity/boundedness transforms, computed once per pass.
struct Prepared<T> {
    h1: [T; 3],
    b1: [T; 3],
    f1: [T; 3],
    h2: [T; 9],
    b2: [T; 3],
    f2: [T; 3],
    h3: [T; 3],
    b3: T,
    /// `softplus'` of every raw parameter, indexed like `params`.
    dsp: [T; PM_PARAMS],
}

struct Trace<T> {
    x: T,
    t1: [T; 3],
    z1: [T; 3],
    t2: [T; 3],
    z2: [T; 3],
}

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// `tanh` through a single `exp`; absolute error stays at machine precision.
fn tanh<T: Real>(x: T) -> T {
    let two = T::lit(2.0);
    T::one() - two / ((two * x).exp() + T::one())
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> ProbabilityModel<T> {
    /// Initializes a model whose CDF spans roughly `±init_scale`.
    pub fn new<R: Rng + ?Sized>(init_scale: f64, rng: &mut R) -> Self {
        let filters = [1.0, 3.0, 3.0, 1.0];
        let scale = init_scale.powf(1.0 / 3.0);
        let mut params = vec![T::zero(); PM_PARAMS];
        let stage_init = |i: usize| T::lit((1.0 / scale / filters[i + 1]).exp_m1().ln());
        for (range, stage) in [(H1..B1, 0), (H2..B2, 1), (H3..B3, 2)] {
            for p in &mut params[range] {
                *p = stage_init(stage);
            }
        }
        for idx in (B1..A1).chain(B2..A2).chain(B3..B3 + 1) {
            params[idx] = T::lit(rng.gen_range(-0.5..0.5));
        }
        Self { params }
    }

    fn prepare(&self) -> Prepared<T> {
        let p = &self.params;
        let sp = |i: usize| softplus(p[i]);
        let mut h2 = [T::zero(); 9];
        for (k, h) in h2.iter_mut().enumerate() {
            *h = sp(H2 + k);
        }
        Prepared {
            h1: [sp(H1), sp(H1 + 1), sp(H1 + 2)],
            b1: [p[B1], p[B1 + 1], p[B1 + 2]],
            f1: [tanh(p[A1]), tanh(p[A1 + 1]), tanh(p[A1 + 2])],
            h2,
            b2: [p[B2], p[B2 + 1], p[B2 + 2]],
            f2: [tanh(p[A2]), tanh(p[A2 + 1]), tanh(p[A2 + 2])],
            h3: [sp(H3), sp(H3 + 1), sp(H3 + 2)],
            b3: p[B3],
            dsp: std::array::from_fn(|i| sigmoid(p[i])),
        }
    }

    fn trace(pp: &Prepared<T>, x: T) -> (T, Trace<T>) {
        let mut u1 = [T::zero(); 3];
        let mut t1 = [T::zero(); 3];
        let mut z1 = [T::zero(); 3];
        for i in 0..3 {
            u1[i] = pp.h1[i] * x + pp.b1[i];
            t1[i] = tanh(u1[i]);
            z1[i] = u1[i] + pp.f1[i] * t1[i];
        }
        let mut u2 = [T::zero(); 3];
        let mut t2 = [T::zero(); 3];
        let mut z2 = [T::zero(); 3];
        for i in 0..3 {
            let mut s = pp.b2[i];
            for j in 0..3 {
                s += pp.h2[i * 3 + j] * z1[j];
            }
            u2[i] = s;
            t2[i] = tanh(s);
            z2[i] = s + pp.f2[i] * t2[i];
        }
        let mut logit = pp.b3;
        for j in 0..3 {
            logit += pp.h3[j] * z2[j];
        }
        (
            logit,
            Trace {
                x,
                t1,
                z1,
                t2,
                z2,
            },
        )
    }

    /// Backpropagates `d_logit` through one evaluation; accumulates into `grad`
    /// (w.r.t. raw parameters) and returns the derivative w.r.t. the input.
    fn backward(&self, pp: &Prepared<T>, tr: &Trace<T>, d_logit: T, grad: &mut [T]) -> T {
        let one = T::one();
        let dsp = |i: usize| pp.dsp[i];
        grad[B3] += d_logit;
        let mut dz2 = [T::zero(); 3];
        for j in 0..3 {
            grad[H3 + j] += d_logit * tr.z2[j] * dsp(H3 + j);
            dz2[j] = d_logit * pp.h3[j];
        }
        let mut du2 = [T::zero(); 3];
        for i in 0..3 {
            let sech2 = one - tr.t2[i] * tr.t2[i];
            du2[i] = dz2[i] * (one + pp.f2[i] * sech2);
            grad[A2 + i] += dz2[i] * tr.t2[i] * (one - pp.f2[i] * pp.f2[i]);
            grad[B2 + i] += du2[i];
        }
        let mut dz1 = [T::zero(); 3];
        for i in 0..3 {
            for j in 0..3 {
                grad[H2 + i * 3 + j] += du2[i] * tr.z1[j] * dsp(H2 + i * 3 + j);
                dz1[j] += du2[i] * pp.h2[i * 3 + j];
            }
        }
        let mut dx = T::zero();
        for i in 0..3 {
            let sech2 = one - tr.t1[i] * tr.t1[i];
            let du1 = dz1[i] * (one + pp.f1[i] * sech2);
            grad[A1 + i] += dz1[i] * tr.t1[i] * (one - pp.f1[i] * pp.f1[i]);
            grad[B1 + i] += du1;
            grad[H1 + i] += du1 * tr.x * dsp(H1 + i);
            dx += du1 * pp.h1[i];
        }
        dx
    }

    /// Pre-sigmoid output at `x`.
    pub fn logit(&self, x: T) -> T {
        Self::trace(&self.prepare(), x).0
    }

    pub fn cdf(&self, x: T) -> T {
        sigmoid(self.logit(x))
    }

    /// Interval probability `C(x + ½) − C(x − ½)`, floored at [`LIKELIHOOD_FLOOR`].
    pub fn likelihood(&self, x: T) -> T {
        let pp = self.prepare();
        Self::interval(&pp, x).0
    }

    fn interval(pp: &Prepared<T>, x: T) -> (T, bool, T, T) {
        let half = T::lit(0.5);
        let (lu, _) = Self::trace(pp, x + half);
        let (ll, _) = Self::trace(pp, x - half);
        // Evaluate on the side of the sigmoid with more precision.
        let s = if lu + ll > T::zero() { -T::one() } else { T::one() };
        let p = (sigmoid(s * lu) - sigmoid(s * ll)).abs();
        let floor = T::lit(LIKELIHOOD_FLOOR);
        if p < floor {
            (floor, true, lu, ll)
        } else {
            (p, false, lu, ll)
        }
    }

    /// `−log₂ p̃(x)` with gradients: returns `(bits, d bits / d x)` and adds the
    /// parameter gradient into `grad`.
    pub fn bits_with_grad(&self, x: T, grad: &mut [T]) -> (T, T) {
        self.bits_with_grad_prepared(&self.prepare(), x, grad)
    }

    fn bits_with_grad_prepared(&self, pp: &Prepared<T>, x: T, grad: &mut [T]) -> (T, T) {
        let half = T::lit(0.5);
        let (lu, tu) = Self::trace(pp, x + half);
        let (ll, tl) = Self::trace(pp, x - half);
        let s = if lu + ll > T::zero() { -T::one() } else { T::one() };
        let su = sigmoid(s * lu);
        let sl = sigmoid(s * ll);
        let p = (su - sl).abs();
        let ln2 = T::LN_2();
        if p < T::lit(LIKELIHOOD_FLOOR) {
            return (-T::lit(LIKELIHOOD_FLOOR).ln() / ln2, T::zero());
        }
        let bits = -p.ln() / ln2;
        let dbits_dp = -T::one() / (p * ln2);
        // σ'(L) is symmetric, so it can be taken on the flipped side.
        let d_lu = dbits_dp * su * (T::one() - su);
        let d_ll = -dbits_dp * sl * (T::one() - sl);
        let dx = self.backward(pp, &tu, d_lu, grad) + self.backward(pp, &tl, d_ll, grad);
        (bits, dx)
    }

    /// Sum of `−log₂ p̃` over `xs`; writes `d/dx` into `grad_x` and adds the
    /// parameter gradient into `grad_params`. Chunked with a fixed reduction order.
    pub fn total_bits(&self, xs: &[T], grad_x: &mut [T], grad_params: &mut [T]) -> T {
        let pp = self.prepare();
        let partials: Vec<(T, Vec<T>)> = xs
            .par_chunks(CHUNK)
            .zip(grad_x.par_chunks_mut(CHUNK))
            .map(|(xc, gc)| {
                let mut g = vec![T::zero(); PM_PARAMS];
                let mut bits = T::zero();
                for (x, gx) in xc.iter().zip(gc.iter_mut()) {
                    let (b, d) = self.bits_with_grad_prepared(&pp, *x, &mut g);
                    bits += b;
                    *gx = d;
                }
                (bits, g)
            })
            .collect();
        let mut total = T::zero();
        for (b, g) in partials {
            total += b;
            for (acc, v) in grad_params.iter_mut().zip(&g) {
                *acc += *v;
            }
        }
        total
    }
}

/// Gradients of the entropy loss.
#[derive(Clone, Debug)]
pub struct EntropyGrads<T> {
    /// Per latent, `d bits / d Ŵ`.
    pub surrogate: Vec<Vec<T>>,
    /// Per probability model, `d bits / d params`.
    pub models: Vec<Vec<T>>,
}

/// Self-information `Σ −log₂ p̃(Ŵ + n)` over every bound latent, one probability
/// model per latent, with fresh uniform noise.
pub fn entropy_loss<T: Real, R: Rng + ?Sized>(
    latents: &[&QuantizedLatent<T>],
    models: &[ProbabilityModel<T>],
    rng: &mut R,
) -> Result<(T, EntropyGrads<T>)> {
    let noisy: Vec<Vec<T>> = latents
        .iter()
        .map(|l| noisy_sample(&l.surrogate, rng))
        .collect();
    entropy_loss_with_noise(&noisy, models)
}

/// Same as [`entropy_loss`] on already-perturbed samples.
pub fn entropy_loss_with_noise<T: Real>(
    samples: &[Vec<T>],
    models: &[ProbabilityModel<T>],
) -> Result<(T, EntropyGrads<T>)> {
    if samples.len() != models.len() {
        return Err(shape_err(format!(
            "{} latents but {} probability models",
            samples.len(),
            models.len()
        )));
    }
    let mut total = T::zero();
    let mut grads = EntropyGrads {
        surrogate: Vec::with_capacity(samples.len()),
        models: Vec::with_capacity(samples.len()),
    };
    for (xs, pm) in samples.iter().zip(models) {
        let mut gx = vec![T::zero(); xs.len()];
        let mut gp = vec![T::zero(); PM_PARAMS];
        total += pm.total_bits(xs, &mut gx, &mut gp);
        grads.surrogate.push(gx);
        grads.models.push(gp);
    }
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::tensor::gradcheck::{grad_check, DEFAULT_STEP};
    use crate::tensor::{AdamParams, AdamState};

    fn random_model(seed: u64) -> ProbabilityModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pm = ProbabilityModel::<f64>::new(8.0, &mut rng);
        for p in &mut pm.params {
            *p += rng.gen_range(-0.5..0.5);
        }
        pm
    }

    #[test]
    fn cdf_is_strictly_increasing_with_limits() {
        for seed in 0..5 {
            let pm = random_model(seed);
            let mut prev = pm.cdf(-200.0);
            assert!(prev < 1e-3);
            for i in 1..=4000 {
                let x = -200.0 + i as f64 * 0.1;
                let c = pm.cdf(x);
                assert!(c > prev || c == 1.0, "not increasing at {x}");
                prev = c;
            }
            assert!(pm.cdf(200.0) > 1.0 - 1e-3);
        }
    }

    #[test]
    fn likelihood_is_positive_and_sums_below_one() {
        for seed in 0..5 {
            let pm = random_model(seed);
            for k in [1i64, 5, 50] {
                let s: f64 = (-k..=k).map(|v| pm.likelihood(v as f64)).sum();
                assert!(s <= 1.0 + 1e-12, "sum {s}");
            }
            for x in [-1e3, -3.3, 0.0, 0.25, 17.0, 1e3] {
                assert!(pm.likelihood(x) > 0.0);
            }
        }
    }

    #[test]
    fn likelihood_gradient_matches_finite_differences() {
        for seed in 0..10 {
            let pm = random_model(seed);
            let xs = [-3.7, -0.2, 0.0, 1.4, 6.1];
            let mut gx = vec![0.0; xs.len()];
            let mut gp = vec![0.0; PM_PARAMS];
            pm.total_bits(&xs, &mut gx, &mut gp);
            let loss = |params: &[f64]| {
                let m = ProbabilityModel {
                    params: params.to_vec(),
                };
                let mut a = vec![0.0; xs.len()];
                let mut b = vec![0.0; PM_PARAMS];
                m.total_bits(&xs, &mut a, &mut b)
            };
            let r = grad_check(loss, &pm.params, &gp, DEFAULT_STEP, 1e-4, 1e-3);
            assert!(r.passed, "seed {seed}: {r:?}");

            let loss_x = |x: &[f64]| {
                let mut a = vec![0.0; x.len()];
                let mut b = vec![0.0; PM_PARAMS];
                pm.total_bits(x, &mut a, &mut b)
            };
            let r = grad_check(loss_x, &xs, &gx, DEFAULT_STEP, 1e-4, 1e-3);
            assert!(r.passed, "seed {seed} (x): {r:?}");
        }
    }

    #[test]
    fn entropy_of_half_probability_is_one_bit_each() {
        // A model squeezed to a near-step CDF at 0 gives p̃ = ½ at x = ±½.
        let mut pm = ProbabilityModel::<f64>::new(1.0, &mut ChaCha8Rng::seed_from_u64(0));
        for p in &mut pm.params[H1..B1] {
            *p = 60.0;
        }
        for i in 0..3 {
            pm.params[B1 + i] = 0.0;
            pm.params[A1 + i] = 0.0;
            pm.params[B2 + i] = 0.0;
            pm.params[A2 + i] = 0.0;
        }
        pm.params[B3] = 0.0;
        let samples = vec![vec![0.5, -0.5, 0.5, -0.5]];
        let (bits, _) = entropy_loss_with_noise(&samples, std::slice::from_ref(&pm)).unwrap();
        assert!((bits - 4.0).abs() < 1e-6, "bits {bits}");
        // And near-certain mass at 0 costs almost nothing.
        let (bits, _) = entropy_loss_with_noise(&[vec![0.0; 4]], &[pm]).unwrap();
        assert!(bits < 1e-6, "bits {bits}");
    }

    #[test]
    fn mismatched_model_count_is_error() {
        let pm = random_model(1);
        assert!(entropy_loss_with_noise(&[vec![0.0], vec![1.0]], &[pm]).is_err());
    }

    fn fit_models(values: &[f64], steps: usize, seed: u64) -> (f64, f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pm = ProbabilityModel::<f64>::new(10.0, &mut rng);
        let mut adam = AdamState::new(PM_PARAMS, AdamParams::default());
        let latent = QuantizedLatent {
            surrogate: values.to_vec(),
            scale: 1.0,
            shape: vec![values.len()],
        };
        let mut first = 0.0;
        let mut sum = 0.0;
        for step in 0..steps {
            let (bits, g) =
                entropy_loss(&[&latent], std::slice::from_ref(&pm), &mut rng).unwrap();
            if step == 0 {
                first = bits;
            }
            sum += bits;
            adam.step(&mut pm.params, &g.models[0], 1e-2).unwrap();
        }
        // Rate of the integer values under the fitted model.
        let exact: f64 = values.iter().map(|&v| -pm.likelihood(v).log2()).sum();
        (first, sum / steps as f64, exact / values.len() as f64)
    }

    #[test]
    fn model_only_optimization_lowers_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..2000).map(|_| rng.gen_range(-3i32..=3) as f64 * 2.0).collect();
        let (first, mean, _) = fit_models(&values, 100, 4);
        assert!(mean < first, "mean {mean} vs initial {first}");
    }

    #[test]
    fn uniform_sixteen_symbols_cost_four_bits() {
        // Brute-force oracle: entropy of a uniform law over 16 symbols is log2(16) = 4.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..4000).map(|_| rng.gen_range(-8i32..8) as f64).collect();
        let (_, _, per_element) = fit_models(&values, 1500, 6);
        assert!((per_element - 4.0).abs() < 0.15, "bits/element {per_element}");
    }
}
