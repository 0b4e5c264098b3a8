use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::error::{shape_err, Error, Result};
use crate::quant::{entropy_loss_with_noise, EntropyGrads, ProbabilityModel, QuantizedLatent};
use crate::tensor::{
    conv3x3, conv3x3_backward, linear, linear_backward, pixel_shuffle, pixel_unshuffle, sine_act,
    sine_act_backward, Real, Tensor,
};

/// One SIREN layer; both operands are stored as quantized latents.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpLayer<T> {
    pub weight: QuantizedLatent<T>,
    pub bias: QuantizedLatent<T>,
}

/// One 3×3 convolution of the head; stored as plain floats.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Network representing one group of frames.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupModel<T = f32> {
    pub config: ModelConfig,
    pub mlp: Vec<MlpLayer<T>>,
    /// Block convolutions in order, then the final conv to RGB.
    pub head: Vec<ConvLayer<T>>,
}

/// How MLP weights are materialized in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    /// `φ · round(Ŵ)`, gradients passed straight through the rounding.
    Quantized,
    /// `φ · Ŵ`; used to check the straight-through gradients by finite differences.
    Relaxed,
}

/// Gradients with respect to every trainable quantity of a [`GroupModel`].
#[derive(Clone, Debug)]
pub struct ModelGrads<T> {
    /// Per latent in [`GroupModel::latents`] order, `d loss / d Ŵ`.
    pub surrogates: Vec<Vec<T>>,
    /// Per latent, `d loss / d φ`.
    pub scales: Vec<T>,
    /// Flattened like [`GroupModel::head_params`].
    pub head: Vec<T>,
    /// Per probability model, `d loss / d params`.
    pub models: Vec<Vec<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub entropy_bits: f64,
}

/// `pe[2i] = sin(t / f^{2i})`, `pe[2i+1] = cos(t / f^{2i})` for `i < d/2`.
pub fn positional_encode<T: Real>(t: usize, d: usize, base: f64) -> Vec<T> {
    let mut out = vec![T::zero(); d];
    let t = t as f64;
    for i in 0..d / 2 {
        let arg = t / base.powi(2 * i as i32);
        out[2 * i] = T::lit(arg.sin());
        out[2 * i + 1] = T::lit(arg.cos());
    }
    out
}

/// Uniform noise in `[-½, ½)` for every latent, in [`GroupModel::latents`] order.
pub fn draw_noise<T: Real, R: Rng + ?Sized>(model: &GroupModel<T>, rng: &mut R) -> Vec<Vec<T>> {
    model
        .latents()
        .iter()
        .map(|l| {
            (0..l.len())
                .map(|_| T::lit(rng.gen_range(-0.5..0.5)))
                .collect()
        })
        .collect()
}

struct Cache<T> {
    weights: Vec<(Tensor<T>, Tensor<T>)>,
    mlp_inputs: Vec<Tensor<T>>,
    mlp_pre: Vec<Tensor<T>>,
    head_inputs: Vec<Tensor<T>>,
    /// Post-shuffle, pre-sine activations of each block.
    head_pre: Vec<Tensor<T>>,
}

impl<T: Real> GroupModel<T> {
    /// SIREN initialization; every latent starts within about `±latent_levels`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.width;
        let levels = config.latent_levels;
        let mut mlp = Vec::with_capacity(config.num_siren_layers);
        let mut fan_in = 2;
        for l in 0..config.num_siren_layers {
            let w_bound = if l == 0 {
                1.0 / fan_in as f64
            } else {
                (6.0 / fan_in as f64).sqrt() / config.omega0
            };
            let b_bound = 1.0 / (fan_in as f64).sqrt();
            let w = uniform(&[d, fan_in], w_bound, &mut rng);
            let b = uniform(&[d], b_bound, &mut rng);
            mlp.push(MlpLayer {
                weight: QuantizedLatent::from_weights(&w, T::lit(w_bound / levels)),
                bias: QuantizedLatent::from_weights(&b, T::lit(b_bound / levels)),
            });
            fan_in = d;
        }
        let mut head = Vec::with_capacity(config.head.blocks.len() + 1);
        let mut c_in = config.feature_channels();
        let gain = config.head.init_gain;
        for block in &config.head.blocks {
            let c_out = block.channels * block.upsample * block.upsample;
            head.push(conv_layer(c_in, c_out, gain, &mut rng));
            c_in = block.channels;
        }
        head.push(conv_layer(c_in, 3, gain, &mut rng));
        Ok(Self {
            config: config.clone(),
            mlp,
            head,
        })
    }

    /// Weight and bias latents of every SIREN layer, in layer order.
    pub fn latents(&self) -> Vec<&QuantizedLatent<T>> {
        self.mlp.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn latents_mut(&mut self) -> Vec<&mut QuantizedLatent<T>> {
        self.mlp
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn num_latent_values(&self) -> usize {
        self.latents().iter().map(|l| l.len()).sum()
    }

    /// Head kernels and biases concatenated layer by layer.
    pub fn head_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_head_params());
        for c in &self.head {
            out.extend_from_slice(c.kernel.data());
            out.extend_from_slice(c.bias.data());
        }
        out
    }

    pub fn num_head_params(&self) -> usize {
        self.head.iter().map(|c| c.kernel.len() + c.bias.len()).sum()
    }

    pub fn set_head_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_head_params() {
            return Err(shape_err(format!(
                "{} head values for {} parameters",
                flat.len(),
                self.num_head_params()
            )));
        }
        let mut pos = 0;
        for c in &mut self.head {
            let k = c.kernel.len();
            c.kernel.data_mut().copy_from_slice(&flat[pos..pos + k]);
            pos += k;
            let b = c.bias.len();
            c.bias.data_mut().copy_from_slice(&flat[pos..pos + b]);
            pos += b;
        }
        Ok(())
    }

    /// Patch volumes `[B, G, Hp, Wp, 3]` for centroids `[B, 2]`.
    pub fn forward(&self, centroids: &Tensor<T>, mode: WeightMode) -> Result<Tensor<T>> {
        Ok(self.forward_cached(centroids, mode, true)?.0)
    }

    /// `encode = false` drops the per-frame offsets; only tests use it.
    fn forward_cached(
        &self,
        centroids: &Tensor<T>,
        mode: WeightMode,
        encode: bool,
    ) -> Result<(Tensor<T>, Cache<T>)> {
        centroids.expect_rank(2, "centroids")?;
        if centroids.shape()[1] != 2 {
            return Err(shape_err(format!("centroids {:?}", centroids.shape())));
        }
        let cfg = &self.config;
        let batch = centroids.shape()[0];
        let g = cfg.group_size;
        let omega0 = T::lit(cfg.omega0);
        let head_omega = T::lit(cfg.head.omega);

        let weights: Vec<(Tensor<T>, Tensor<T>)> = self
            .mlp
            .iter()
            .map(|l| match mode {
                WeightMode::Quantized => (l.weight.decode_weights(), l.bias.decode_weights()),
                WeightMode::Relaxed => (l.weight.relaxed_weights(), l.bias.relaxed_weights()),
            })
            .collect();

        let mut cache = Cache {
            mlp_inputs: Vec::with_capacity(weights.len()),
            mlp_pre: Vec::with_capacity(weights.len()),
            head_inputs: Vec::with_capacity(self.head.len()),
            head_pre: Vec::with_capacity(self.head.len()),
            weights: Vec::new(),
        };
        let mut h = centroids.clone();
        for (w, b) in &weights {
            let pre = linear(&h, w, b)?;
            let next = sine_act(&pre, omega0);
            cache.mlp_inputs.push(h);
            cache.mlp_pre.push(pre);
            h = next;
        }
        cache.weights = weights;

        // Replicate each patch feature per frame and offset it by the frame's encoding.
        let d = cfg.width;
        let pes: Vec<Vec<T>> = (0..g)
            .map(|t| {
                if encode {
                    positional_encode(t, d, cfg.positional_base)
                } else {
                    vec![T::zero(); d]
                }
            })
            .collect();
        let feat = h.data();
        let mut z = Vec::with_capacity(batch * g * d);
        for b in 0..batch {
            let s = &feat[b * d..(b + 1) * d];
            for pe in &pes {
                z.extend(s.iter().zip(pe).map(|(a, p)| *a + *p));
            }
        }
        let mut x = Tensor::new(
            vec![batch * g, cfg.feature_channels(), cfg.head.base_h, cfg.head.base_w],
            z,
        )?;

        for (conv, block) in self.head.iter().zip(&cfg.head.blocks) {
            let y = pixel_shuffle(&conv3x3(&x, &conv.kernel, &conv.bias)?, block.upsample)?;
            let next = sine_act(&y, head_omega);
            cache.head_inputs.push(x);
            cache.head_pre.push(y);
            x = next;
        }
        let last = self.head.last().expect("head has a final conv");
        let rgb = conv3x3(&x, &last.kernel, &last.bias)?;
        cache.head_inputs.push(x);

        Ok((planar_to_volume(&rgb, batch, g)?, cache))
    }

    /// Backpropagates `d loss / d output` (volume layout) into parameter gradients.
    fn backward(&self, cache: &Cache<T>, grad_out: &Tensor<T>, mode: WeightMode) -> Result<ModelGrads<T>> {
        let cfg = &self.config;
        let g = cfg.group_size;
        let batch = grad_out.shape()[0];
        let head_omega = T::lit(cfg.head.omega);
        let omega0 = T::lit(cfg.omega0);

        let mut head_grads: Vec<(Tensor<T>, Tensor<T>)> = Vec::with_capacity(self.head.len());
        let last = self.head.len() - 1;
        let cg = conv3x3_backward(
            &cache.head_inputs[last],
            &self.head[last].kernel,
            &volume_to_planar(grad_out)?,
        )?;
        head_grads.push((cg.kernel, cg.bias));
        let mut dx = cg.input;
        for k in (0..last).rev() {
            let block = &cfg.head.blocks[k];
            let dy = sine_act_backward(&cache.head_pre[k], head_omega, &dx)?;
            let dconv = pixel_unshuffle(&dy, block.upsample)?;
            let cg = conv3x3_backward(&cache.head_inputs[k], &self.head[k].kernel, &dconv)?;
            head_grads.push((cg.kernel, cg.bias));
            dx = cg.input;
        }
        head_grads.reverse();
        let mut head = Vec::with_capacity(self.num_head_params());
        for (k, b) in &head_grads {
            head.extend_from_slice(k.data());
            head.extend_from_slice(b.data());
        }

        // The positional offsets are constant, so the feature gradient sums over frames.
        let d = cfg.width;
        let dz = dx.data();
        let mut ds = vec![T::zero(); batch * d];
        for b in 0..batch {
            let acc = &mut ds[b * d..(b + 1) * d];
            for t in 0..g {
                let row = &dz[(b * g + t) * d..(b * g + t + 1) * d];
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += *v;
                }
            }
        }
        let mut dh = Tensor::new(vec![batch, d], ds)?;

        let n = self.mlp.len();
        let mut surrogates = vec![Vec::new(); 2 * n];
        let mut scales = vec![T::zero(); 2 * n];
        for l in (0..n).rev() {
            let dpre = sine_act_backward(&cache.mlp_pre[l], omega0, &dh)?;
            let lg = linear_backward(&cache.mlp_inputs[l], &cache.weights[l].0, &dpre)?;
            for (slot, lat, gw) in [
                (2 * l, &self.mlp[l].weight, &lg.weight),
                (2 * l + 1, &self.mlp[l].bias, &lg.bias),
            ] {
                let (gs, gphi) = latent_grads(lat, gw.data(), mode);
                surrogates[slot] = gs;
                scales[slot] = gphi;
            }
            dh = lg.input;
        }
        Ok(ModelGrads {
            surrogates,
            scales,
            head,
            models: Vec::new(),
        })
    }
}

/// Rate-distortion objective `MSE + λ · bits` of one group and its gradients.
///
/// `noise` holds the uniform perturbations of each latent (see [`draw_noise`]);
/// passing it in keeps the objective a deterministic function of the parameters.
pub fn group_loss<T: Real>(
    model: &GroupModel<T>,
    centroids: &Tensor<T>,
    targets: &[T],
    lambda: f64,
    models: &[ProbabilityModel<T>],
    noise: &[Vec<T>],
    mode: WeightMode,
) -> Result<(LossBreakdown, ModelGrads<T>)> {
    let (out, cache) = model.forward_cached(centroids, mode, true)?;
    if out.len() != targets.len() {
        return Err(shape_err(format!(
            "prediction has {} values, target {}",
            out.len(),
            targets.len()
        )));
    }
    if out.is_empty() {
        return Err(Error::EmptyTensor);
    }
    let n = T::lit(out.len() as f64);
    let two = T::lit(2.0);
    let mut sq = T::zero();
    let grad: Vec<T> = out
        .data()
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let e = p - t;
            sq += e * e;
            two * e / n
        })
        .collect();
    let mse = sq / n;
    let mut grads = model.backward(&cache, &Tensor::new(out.shape().to_vec(), grad)?, mode)?;

    let latents = model.latents();
    if noise.len() != latents.len() {
        return Err(shape_err(format!(
            "{} noise vectors for {} latents",
            noise.len(),
            latents.len()
        )));
    }
    let mut samples = Vec::with_capacity(latents.len());
    for (lat, nz) in latents.iter().zip(noise) {
        if nz.len() != lat.len() {
            return Err(shape_err("noise length differs from latent"));
        }
        samples.push(lat.surrogate.iter().zip(nz).map(|(a, b)| *a + *b).collect::<Vec<T>>());
    }
    let (bits, EntropyGrads { surrogate, models: gm }) = entropy_loss_with_noise(&samples, models)?;
    let lam = T::lit(lambda);
    for (gs, ge) in grads.surrogates.iter_mut().zip(&surrogate) {
        for (a, b) in gs.iter_mut().zip(ge) {
            *a += lam * *b;
        }
    }
    grads.models = gm
        .into_iter()
        .map(|g| g.into_iter().map(|v| lam * v).collect())
        .collect();

    let mse = mse.to_f64().unwrap_or(f64::NAN);
    let bits = bits.to_f64().unwrap_or(f64::NAN);
    Ok((
        LossBreakdown {
            total: mse + lambda * bits,
            mse,
            entropy_bits: bits,
        },
        grads,
    ))
}

/// Straight-through gradients of `W = φ · round(Ŵ)` given `d loss / d W`.
fn latent_grads<T: Real>(lat: &QuantizedLatent<T>, gw: &[T], mode: WeightMode) -> (Vec<T>, T) {
    let gs = gw.iter().map(|&g| lat.scale * g).collect();
    let mut gphi = T::zero();
    for (&s, &g) in lat.surrogate.iter().zip(gw) {
        let v = match mode {
            WeightMode::Quantized => crate::quant::ste_round(s),
            WeightMode::Relaxed => s,
        };
        gphi += v * g;
    }
    (gs, gphi)
}

fn uniform<T: Real>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..bound)))
}

fn conv_layer<T: Real>(c_in: usize, c_out: usize, gain: f64, rng: &mut ChaCha8Rng) -> ConvLayer<T> {
    let bound = gain * (6.0 / (c_in * 9) as f64).sqrt();
    ConvLayer {
        kernel: uniform(&[c_out, c_in, 3, 3], bound, rng),
        bias: Tensor::zeros(&[c_out]),
    }
}

/// `[B·G, 3, H, W]` → `[B, G, H, W, 3]`.
fn planar_to_volume<T: Real>(x: &Tensor<T>, batch: usize, g: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    let (h, w) = (s[2], s[3]);
    let plane = h * w;
    let src = x.data();
    let mut out = vec![T::zero(); x.len()];
    for item in 0..batch * g {
        let base = item * 3 * plane;
        for p in 0..plane {
            for c in 0..3 {
                out[base + p * 3 + c] = src[base + c * plane + p];
            }
        }
    }
    Tensor::new(vec![batch, g, h, w, 3], out)
}

/// `[B, G, H, W, 3]` → `[B·G, 3, H, W]`.
fn volume_to_planar<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    x.expect_rank(5, "volume")?;
    let s = x.shape();
    let (items, h, w) = (s[0] * s[1], s[2], s[3]);
    let plane = h * w;
    let src = x.data();
    let mut out = vec![T::zero(); x.len()];
    for item in 0..items {
        let base = item * 3 * plane;
        for p in 0..plane {
            for c in 0..3 {
                out[base + c * plane + p] = src[base + p * 3 + c];
            }
        }
    }
    Tensor::new(vec![items, 3, h, w], out)
}
