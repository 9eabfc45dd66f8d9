//! The costmap network.
//!
//! Two 3x3 convolutions extract shared features. A deep branch pools them,
//! applies two more convolutions and upsamples back; the shallow features
//! pass through a spatial-attention gate on the skip connection. The two are
//! concatenated and a 1x1 convolution with a sigmoid head maps them to costs
//! in `[c_min, 1]`.

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Shape, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geogrid::{CostMap, FeatureStack, C_MIN, FEATURE_CHANNELS};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, TBCK_MAGIC, TBCK_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Output widths of conv1..conv4.
    pub stem_channels: [usize; 4],
    pub attention_kernel: usize,
    pub c_min: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: FEATURE_CHANNELS.len(),
            stem_channels: [16, 32, 32, 64],
            attention_kernel: 7,
            c_min: f64::from(C_MIN),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_seed(seed: u64) -> Self {
        ModelConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels != FEATURE_CHANNELS.len() {
            return Err(Error::Config(format!(
                "in_channels must be {}, got {}",
                FEATURE_CHANNELS.len(),
                self.in_channels
            )));
        }
        if self.stem_channels.contains(&0) {
            return Err(Error::Config(format!("zero width in stem_channels {:?}", self.stem_channels)));
        }
        if self.attention_kernel % 2 == 0 {
            return Err(Error::Config(format!("attention_kernel must be odd, got {}", self.attention_kernel)));
        }
        if !(self.c_min > 0.0 && self.c_min < 1.0) {
            return Err(Error::Config(format!("c_min must lie in (0, 1), got {}", self.c_min)));
        }
        Ok(())
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Shape)> {
        let [c1, c2, c3, c4] = self.stem_channels;
        let k = self.attention_kernel;
        let conv = |name: &str, oc: usize, ic: usize, k: usize| {
            [
                (format!("{name}.weight"), [oc, ic, k, k]),
                (format!("{name}.bias"), [1, oc, 1, 1]),
            ]
        };
        [
            conv("conv1", c1, self.in_channels, 3),
            conv("conv2", c2, c1, 3),
            conv("conv3", c3, c2, 3),
            conv("conv4", c4, c3, 3),
            conv("attention", 1, 2, k),
            conv("head", 1, c4 + c2, 1),
        ]
        .into_iter()
        .flatten()
        .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Real = f32> {
    pub config: ModelConfig,
    /// `(name, tensor)` in the order given by [`ModelConfig::param_shapes`].
    pub params: Vec<(String, Tensor<T>)>,
}

/// Tape handles produced by one forward pass.
pub struct ForwardVars {
    pub costmap: Var,
    /// One per parameter, in model order.
    pub params: Vec<Var>,
}

impl<T: Real> Model<T> {
    /// He-normal weights from the seeded generator; zero biases.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = config
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let t = if name.ends_with(".bias") {
                    Tensor::zeros(shape)
                } else {
                    let fan_in = shape[1] * shape[2] * shape[3];
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    let n = shape.iter().product();
                    Tensor {
                        shape,
                        data: (0..n).map(|_| T::of(normal.sample(&mut rng))).collect(),
                    }
                };
                (name, t)
            })
            .collect();
        Ok(Model { config, params })
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|(_, t)| t.is_finite())
    }

    /// Records the network on `tape` for an `(n, 4, h, w)` input. Parameters
    /// are tape leaves that require gradients when `trainable`.
    pub fn forward_on(&self, tape: &mut Tape<T>, x: Var, trainable: bool) -> Result<ForwardVars> {
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|(_, t)| tape.leaf(t.clone(), trainable))
            .collect();
        let costmap = self.forward_with(tape, x, &params)?;
        Ok(ForwardVars { costmap, params })
    }

    /// Like [`Model::forward_on`] with caller-supplied parameter variables,
    /// one per entry of `self.params`.
    pub fn forward_with(&self, tape: &mut Tape<T>, x: Var, params: &[Var]) -> Result<Var> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!("{} parameter vars for {} parameters", params.len(), self.params.len())));
        }
        let [_, c, h, w] = tape.shape(x);
        if c != self.config.in_channels {
            return Err(Error::Shape(format!("model expects {} input channels, got {c}", self.config.in_channels)));
        }
        if h < 8 || w < 8 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("input must be even-sized and at least 8x8, got {h}x{w}")));
        }
        let p = |i: usize| (params[2 * i], params[2 * i + 1]);
        let conv_relu = |tape: &mut Tape<T>, x: Var, (w, b): (Var, Var)| -> Result<Var> {
            let y = tape.conv2d(x, w, b, 1, 1)?;
            tape.relu(y)
        };
        let f1 = conv_relu(tape, x, p(0))?;
        let skip = conv_relu(tape, f1, p(1))?;

        let pooled = tape.maxpool2(skip)?;
        let d3 = conv_relu(tape, pooled, p(2))?;
        let d4 = conv_relu(tape, d3, p(3))?;
        let deep = tape.upsample2(d4)?;

        let (aw, ab) = p(4);
        let gated = spatial_attention(tape, skip, aw, ab)?;
        let fused = tape.concat_channels(deep, gated)?;

        let (hw, hb) = p(5);
        let logits = tape.conv2d(fused, hw, hb, 1, 0)?;
        let out = tape.sigmoid(logits)?;
        let c_min = self.config.c_min;
        tape.affine(out, T::of(1.0 - c_min), T::of(c_min))
    }

    /// Costmap for one feature stack; no gradients are tracked.
    pub fn predict(&self, fs: &FeatureStack) -> Result<CostMap> {
        let mut tape = Tape::new();
        let x = tape.constant(stack_tensor(fs)?);
        let out = self.forward_on(&mut tape, x, false)?;
        let values = tape.value(out.costmap).to_f32_vec();
        // Rounding to f32 can land a hair outside the range.
        CostMap::from_values_clamped(fs.spec.clone(), values)
    }
}

/// Gates `f` by `sigmoid(conv(channel_mean_max(f)))`, one weight per pixel
/// shared across channels.
pub fn spatial_attention<T: Real>(tape: &mut Tape<T>, f: Var, weight: Var, bias: Var) -> Result<Var> {
    let ws = tape.shape(weight);
    if ws[0] != 1 || ws[1] != 2 {
        return Err(Error::Shape(format!("attention kernel must be (1, 2, k, k), got {ws:?}")));
    }
    let stats = tape.channel_mean_max(f)?;
    let logits = tape.conv2d(stats, weight, bias, 1, ws[2] / 2)?;
    let gate = tape.sigmoid(logits)?;
    tape.mul(f, gate)
}

/// `(1, 4, h, w)` input tensor for a feature stack.
pub fn stack_tensor<T: Real>(fs: &FeatureStack) -> Result<Tensor<T>> {
    Tensor::from_f32([1, FEATURE_CHANNELS.len(), fs.spec.height, fs.spec.width], &fs.to_chw())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::geogrid::{GridSpec, Raster};
    use rand::Rng;

    pub(crate) fn random_stack(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FeatureStack {
        let spec = GridSpec::unit(w, h);
        let channels = FEATURE_CHANNELS.map(|name| {
            let v = (0..w * h).map(|_| rng.random_range(0.0..=1.0)).collect();
            Raster::new(spec.clone(), name, v).unwrap()
        });
        FeatureStack::new(spec, channels).unwrap()
    }

    #[test]
    fn init_is_seeded() {
        let a = Model::<f32>::init(ModelConfig::with_seed(3)).unwrap();
        let b = Model::<f32>::init(ModelConfig::with_seed(3)).unwrap();
        let c = Model::<f32>::init(ModelConfig::with_seed(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
        assert!(a.param("head.bias").unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_std_matches_he() {
        let cfg = ModelConfig {
            stem_channels: [16, 32, 64, 128],
            ..ModelConfig::with_seed(1)
        };
        let m = Model::<f64>::init(cfg).unwrap();
        let w = m.param("conv4.weight").unwrap();
        let n = w.numel() as f64;
        let mean = w.sum() / n;
        let var = w.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = (2.0 / (64.0 * 9.0f64)).sqrt();
        assert!((var.sqrt() / expected - 1.0).abs() < 0.1);
        assert!(mean.abs() < 0.1 * expected);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ModelConfig::default();
        cfg.in_channels = 3;
        assert!(matches!(Model::<f32>::init(cfg), Err(Error::Config(_))));
        let mut cfg = ModelConfig::default();
        cfg.stem_channels[2] = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.attention_kernel = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn attention_gate_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f: Tensor<f64> = Tensor::new([1, 3, 4, 4], (0..48).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();

        let mut t = Tape::new();
        let fv = t.constant(f.clone());
        let w = t.constant(Tensor::zeros([1, 2, 7, 7]));
        let b = t.constant(Tensor::scalar(0.0));
        let g = spatial_attention(&mut t, fv, w, b).unwrap();
        let half: Vec<f64> = f.data.iter().map(|v| v / 2.0).collect();
        assert_eq!(t.value(g).data, half);

        let b_open = t.constant(Tensor::scalar(1e3));
        let g = spatial_attention(&mut t, fv, w, b_open).unwrap();
        assert_eq!(t.value(g), &f);

        let bad = t.constant(Tensor::zeros([1, 3, 7, 7]));
        assert!(matches!(spatial_attention(&mut t, fv, bad, b), Err(Error::Shape(_))));
    }

    #[test]
    fn attention_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f: Tensor<f64> = Tensor::new([1, 3, 5, 5], (0..75).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let w: Tensor<f64> = Tensor::new([1, 2, 7, 7], (0..98).map(|_| rng.random_range(-0.3..0.3)).collect()).unwrap();
        let wc = w.clone();
        let r = grad_check(
            |t, fv| {
                let w = t.constant(wc.clone());
                let b = t.constant(Tensor::scalar(0.1));
                let g = spatial_attention(t, fv, w, b)?;
                let sq = t.mul(g, g)?;
                t.sum(sq)
            },
            &f,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(r.passed(), "{r:?}");
        let fc = f.clone();
        let r = grad_check(
            |t, wv| {
                let f = t.constant(fc.clone());
                let b = t.constant(Tensor::scalar(0.1));
                let g = spatial_attention(t, f, wv, b)?;
                t.sum(g)
            },
            &w,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn forward_range_shape_and_purity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = Model::<f32>::init(ModelConfig::with_seed(7)).unwrap();
        for _ in 0..6 {
            let w = 2 * rng.random_range(4..=32);
            let h = 2 * rng.random_range(4..=32);
            let fs = random_stack(&mut rng, w, h);
            let a = m.predict(&fs).unwrap();
            assert_eq!((a.width(), a.height()), (w, h));
            assert!(a.values.iter().all(|v| (C_MIN..=1.0).contains(v)));
            let b = m.predict(&fs).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn forward_rejects_bad_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = Model::<f32>::init(ModelConfig::default()).unwrap();
        for (w, h) in [(6, 8), (9, 8), (8, 11)] {
            let fs = random_stack(&mut rng, w, h);
            assert!(matches!(m.predict(&fs), Err(Error::Shape(_))));
        }
    }

    #[test]
    fn extreme_head_bias_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fs = random_stack(&mut rng, 8, 8);
        for bias in [-1e4f32, 1e4] {
            let mut m = Model::<f32>::init(ModelConfig::default()).unwrap();
            m.params.last_mut().unwrap().1.data[0] = bias;
            let cm = m.predict(&fs).unwrap();
            let expect = if bias < 0.0 { C_MIN } else { 1.0 };
            assert!(cm.values.iter().all(|&v| (v - expect).abs() < 1e-6));
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let fs = random_stack(&mut rng, 8, 8);
        let cfg = ModelConfig {
            stem_channels: [3, 4, 4, 5],
            ..ModelConfig::with_seed(2)
        };
        let model = Model::<f64>::init(cfg).unwrap();
        let x = stack_tensor::<f64>(&fs).unwrap();
        let target: Tensor<f64> = Tensor::new([1, 1, 8, 8], (0..64).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        for (pi, (name, p)) in model.params.iter().enumerate() {
            let r = grad_check(
                |t, pv| {
                    let xv = t.constant(x.clone());
                    let mut params: Vec<Var> = model.params.iter().map(|(_, p)| t.constant(p.clone())).collect();
                    params[pi] = pv;
                    let y = model.forward_with(t, xv, &params)?;
                    t.l1_mean(y, &target)
                },
                p,
                1e-6,
                1e-4,
            )
            .unwrap();
            assert!(r.passed(), "{name}: {r:?}");
        }
    }
}
