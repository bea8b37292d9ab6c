//! Layer stacks: named, serializable representations `f(·)`.
//!
//! A [`StackSpec`] is a declarative description — optional preprocessing, an
//! ordered layer list, and a tap index selecting which layer's output is the
//! response. [`StackSpec::build`] validates the shape chain for a concrete
//! input and returns a [`StackRep`], the runtime object that evaluates
//! responses and pulls cotangents back to pixel space.
//!
//! Shipped presets range from the trivial (`pixel`, `fourier_mag`) to small
//! VGG-style stands-ins (`smallnet_*`): one to three stages of convolution →
//! half-wave rectification → pooling, with fixed seeded filters so every run
//! is reproducible without downloading weights. The max/L2 variants differ
//! only in their pooling operator, which is exactly the comparison the
//! geodesic experiments probe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{
    hanning_kernel, AffinePreprocess, Conv2d, FourierMagnitude, L2Pool, Layer, MaxPool, Padding,
};
use crate::{Error, Result, Tensor};

/// Channel-wise affine preprocessing, reused as its own serializable spec.
pub type PreprocessSpec = AffinePreprocess;

/// Declarative description of a representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocess: Option<PreprocessSpec>,
    pub layers: Vec<Layer>,
    /// Index of the layer whose output is the response; `None` taps the last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap: Option<usize>,
}

impl StackSpec {
    /// Resolved tap index.
    pub fn tap_index(&self) -> usize {
        self.tap.unwrap_or(self.layers.len().saturating_sub(1))
    }

    /// Shape of the (unflattened) response for a given input shape.
    pub fn response_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input_shape.to_vec();
        if let Some(pre) = &self.preprocess {
            shape = pre.out_shape(&shape)?;
        }
        let tap = self.tap_index();
        if tap >= self.layers.len() {
            return Err(Error::Config(format!(
                "tap index {tap} out of bounds for {} layers",
                self.layers.len()
            )));
        }
        for (i, layer) in self.layers[..=tap].iter().enumerate() {
            shape = layer.out_shape(&shape).map_err(|e| {
                Error::Config(format!("stack '{}' layer {i} rejects its input: {e}", self.name))
            })?;
        }
        Ok(shape)
    }

    /// Validate against a concrete input shape and build the runtime stack.
    pub fn build(&self, input_shape: &[usize]) -> Result<StackRep> {
        self.response_shape(input_shape)?;
        let mut steps = Vec::new();
        if let Some(pre) = &self.preprocess {
            steps.push(Layer::AffinePreprocess(pre.clone()));
        }
        steps.extend(self.layers[..=self.tap_index()].iter().cloned());
        Ok(StackRep { steps })
    }
}

/// A differentiable representation: maps images to response tensors and pulls
/// response-space cotangents back to pixel space.
///
/// `forward` returns an evaluation object (holding whatever the pullback
/// needs, typically the activation chain); `pullback` consumes it by
/// reference, so one forward pass supports many pullbacks.
pub trait Representation: Sync {
    type Eval: Send + Sync;

    fn forward(&self, x: &Tensor) -> Result<Self::Eval>;

    fn response<'a>(&self, eval: &'a Self::Eval) -> &'a Tensor;

    /// Gradient of `⟨f(x), cot⟩` with respect to `x`.
    fn pullback(&self, eval: &Self::Eval, cot: &Tensor) -> Result<Tensor>;

    /// Convenience: response of a single input.
    fn evaluate(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.response(&self.forward(x)?).clone())
    }

    /// Convenience: forward then pull back in one call.
    fn pullback_at(&self, x: &Tensor, cot: &Tensor) -> Result<Tensor> {
        self.pullback(&self.forward(x)?, cot)
    }
}

/// Runtime form of a [`StackSpec`]: preprocessing folded in as a first step.
#[derive(Debug, Clone)]
pub struct StackRep {
    steps: Vec<Layer>,
}

/// Activation chain from one forward pass: `acts[0]` is the input, `acts[i]`
/// the output of step `i-1`, and the last entry the response.
pub struct StackEval {
    acts: Vec<Tensor>,
}

impl StackRep {
    pub fn steps(&self) -> &[Layer] {
        &self.steps
    }
}

impl Representation for StackRep {
    type Eval = StackEval;

    fn forward(&self, x: &Tensor) -> Result<StackEval> {
        let mut acts = Vec::with_capacity(self.steps.len() + 1);
        acts.push(x.clone());
        for step in &self.steps {
            let next = step.forward(acts.last().unwrap())?;
            acts.push(next);
        }
        Ok(StackEval { acts })
    }

    fn response<'a>(&self, eval: &'a StackEval) -> &'a Tensor {
        eval.acts.last().unwrap()
    }

    fn pullback(&self, eval: &StackEval, cot: &Tensor) -> Result<Tensor> {
        let mut grad = cot.clone();
        for (i, step) in self.steps.iter().enumerate().rev() {
            grad = step.vjp(&eval.acts[i], &eval.acts[i + 1], &grad)?;
        }
        Ok(grad)
    }
}

/// Seed for all fixed random filter banks in the smallnet presets. Streams
/// separate the individual banks.
pub const SMALLNET_SEED: u64 = 0x7e0d_e51c;

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 6] = [
    "pixel",
    "fourier_mag",
    "smallnet_max",
    "smallnet_l2",
    "smallnet_l2_pool1_36",
    "smallnet_l2_pool2_18",
];

/// Built-in representations.
///
/// - `pixel`: the identity; responses are the pixels themselves.
/// - `fourier_mag`: per-channel 2-D Fourier magnitude.
/// - `smallnet_max` / `smallnet_l2`: three stages of 5×5 convolution →
///   half-wave → stride-2 pooling on 3-channel input, with max pooling or 6×6
///   Hanning L2 pooling respectively. Stage 1 is a sign-completed oriented
///   Gabor quadrature bank; deeper stages are seeded positive lowpass mixers.
/// - `smallnet_l2_pool1_36` / `smallnet_l2_pool2_18`: one- and two-stage
///   variants whose final pooling extent is enlarged to 36×36 / 18×18 so the
///   receptive field sizes of all three taps approximately match.
pub fn preset(name: &str) -> Result<StackSpec> {
    let spec = |layers| StackSpec {
        name: name.to_string(),
        preprocess: None,
        layers,
        tap: None,
    };
    match name {
        "pixel" => Ok(spec(vec![Layer::Identity])),
        "fourier_mag" => Ok(spec(vec![Layer::FourierMagnitude(
            FourierMagnitude::default(),
        )])),
        "smallnet_max" => Ok(spec(smallnet_layers(PoolKind::Max, 3))),
        "smallnet_l2" => Ok(spec(smallnet_layers(PoolKind::L2 { last_extent: 6 }, 3))),
        "smallnet_l2_pool1_36" => {
            Ok(spec(smallnet_layers(PoolKind::L2 { last_extent: 36 }, 1)))
        }
        "smallnet_l2_pool2_18" => {
            Ok(spec(smallnet_layers(PoolKind::L2 { last_extent: 18 }, 2)))
        }
        other => Err(Error::Config(format!(
            "unknown preset '{other}'; expected one of {PRESET_NAMES:?}"
        ))),
    }
}

enum PoolKind {
    Max,
    /// 6×6 Hanning L2 pooling, except the final stage which uses `last_extent`.
    L2 { last_extent: usize },
}

/// L2 pooling epsilon shared by all presets.
const POOL_EPS: f64 = 1e-10;

/// Conv kernel size shared by every stage.
const STAGE_KERNEL: usize = 5;
/// Scale pyramid (grid-unit σ) of the deep lowpass mixers.
const DEEP_SIGMAS: [f64; 4] = [1.0, 1.6, 2.4, 3.4];

fn smallnet_layers(pool: PoolKind, stages: usize) -> Vec<Layer> {
    let mut layers = Vec::new();
    let mut in_ch = 3;
    for s in 0..stages {
        let weights = if s == 0 {
            gabor_bank(STAGE_KERNEL, in_ch)
        } else {
            lowpass_mixed_bank(STAGE_KERNEL, in_ch, s as u64)
        };
        let out_ch = weights.shape()[0];
        layers.push(Layer::Conv2d(
            Conv2d::new(weights, 1, Padding::Same).expect("preset conv is valid"),
        ));
        layers.push(Layer::Halfwave);
        let last = s + 1 == stages;
        layers.push(match &pool {
            PoolKind::Max => Layer::Maxpool(MaxPool::new(2, 2).expect("valid")),
            PoolKind::L2 { last_extent } => {
                let extent = if last { *last_extent } else { 6 };
                Layer::L2pool(
                    L2Pool::new(hanning_kernel(extent), 2, POOL_EPS).expect("valid"),
                )
            }
        });
        in_ch = out_ch;
    }
    layers
}

/// Zero-mean spatial Gabor patch, row-major `k×k`.
fn gabor_patch(k: usize, theta: f64, odd: bool, sigma: f64, wavelength: f64) -> Vec<f64> {
    let half = (k as f64 - 1.0) / 2.0;
    let mut f = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let y = i as f64 - half;
            let x = j as f64 - half;
            let xr = x * theta.cos() + y * theta.sin();
            let yr = -x * theta.sin() + y * theta.cos();
            let env = (-(xr * xr + yr * yr) / (2.0 * sigma * sigma)).exp();
            let arg = 2.0 * std::f64::consts::PI * xr / wavelength;
            f.push(env * if odd { arg.sin() } else { arg.cos() });
        }
    }
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    for v in &mut f {
        *v -= mean;
    }
    f
}

/// The four quadrature patches (0°/90° × even/odd) shared by every stage.
/// σ = 1.4 px and λ = 4 px are in units of the stage's own grid, so the bank
/// forms a scale-covariant pyramid as pooling coarsens the grid.
fn quadrature_patches(k: usize) -> Vec<Vec<f64>> {
    let mut patches = Vec::with_capacity(4);
    for &theta in &[0.0_f64, std::f64::consts::FRAC_PI_2] {
        for odd in [false, true] {
            patches.push(gabor_patch(k, theta, odd, 1.4, 4.0));
        }
    }
    patches
}

/// First-stage oriented bank: the four quadrature patches reading luminance
/// (identical weights on all input channels) followed by their negations.
/// Half-wave rectification keeps only one sign of each response, so the
/// squared rectifications of a ± pair sum to the full squared response —
/// pooled together downstream they recover the quadrature modulus at every
/// phase, which is what makes the L2-pooled energy vary smoothly under
/// translation.
fn gabor_bank(k: usize, in_ch: usize) -> Tensor {
    let patches = quadrature_patches(k);
    let mut data = Vec::with_capacity(2 * patches.len() * in_ch * k * k);
    for sign in [1.0, -1.0] {
        for f in &patches {
            let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt() * (in_ch as f64).sqrt();
            for _ in 0..in_ch {
                data.extend(f.iter().map(|v| sign * v / norm));
            }
        }
    }
    Tensor::new(vec![2 * patches.len(), in_ch, k, k], data).unwrap()
}

/// Deeper-stage bank: a positive Gaussian scale pyramid ([`DEEP_SIGMAS`], in
/// units of the stage's grid), each scale paired with a seeded random positive
/// channel profile.
///
/// Oscillating carriers at depth would convert the smooth *sliding* of the
/// stage-1 energy maps under translation into phase rotation, curving the
/// orbit of a translating image into an expensive arc; positive lowpass
/// mixers keep that orbit cheap (measured ~8× cheaper than a pixel fade)
/// while the oriented stage-1 bank still encodes where structure sits. The
/// profile assigns one weight per ± pair of stage 1 (the same value to both
/// members, so pre-activations depend on the smooth pair sums
/// `relu(c) + relu(−c)`, not on the phase-rippling halves) and one weight per
/// channel afterwards. Profiles are drawn from ChaCha8 stream `stage`: the
/// deep banks are the "fixed seeded random filters" of the family. No sign
/// completion here — inputs and kernels are nonnegative, so negated copies
/// would rectify to identically zero.
fn lowpass_mixed_bank(k: usize, in_ch: usize, stream: u64) -> Tensor {
    let pair_base = in_ch.min(DEEP_SIGMAS.len());
    let mut rng = ChaCha8Rng::seed_from_u64(SMALLNET_SEED);
    rng.set_stream(stream);
    let half = (k as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(DEEP_SIGMAS.len() * in_ch * k * k);
    for sigma in DEEP_SIGMAS {
        let mut patch = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                let y = i as f64 - half;
                let x = j as f64 - half;
                patch.push((-(x * x + y * y) / (2.0 * sigma * sigma)).exp());
            }
        }
        let profile: Vec<f64> = (0..pair_base).map(|_| rng.gen_range(0.25..1.0)).collect();
        let mut filter = Vec::with_capacity(in_ch * k * k);
        for ch in 0..in_ch {
            let c = profile[ch % pair_base];
            filter.extend(patch.iter().map(|v| c * v));
        }
        let norm = filter.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut filter {
            *v /= norm;
        }
        data.extend_from_slice(&filter);
    }
    Tensor::new(vec![DEEP_SIGMAS.len(), in_ch, k, k], data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..n)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((state >> 11) as f64) / ((1u64 << 53) as f64)
            })
            .collect()
    }

    #[test]
    fn identity_spec_returns_input() {
        let spec = preset("pixel").unwrap();
        let rep = spec.build(&[1, 4, 4]).unwrap();
        let x = Tensor::new(vec![1, 4, 4], pseudo_random(16, 1)).unwrap();
        let y = rep.evaluate(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn fourier_spec_preserves_bin_count() {
        let spec = preset("fourier_mag").unwrap();
        assert_eq!(spec.response_shape(&[1, 8, 8]).unwrap(), vec![1, 8, 8]);
        let rep = spec.build(&[1, 8, 8]).unwrap();
        let x = Tensor::new(vec![1, 8, 8], pseudo_random(64, 2)).unwrap();
        assert_eq!(rep.evaluate(&x).unwrap().len(), 64);
    }

    #[test]
    fn three_stage_presets_pool_64_down_to_8() {
        for name in ["smallnet_max", "smallnet_l2"] {
            let spec = preset(name).unwrap();
            let shape = spec.response_shape(&[3, 64, 64]).unwrap();
            assert_eq!(&shape[1..], &[8, 8], "{name} gave {shape:?}");
        }
    }

    #[test]
    fn preprocess_on_flat_gray_image_matches_affine_arithmetic() {
        let spec = StackSpec {
            name: "pre".into(),
            preprocess: Some(PreprocessSpec::bgr_imagenet()),
            layers: vec![Layer::Identity],
            tap: None,
        };
        let rep = spec.build(&[3, 2, 2]).unwrap();
        let x = Tensor::full(vec![3, 2, 2], 0.5);
        let y = rep.evaluate(&x).unwrap();
        assert_eq!(y.channel(0), &[127.5 - 104.0; 4]);
        assert_eq!(y.channel(1), &[127.5 - 117.0; 4]);
        assert_eq!(y.channel(2), &[127.5 - 124.0; 4]);
    }

    #[test]
    fn stack_matches_manual_layer_composition() {
        let w = Tensor::new(vec![2, 1, 3, 3], pseudo_random(18, 3)).unwrap();
        let conv = Conv2d::new(w, 1, Padding::Same).unwrap();
        let spec = StackSpec {
            name: "two".into(),
            preprocess: None,
            layers: vec![Layer::Conv2d(conv.clone()), Layer::Halfwave],
            tap: None,
        };
        let rep = spec.build(&[1, 5, 5]).unwrap();
        let x = Tensor::new(vec![1, 5, 5], pseudo_random(25, 4)).unwrap();
        let got = rep.evaluate(&x).unwrap();
        let want = Layer::Halfwave.forward(&conv.forward(&x).unwrap()).unwrap();
        assert_eq!(got.data(), want.data());
    }

    #[test]
    fn pullback_through_identity_returns_cotangent() {
        let rep = preset("pixel").unwrap().build(&[1, 3, 3]).unwrap();
        let x = Tensor::zeros(vec![1, 3, 3]);
        let cot = Tensor::new(vec![1, 3, 3], pseudo_random(9, 5)).unwrap();
        let grad = rep.pullback_at(&x, &cot).unwrap();
        assert_eq!(grad.data(), cot.data());
    }

    #[test]
    fn conv_only_pullback_is_the_conv_transpose() {
        let w = Tensor::new(vec![2, 1, 3, 3], pseudo_random(18, 6)).unwrap();
        let conv = Conv2d::new(w, 1, Padding::Valid).unwrap();
        let spec = StackSpec {
            name: "conv".into(),
            preprocess: None,
            layers: vec![Layer::Conv2d(conv.clone())],
            tap: None,
        };
        let rep = spec.build(&[1, 6, 6]).unwrap();
        let x = Tensor::new(vec![1, 6, 6], pseudo_random(36, 7)).unwrap();
        let cot = Tensor::new(vec![2, 4, 4], pseudo_random(32, 8)).unwrap();
        let got = rep.pullback_at(&x, &cot).unwrap();
        let want = conv.vjp(&x, &cot).unwrap();
        assert_eq!(got.data(), want.data());
    }

    #[test]
    fn smallnet_l2_pool_kernels_match_documented_extents() {
        let last_pool_extent = |name: &str| {
            let spec = preset(name).unwrap();
            match spec.layers.last().unwrap() {
                Layer::L2pool(p) => {
                    let sum: f64 = p.kernel.data().iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12, "{name} kernel not unit sum");
                    p.kernel.shape()[0]
                }
                other => panic!("{name} should end in l2pool, got {other:?}"),
            }
        };
        assert_eq!(last_pool_extent("smallnet_l2"), 6);
        assert_eq!(last_pool_extent("smallnet_l2_pool1_36"), 36);
        assert_eq!(last_pool_extent("smallnet_l2_pool2_18"), 18);
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(preset("vgg16").is_err());
    }

    #[test]
    fn build_names_the_first_failing_layer() {
        let spec = preset("smallnet_max").unwrap();
        // Wrong channel count: conv1 expects 3 channels.
        let err = spec.build(&[1, 64, 64]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 0"), "message: {msg}");
    }

    #[test]
    fn presets_are_deterministic_across_construction() {
        let a = preset("smallnet_l2").unwrap();
        let b = preset("smallnet_l2").unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn spec_json_round_trip_preserves_responses_bitwise() {
        let spec = preset("smallnet_l2").unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: StackSpec = serde_json::from_str(&json).unwrap();
        let x = Tensor::new(vec![3, 16, 16], pseudo_random(768, 11)).unwrap();
        let ya = spec.build(&[3, 16, 16]).unwrap().evaluate(&x).unwrap();
        let yb = back.build(&[3, 16, 16]).unwrap().evaluate(&x).unwrap();
        assert_eq!(ya.data(), yb.data());
    }

    #[test]
    fn tap_selects_an_intermediate_layer() {
        let spec = StackSpec {
            tap: Some(0),
            ..preset("smallnet_l2").unwrap()
        };
        let shape = spec.response_shape(&[3, 64, 64]).unwrap();
        assert_eq!(shape, vec![8, 64, 64]); // conv1 output, pre-pooling
    }
}
