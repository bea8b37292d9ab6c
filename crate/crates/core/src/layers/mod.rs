//! Differentiable layer primitives.
//!
//! Every layer exposes a pure `forward` map and a `vjp` (vector–Jacobian
//! product) that pulls a cotangent at the output back to the input. The vjp
//! signature takes both the layer's original input and its output so that no
//! layer needs a private tape: the caller (a layer stack) already holds the
//! activation chain, and anything else a backward pass needs — rectifier
//! masks, pooling argmaxes, Fourier phases — is either recomputed cheaply or
//! read off the output.
//!
//! Weights are fixed data, never optimized, so only input gradients exist.

mod conv;
mod fourier;
mod gradcheck;
mod pointwise;
mod pool;

pub use conv::{Conv2d, Padding};
pub use fourier::FourierMagnitude;
pub use gradcheck::{
    gradient_check, gradient_check_with, pullback_check, smoothness_margin, GradCheckReport,
    FD_STEP,
};
pub use pointwise::AffinePreprocess;
pub use pool::{hanning_kernel, L2Pool, MaxPool};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Tensor};

/// A differentiable image-to-tensor primitive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv2d(Conv2d),
    Halfwave,
    Maxpool(MaxPool),
    L2pool(L2Pool),
    FourierMagnitude(FourierMagnitude),
    Identity,
    AffinePreprocess(AffinePreprocess),
}

impl Layer {
    /// Output shape as a function of input shape; errors on invalid configs.
    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(l) => l.out_shape(in_shape),
            Layer::Maxpool(l) => l.out_shape(in_shape),
            Layer::L2pool(l) => l.out_shape(in_shape),
            Layer::AffinePreprocess(l) => l.out_shape(in_shape),
            Layer::Halfwave | Layer::FourierMagnitude(_) | Layer::Identity => {
                Ok(in_shape.to_vec())
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::Halfwave => Ok(x.map(|v| v.max(0.0))),
            Layer::Maxpool(l) => l.forward(x),
            Layer::L2pool(l) => l.forward(x),
            Layer::FourierMagnitude(l) => l.forward(x),
            Layer::Identity => Ok(x.clone()),
            Layer::AffinePreprocess(l) => l.forward(x),
        }
    }

    /// Pull `cot` (shaped like the output `y`) back through the layer at `x`.
    ///
    /// `y` must be the value `forward(x)` previously returned; pooling and
    /// Fourier layers read it instead of redoing work.
    pub fn vjp(&self, x: &Tensor, y: &Tensor, cot: &Tensor) -> Result<Tensor> {
        cot.check_same_shape(y).map_err(|_| {
            Error::Shape(format!(
                "cotangent shape {:?} does not match layer output {:?}",
                cot.shape(),
                y.shape()
            ))
        })?;
        match self {
            Layer::Conv2d(l) => l.vjp(x, cot),
            Layer::Halfwave => {
                // Subgradient 0 at x <= 0, 1 at x > 0.
                let data = x
                    .data()
                    .iter()
                    .zip(cot.data())
                    .map(|(&xi, &ci)| if xi > 0.0 { ci } else { 0.0 })
                    .collect();
                Tensor::new(x.shape().to_vec(), data)
            }
            Layer::Maxpool(l) => l.vjp(x, cot),
            Layer::L2pool(l) => l.vjp(x, y, cot),
            Layer::FourierMagnitude(l) => l.vjp(x, cot),
            Layer::Identity => Ok(cot.clone()),
            Layer::AffinePreprocess(l) => l.vjp(x, cot),
        }
    }
}
