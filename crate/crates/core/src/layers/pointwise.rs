//! Channel-wise affine preprocessing (intensity rescale, channel reorder,
//! mean subtraction).

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Tensor};

/// `y[c] = scale · x[perm[c]] − mean[c]`, applied per pixel.
///
/// This covers the classic deep-net input convention: scale `[0,1]`
/// intensities to `[0,255]`, reorder RGB planes to BGR, and subtract the
/// per-channel dataset means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffinePreprocess {
    pub scale: f64,
    #[serde(rename = "channel_permutation")]
    pub perm: Vec<usize>,
    #[serde(rename = "channel_means")]
    pub mean: Vec<f64>,
}

impl AffinePreprocess {
    pub fn new(scale: f64, perm: Vec<usize>, mean: Vec<f64>) -> Result<Self> {
        if perm.len() != mean.len() {
            return Err(Error::Config(format!(
                "perm has {} entries but mean has {}",
                perm.len(),
                mean.len()
            )));
        }
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::Config(format!("perm {perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        Ok(Self { scale, perm, mean })
    }

    /// The standard RGB-to-BGR caffe-style preprocessing.
    pub fn bgr_imagenet() -> Self {
        Self {
            scale: 255.0,
            perm: vec![2, 1, 0],
            mean: vec![104.0, 117.0, 124.0],
        }
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        let [c, ..] = in_shape else {
            return Err(Error::Shape(format!(
                "preprocess expects a channel-first tensor, got {in_shape:?}"
            )));
        };
        if *c != self.perm.len() {
            return Err(Error::Config(format!(
                "preprocess configured for {} channels, input has {c}",
                self.perm.len()
            )));
        }
        Ok(in_shape.to_vec())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.out_shape(x.shape())?;
        let mut y = Tensor::zeros(x.shape().to_vec());
        for (c, &src) in self.perm.iter().enumerate() {
            let mean = self.mean[c];
            let xp = x.channel(src);
            let yp = y.channel_mut(c);
            for (o, &v) in yp.iter_mut().zip(xp) {
                *o = self.scale * v - mean;
            }
        }
        Ok(y)
    }

    pub fn vjp(&self, x: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let mut dx = Tensor::zeros(x.shape().to_vec());
        for (c, &src) in self.perm.iter().enumerate() {
            let cp = cot.channel(c);
            let dp = dx.channel_mut(src);
            for (d, &v) in dp.iter_mut().zip(cp) {
                *d += self.scale * v;
            }
        }
        Ok(dx)
    }
}
