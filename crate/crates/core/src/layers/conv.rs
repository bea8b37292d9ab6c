//! Stride-1-and-up 2D cross-correlation with a filter bank.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Tensor};

/// Boundary policy for [`Conv2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero-pad so the stride-1 output matches the input extent.
    Same,
    /// No padding; the kernel must fit inside the input.
    Valid,
}

/// 2D cross-correlation (no kernel flip) of a multi-channel image with a bank
/// of filters. Weights are shaped `[filters, in_channels, kh, kw]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv2d {
    pub weights: Tensor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv2d {
    pub fn new(weights: Tensor, stride: usize, padding: Padding) -> Result<Self> {
        if weights.shape().len() != 4 {
            return Err(Error::Config(format!(
                "conv weights must be [filters, channels, kh, kw], got shape {:?}",
                weights.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::Config("conv stride must be >= 1".into()));
        }
        Ok(Self {
            weights,
            bias: None,
            stride,
            padding,
        })
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.weights.shape();
        (s[0], s[1], s[2], s[3])
    }

    /// Top/left zero-padding amount for the current policy.
    fn pad(&self) -> (usize, usize) {
        match self.padding {
            Padding::Same => {
                let (_, _, kh, kw) = self.dims();
                ((kh - 1) / 2, (kw - 1) / 2)
            }
            Padding::Valid => (0, 0),
        }
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        let (nf, nc, kh, kw) = self.dims();
        let [c, h, w] = in_shape else {
            return Err(Error::Shape(format!(
                "conv expects a [channels, height, width] input, got {in_shape:?}"
            )));
        };
        if *c != nc {
            return Err(Error::Config(format!(
                "conv filter bank has {nc} input channels but input has {c}"
            )));
        }
        let s = self.stride;
        let (oh, ow) = match self.padding {
            Padding::Same => ((h - 1) / s + 1, (w - 1) / s + 1),
            Padding::Valid => {
                if *h < kh || *w < kw {
                    return Err(Error::Config(format!(
                        "valid conv kernel {kh}x{kw} does not fit in {h}x{w} input"
                    )));
                }
                ((h - kh) / s + 1, (w - kw) / s + 1)
            }
        };
        Ok(vec![nf, oh, ow])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.out_shape(x.shape())?;
        let (nf, nc, kh, kw) = self.dims();
        let (_, h, w) = x.chw()?;
        let (oh, ow) = (out_shape[1], out_shape[2]);
        let (pt, pl) = self.pad();
        let s = self.stride;
        let wdat = self.weights.data();

        let mut out = Tensor::zeros(out_shape);
        for f in 0..nf {
            let oplane = out.channel_mut(f);
            if let Some(b) = &self.bias {
                oplane.fill(b[f]);
            }
            for c in 0..nc {
                let xc = x.channel(c);
                for u in 0..kh {
                    for v in 0..kw {
                        let wv = wdat[((f * nc + c) * kh + u) * kw + v];
                        // Output rows/cols whose sampled input index stays in
                        // bounds: 0 <= i*s + u - pt < h and likewise for j.
                        let i_lo = lo_index(pt, u, s);
                        let i_hi = hi_index(h, pt, u, s, oh);
                        let j_lo = lo_index(pl, v, s);
                        let j_hi = hi_index(w, pl, v, s, ow);
                        if i_lo >= i_hi || j_lo >= j_hi {
                            continue;
                        }
                        for i in i_lo..i_hi {
                            let r = i * s + u - pt;
                            let orow = &mut oplane[i * ow + j_lo..i * ow + j_hi];
                            if s == 1 {
                                let xrow = &xc[r * w + j_lo + v - pl..];
                                for (o, xv) in orow.iter_mut().zip(xrow) {
                                    *o += wv * xv;
                                }
                            } else {
                                for (jj, o) in orow.iter_mut().enumerate() {
                                    let col = (j_lo + jj) * s + v - pl;
                                    *o += wv * xc[r * w + col];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Input gradient: scatter each cotangent entry back through every weight
    /// tap that read the corresponding input position. Bias does not
    /// contribute.
    pub fn vjp(&self, x: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let (nf, nc, kh, kw) = self.dims();
        let (_, h, w) = x.chw()?;
        let (oh, ow) = (cot.shape()[1], cot.shape()[2]);
        let (pt, pl) = self.pad();
        let s = self.stride;
        let wdat = self.weights.data();

        let mut dx = Tensor::zeros(x.shape().to_vec());
        for f in 0..nf {
            let cplane = cot.channel(f);
            for c in 0..nc {
                let dxc = dx.channel_mut(c);
                for u in 0..kh {
                    for v in 0..kw {
                        let wv = wdat[((f * nc + c) * kh + u) * kw + v];
                        let i_lo = lo_index(pt, u, s);
                        let i_hi = hi_index(h, pt, u, s, oh);
                        let j_lo = lo_index(pl, v, s);
                        let j_hi = hi_index(w, pl, v, s, ow);
                        if i_lo >= i_hi || j_lo >= j_hi {
                            continue;
                        }
                        for i in i_lo..i_hi {
                            let r = i * s + u - pt;
                            let crow = &cplane[i * ow + j_lo..i * ow + j_hi];
                            if s == 1 {
                                let drow = &mut dxc[r * w + j_lo + v - pl..];
                                for (d, cv) in drow.iter_mut().zip(crow) {
                                    *d += wv * cv;
                                }
                            } else {
                                for (jj, cv) in crow.iter().enumerate() {
                                    let col = (j_lo + jj) * s + v - pl;
                                    dxc[r * w + col] += wv * cv;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

/// Smallest output index whose sampled input index `i*s + k - pad` is >= 0.
fn lo_index(pad: usize, k: usize, s: usize) -> usize {
    if k >= pad {
        0
    } else {
        (pad - k).div_ceil(s)
    }
}

/// One past the largest output index with sampled input index < `extent`,
/// clamped to the output extent.
fn hi_index(extent: usize, pad: usize, k: usize, s: usize, out_extent: usize) -> usize {
    let limit = extent + pad;
    if limit <= k {
        return 0;
    }
    (((limit - k - 1) / s) + 1).min(out_extent)
}
