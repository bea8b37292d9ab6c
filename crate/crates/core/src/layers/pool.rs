//! Spatial pooling: block maxima and blurred-energy (L2) pooling.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Tensor};

/// Per-channel block maximum over square windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxPool {
    pub extent: usize,
    pub stride: usize,
}

impl MaxPool {
    pub fn new(extent: usize, stride: usize) -> Result<Self> {
        if extent == 0 || stride == 0 {
            return Err(Error::Config("maxpool extent and stride must be >= 1".into()));
        }
        Ok(Self { extent, stride })
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        let [c, h, w] = in_shape else {
            return Err(Error::Shape(format!(
                "maxpool expects a [channels, height, width] input, got {in_shape:?}"
            )));
        };
        if *h < self.extent || *w < self.extent {
            return Err(Error::Config(format!(
                "maxpool extent {} does not fit in {h}x{w} input",
                self.extent
            )));
        }
        Ok(vec![
            *c,
            (h - self.extent) / self.stride + 1,
            (w - self.extent) / self.stride + 1,
        ])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.out_shape(x.shape())?;
        let (nc, _, w) = x.chw()?;
        let (oh, ow) = (out_shape[1], out_shape[2]);
        let mut out = Tensor::zeros(out_shape);
        for c in 0..nc {
            let xc = x.channel(c);
            let oc = out.channel_mut(c);
            for i in 0..oh {
                for j in 0..ow {
                    oc[i * ow + j] = xc[self.block_argmax(xc, w, i, j)];
                }
            }
        }
        Ok(out)
    }

    /// Route each cotangent entry to its block's argmax; ties go to the first
    /// position in row-major order, so the backward pass is deterministic.
    pub fn vjp(&self, x: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let (nc, _, w) = x.chw()?;
        let (oh, ow) = (cot.shape()[1], cot.shape()[2]);
        let mut dx = Tensor::zeros(x.shape().to_vec());
        for c in 0..nc {
            let xc = x.channel(c);
            let cc = cot.channel(c);
            let dc = dx.channel_mut(c);
            for i in 0..oh {
                for j in 0..ow {
                    dc[self.block_argmax(xc, w, i, j)] += cc[i * ow + j];
                }
            }
        }
        Ok(dx)
    }

    /// Flat in-channel index of the first row-major maximum of block `(i, j)`.
    fn block_argmax(&self, plane: &[f64], w: usize, i: usize, j: usize) -> usize {
        let (r0, c0) = (i * self.stride, j * self.stride);
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = r0 * w + c0;
        for r in r0..r0 + self.extent {
            for c in c0..c0 + self.extent {
                let v = plane[r * w + c];
                if v > best {
                    best = v;
                    best_idx = r * w + c;
                }
            }
        }
        best_idx
    }
}

/// L2 pooling: `sqrt(g * x² + eps)` subsampled by `stride`, where `g` is a
/// nonnegative unit-sum blur kernel applied per channel with circular
/// boundaries. Circular handling keeps constant inputs exactly constant and
/// keeps the operator translation-equivariant on periodic inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L2Pool {
    pub kernel: Tensor,
    pub stride: usize,
    pub eps: f64,
}

impl L2Pool {
    pub fn new(kernel: Tensor, stride: usize, eps: f64) -> Result<Self> {
        let [_, _] = kernel.shape() else {
            return Err(Error::Config(format!(
                "l2pool kernel must be 2-D, got shape {:?}",
                kernel.shape()
            )));
        };
        if kernel.data().iter().any(|&v| v < 0.0) {
            return Err(Error::Config("l2pool kernel must be nonnegative".into()));
        }
        let sum: f64 = kernel.data().iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "l2pool kernel must sum to 1, got {sum}"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::Config("l2pool eps must be > 0".into()));
        }
        if stride == 0 {
            return Err(Error::Config("l2pool stride must be >= 1".into()));
        }
        Ok(Self { kernel, stride, eps })
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        let [c, h, w] = in_shape else {
            return Err(Error::Shape(format!(
                "l2pool expects a [channels, height, width] input, got {in_shape:?}"
            )));
        };
        Ok(vec![*c, (h - 1) / self.stride + 1, (w - 1) / self.stride + 1])
    }

    /// Circularly wrapped source indices for every (output, tap) pair along
    /// one axis. The kernel is anchored so tap `(k-1)/2` sits on the output's
    /// sampling position.
    fn index_table(&self, extent: usize, out_extent: usize, taps: usize) -> Vec<usize> {
        let off = (taps - 1) / 2;
        let mut tab = vec![0usize; out_extent * taps];
        for o in 0..out_extent {
            for t in 0..taps {
                let src = (o * self.stride + t) as isize - off as isize;
                tab[o * taps + t] = src.rem_euclid(extent as isize) as usize;
            }
        }
        tab
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.out_shape(x.shape())?;
        let (nc, h, w) = x.chw()?;
        let (oh, ow) = (out_shape[1], out_shape[2]);
        let (kh, kw) = (self.kernel.shape()[0], self.kernel.shape()[1]);
        let g = self.kernel.data();
        let rtab = self.index_table(h, oh, kh);
        let ctab = self.index_table(w, ow, kw);

        let mut out = Tensor::zeros(out_shape);
        for c in 0..nc {
            let xc = x.channel(c);
            let oc = out.channel_mut(c);
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for u in 0..kh {
                        let row = &xc[rtab[i * kh + u] * w..];
                        for v in 0..kw {
                            let s = row[ctab[j * kw + v]];
                            acc += g[u * kw + v] * s * s;
                        }
                    }
                    oc[i * ow + j] = (acc + self.eps).sqrt();
                }
            }
        }
        Ok(out)
    }

    /// Differentiates the square → blur → subsample → sqrt composition:
    /// d/db sqrt(b + eps) = 1/(2y) read off the stored output, then the blur
    /// transpose scatters back to squared-input space, then d(x²)/dx = 2x.
    pub fn vjp(&self, x: &Tensor, y: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let (nc, h, w) = x.chw()?;
        let (oh, ow) = (cot.shape()[1], cot.shape()[2]);
        let (kh, kw) = (self.kernel.shape()[0], self.kernel.shape()[1]);
        let g = self.kernel.data();
        let rtab = self.index_table(h, oh, kh);
        let ctab = self.index_table(w, ow, kw);

        let mut dx = Tensor::zeros(x.shape().to_vec());
        for c in 0..nc {
            let xc = x.channel(c);
            let yc = y.channel(c);
            let cc = cot.channel(c);
            let dc = dx.channel_mut(c);
            for i in 0..oh {
                for j in 0..ow {
                    let cb = cc[i * ow + j] / (2.0 * yc[i * ow + j]);
                    for u in 0..kh {
                        let r = rtab[i * kh + u];
                        for v in 0..kw {
                            let idx = r * w + ctab[j * kw + v];
                            dc[idx] += g[u * kw + v] * cb * 2.0 * xc[idx];
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

/// Normalized 2-D Hanning window: separable outer product of
/// `w(i) = 0.5·(1 − cos(2πi/(m−1)))`, scaled to unit sum. The endpoint taps
/// are exactly zero, so the effective support is `(m−2)×(m−2)`.
pub fn hanning_kernel(m: usize) -> Tensor {
    assert!(m >= 2, "hanning window needs at least 2 taps");
    let win: Vec<f64> = (0..m)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (m as f64 - 1.0)).cos()))
        .collect();
    let mut data = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            data.push(win[i] * win[j]);
        }
    }
    let sum: f64 = data.iter().sum();
    for v in &mut data {
        *v /= sum;
    }
    Tensor::new(vec![m, m], data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxpool_single_block() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = MaxPool::new(2, 2).unwrap().forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn maxpool_constant_image_stays_constant() {
        let x = Tensor::full(vec![2, 6, 6], 0.3);
        let y = MaxPool::new(2, 2).unwrap().forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn maxpool_matches_brute_force_block_scan() {
        // Fixed pseudo-random 1x6x6 input; oracle scans every block afresh.
        let data: Vec<f64> = (0..36).map(|v| ((v * 31 + 7) % 23) as f64 / 23.0).collect();
        let x = Tensor::new(vec![1, 6, 6], data.clone()).unwrap();
        let y = MaxPool::new(2, 2).unwrap().forward(&x).unwrap();
        for bi in 0..3 {
            for bj in 0..3 {
                let mut m = f64::NEG_INFINITY;
                for r in 0..2 {
                    for c in 0..2 {
                        m = m.max(data[(bi * 2 + r) * 6 + bj * 2 + c]);
                    }
                }
                assert_eq!(y.data()[bi * 3 + bj], m);
            }
        }
    }

    #[test]
    fn maxpool_rejects_undersized_input() {
        let x = Tensor::zeros(vec![1, 3, 3]);
        assert!(MaxPool::new(4, 4).unwrap().forward(&x).is_err());
    }

    #[test]
    fn maxpool_backward_routes_to_first_argmax_on_ties() {
        let x = Tensor::new(vec![1, 2, 2], vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let pool = MaxPool::new(2, 2).unwrap();
        let y = pool.forward(&x).unwrap();
        let cot = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let dx = pool.vjp(&x, &cot).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
        let _ = y;
    }

    #[test]
    fn maxpool_is_positively_homogeneous() {
        let data: Vec<f64> = (0..16).map(|v| ((v * 7 % 13) as f64) - 6.0).collect();
        let x = Tensor::new(vec![1, 4, 4], data).unwrap();
        let pool = MaxPool::new(2, 2).unwrap();
        let c = 3.5;
        let lhs = pool.forward(&x.scale(c)).unwrap();
        let rhs = pool.forward(&x).unwrap().scale(c);
        assert_eq!(lhs.data(), rhs.data());
    }

    #[test]
    fn hanning_kernel_is_unit_sum_with_zero_rim() {
        let g = hanning_kernel(6);
        let sum: f64 = g.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for j in 0..6 {
            assert_eq!(g.data()[j], 0.0); // top row
            assert_eq!(g.data()[5 * 6 + j], 0.0); // bottom row
        }
    }

    #[test]
    fn l2pool_constant_input_recovers_the_constant() {
        let c = 0.7;
        let x = Tensor::full(vec![1, 8, 8], c);
        let pool = L2Pool::new(hanning_kernel(6), 2, 1e-10).unwrap();
        let y = pool.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4]);
        for &v in y.data() {
            assert!((v - c).abs() < 1e-8, "got {v}, want {c}");
        }
    }

    #[test]
    fn l2pool_zero_input_gives_sqrt_eps() {
        let eps = 1e-10;
        let pool = L2Pool::new(hanning_kernel(6), 2, eps).unwrap();
        let y = pool.forward(&Tensor::zeros(vec![1, 8, 8])).unwrap();
        for &v in y.data() {
            assert_eq!(v, eps.sqrt());
        }
    }

    /// Straight-line oracle: square everything, blur the full grid with
    /// explicit wrap-around, subsample, then sqrt. No shared index tables.
    fn l2pool_oracle(x: &Tensor, g: &Tensor, stride: usize, eps: f64) -> Tensor {
        let (nc, h, w) = x.chw().unwrap();
        let (kh, kw) = (g.shape()[0], g.shape()[1]);
        let (off_h, off_w) = ((kh - 1) / 2, (kw - 1) / 2);
        let (oh, ow) = ((h - 1) / stride + 1, (w - 1) / stride + 1);
        let mut out = Tensor::zeros(vec![nc, oh, ow]);
        for c in 0..nc {
            let mut blurred = vec![0.0; h * w];
            for r in 0..h {
                for s in 0..w {
                    let mut acc = 0.0;
                    for u in 0..kh {
                        for v in 0..kw {
                            let rr = (r as isize + u as isize - off_h as isize)
                                .rem_euclid(h as isize) as usize;
                            let ss = (s as isize + v as isize - off_w as isize)
                                .rem_euclid(w as isize) as usize;
                            let val = x.channel(c)[rr * w + ss];
                            acc += g.data()[u * kw + v] * val * val;
                        }
                    }
                    blurred[r * w + s] = acc;
                }
            }
            for i in 0..oh {
                for j in 0..ow {
                    out.channel_mut(c)[i * ow + j] =
                        (blurred[(i * stride) * w + j * stride] + eps).sqrt();
                }
            }
        }
        out
    }

    #[test]
    fn l2pool_matches_three_step_oracle() {
        let data: Vec<f64> = (0..64).map(|v| (((v * 37 + 11) % 29) as f64 / 29.0) - 0.5).collect();
        let x = Tensor::new(vec![1, 8, 8], data).unwrap();
        let pool = L2Pool::new(hanning_kernel(6), 2, 1e-10).unwrap();
        let got = pool.forward(&x).unwrap();
        let want = l2pool_oracle(&x, &pool.kernel, 2, 1e-10);
        assert_eq!(got.shape(), want.shape());
        for (g, e) in got.data().iter().zip(want.data()) {
            assert!((g - e).abs() < 1e-12, "got {g}, want {e}");
        }
    }

    #[test]
    fn l2pool_is_sign_flip_invariant() {
        let data: Vec<f64> = (0..64).map(|v| ((v * 17 % 31) as f64 / 31.0) - 0.4).collect();
        let x = Tensor::new(vec![1, 8, 8], data).unwrap();
        let pool = L2Pool::new(hanning_kernel(6), 2, 1e-10).unwrap();
        let a = pool.forward(&x).unwrap();
        let b = pool.forward(&x.scale(-1.0)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn l2pool_rejects_bad_kernels() {
        let neg = Tensor::new(vec![2, 2], vec![0.5, 0.5, 0.5, -0.5]).unwrap();
        assert!(L2Pool::new(neg, 2, 1e-10).is_err());
        let unnormalized = Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        assert!(L2Pool::new(unnormalized, 2, 1e-10).is_err());
    }
}
