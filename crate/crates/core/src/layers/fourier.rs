//! Per-channel 2-D Fourier magnitude.
//!
//! The modulus of the DFT is mathematically invariant to integer circular
//! translation, but two float FFTs of shifted copies differ in the last bits.
//! To make the invariance *exact* — so a translated pair really has zero
//! representational distance — the layer first rolls its input to a canonical
//! circular shift (the lexicographically smallest one, anchored at the global
//! minimum pixel). Shifted copies share the same canonical form bit for bit,
//! hence identical spectra. The roll is a fixed permutation wherever the
//! anchor is unique, so gradients pass through it exactly.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Result, Tensor};

/// Gradient contributions from spectrum bins with magnitude below this are
/// dropped; the modulus is not differentiable at zero.
const MAG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierMagnitude {
    /// Roll the input to its canonical circular shift before transforming.
    /// Disable only for debugging; shift invariance is then approximate.
    #[serde(default = "default_true")]
    pub canonicalize: bool,
}

fn default_true() -> bool {
    true
}

impl Default for FourierMagnitude {
    fn default() -> Self {
        Self { canonicalize: true }
    }
}

impl FourierMagnitude {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (nc, h, w) = x.chw()?;
        let (dr, dc) = self.shift_of(x);
        let mut out = Tensor::zeros(x.shape().to_vec());
        for c in 0..nc {
            let rolled = roll_plane(x.channel(c), h, w, dr, dc);
            let spec = fft2(&rolled, h, w);
            for (o, s) in out.channel_mut(c).iter_mut().zip(&spec) {
                *o = s.norm();
            }
        }
        Ok(out)
    }

    /// d|X|/dx pulled back through the DFT: with `w_u = c_u·conj(X_u)/|X_u|`,
    /// the input gradient is `Re(F w)` for the same unnormalized forward
    /// transform `F`, then un-rolled to undo the canonical shift.
    pub fn vjp(&self, x: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let (nc, h, w) = x.chw()?;
        let (dr, dc) = self.shift_of(x);
        let mut dx = Tensor::zeros(x.shape().to_vec());
        for c in 0..nc {
            let rolled = roll_plane(x.channel(c), h, w, dr, dc);
            let spec = fft2(&rolled, h, w);
            let cc = cot.channel(c);
            let mut wbuf: Vec<Complex<f64>> = spec
                .iter()
                .zip(cc)
                .map(|(s, &cv)| {
                    let mag = s.norm();
                    if mag < MAG_EPS {
                        Complex::new(0.0, 0.0)
                    } else {
                        s.conj() * (cv / mag)
                    }
                })
                .collect();
            fft2_in_place(&mut wbuf, h, w);
            // Scatter back through the roll: rolled[r][s] = x[(r+dr)%h][(s+dc)%w].
            let dp = dx.channel_mut(c);
            for r in 0..h {
                let src_r = (r + dr) % h;
                for s in 0..w {
                    dp[src_r * w + (s + dc) % w] = wbuf[r * w + s].re;
                }
            }
        }
        Ok(dx)
    }

    fn shift_of(&self, x: &Tensor) -> (usize, usize) {
        if self.canonicalize {
            canonical_shift(x)
        } else {
            (0, 0)
        }
    }
}

/// Unnormalized forward 2-D DFT of a real plane.
fn fft2(plane: &[f64], h: usize, w: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2_in_place(&mut buf, h, w);
    buf
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft2_in_place(buf: &mut [Complex<f64>], h: usize, w: usize) {
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(w), p.plan_fft_forward(h))
    });
    row_fft.process(buf);
    let mut t = vec![Complex::new(0.0, 0.0); h * w];
    for r in 0..h {
        for c in 0..w {
            t[c * h + r] = buf[r * w + c];
        }
    }
    col_fft.process(&mut t);
    for r in 0..h {
        for c in 0..w {
            buf[r * w + c] = t[c * h + r];
        }
    }
}

/// Circular shift `(dr, dc)` mapping `x` to its canonical representative
/// `canon[r][c] = x[(r+dr)%h][(c+dc)%w]`.
///
/// Anchor candidates are the positions where channel 0 attains its minimum
/// under `total_cmp` (bit-exact, so `-0.0 < 0.0`); among those, the roll whose
/// full row-major readout is lexicographically smallest wins. Two images that
/// are circular shifts of each other share a multiset of rows, hence the same
/// canonical readout, bit for bit.
fn canonical_shift(x: &Tensor) -> (usize, usize) {
    let (_, h, w) = x.chw().expect("canonical_shift needs an image tensor");
    let plane = x.channel(0);
    let min = plane
        .iter()
        .copied()
        .min_by(|a, b| a.total_cmp(b))
        .expect("nonempty plane");
    let candidates: Vec<(usize, usize)> = (0..h * w)
        .filter(|&i| plane[i].total_cmp(&min).is_eq())
        .map(|i| (i / w, i % w))
        .collect();
    let mut best = candidates[0];
    for &cand in &candidates[1..] {
        if rolled_less(x, cand, best) {
            best = cand;
        }
    }
    best
}

/// True if the readout of `x` rolled by `a` precedes the readout rolled by
/// `b` (all channels, row-major, `total_cmp`).
fn rolled_less(x: &Tensor, a: (usize, usize), b: (usize, usize)) -> bool {
    let (nc, h, w) = x.chw().unwrap();
    for c in 0..nc {
        let plane = x.channel(c);
        for r in 0..h {
            let (ra, rb) = ((r + a.0) % h, (r + b.0) % h);
            for s in 0..w {
                let va = plane[ra * w + (s + a.1) % w];
                let vb = plane[rb * w + (s + b.1) % w];
                match va.total_cmp(&vb) {
                    std::cmp::Ordering::Less => return true,
                    std::cmp::Ordering::Greater => return false,
                    std::cmp::Ordering::Equal => {}
                }
            }
        }
    }
    false
}

fn roll_plane(plane: &[f64], h: usize, w: usize, dr: usize, dc: usize) -> Vec<f64> {
    if dr == 0 && dc == 0 {
        return plane.to_vec();
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let src_r = (r + dr) % h;
        for s in 0..w {
            out[r * w + s] = plane[src_r * w + (s + dc) % w];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shifted(x: &Tensor, dr: usize, dc: usize) -> Tensor {
        // Roll *backwards* so this is an independent shift, not roll_plane.
        let (nc, h, w) = x.chw().unwrap();
        let mut out = Tensor::zeros(x.shape().to_vec());
        for c in 0..nc {
            for r in 0..h {
                for s in 0..w {
                    out.channel_mut(c)[((r + dr) % h) * w + (s + dc) % w] =
                        x.channel(c)[r * w + s];
                }
            }
        }
        out
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        // Small LCG; good enough to avoid accidental structure in unit tests.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64) / ((1u64 << 53) as f64)
            })
            .collect()
    }

    #[test]
    fn delta_image_has_flat_unit_spectrum() {
        let mut x = Tensor::zeros(vec![1, 4, 4]);
        x.data_mut()[5] = 1.0;
        let y = FourierMagnitude::default().forward(&x).unwrap();
        for &v in y.data() {
            assert!((v - 1.0).abs() < 1e-12, "got {v}");
        }
    }

    #[test]
    fn integer_circular_shift_leaves_output_bitwise_identical() {
        let x = Tensor::new(vec![1, 8, 8], pseudo_random(64, 3)).unwrap();
        let layer = FourierMagnitude::default();
        let base = layer.forward(&x).unwrap();
        for (dr, dc) in [(1, 0), (0, 5), (3, 3), (7, 2)] {
            let moved = layer.forward(&shifted(&x, dr, dc)).unwrap();
            assert_eq!(base.data(), moved.data(), "shift ({dr},{dc}) not exact");
        }
    }

    #[test]
    fn matches_direct_dft_modulus_oracle() {
        let x = Tensor::new(vec![1, 8, 8], pseudo_random(64, 9)).unwrap();
        let y = FourierMagnitude::default().forward(&x).unwrap();
        // O(n^4) direct DFT on the *unshifted* input; the modulus is
        // mathematically shift invariant so the canonical roll cannot move it
        // by more than float error.
        let (h, w) = (8usize, 8usize);
        for ku in 0..h {
            for kv in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for r in 0..h {
                    for s in 0..w {
                        let ang = -2.0 * std::f64::consts::PI
                            * (ku as f64 * r as f64 / h as f64
                                + kv as f64 * s as f64 / w as f64);
                        acc += Complex::new(ang.cos(), ang.sin()) * x.data()[r * w + s];
                    }
                }
                let want = acc.norm();
                let got = y.data()[ku * w + kv];
                assert!((got - want).abs() < 1e-10, "bin ({ku},{kv}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn vjp_has_input_shape_and_is_finite() {
        let x = Tensor::new(vec![2, 4, 4], pseudo_random(32, 17)).unwrap();
        let layer = FourierMagnitude::default();
        let y = layer.forward(&x).unwrap();
        let cot = Tensor::new(y.shape().to_vec(), pseudo_random(32, 23)).unwrap();
        let dx = layer.vjp(&x, &cot).unwrap();
        assert_eq!(dx.shape(), x.shape());
        assert!(dx.all_finite());
    }

    #[test]
    fn canonical_shift_of_rolled_copies_agrees() {
        let x = Tensor::new(vec![1, 6, 6], pseudo_random(36, 41)).unwrap();
        let (r0, c0) = canonical_shift(&x);
        let canon_a = roll_plane(x.channel(0), 6, 6, r0, c0);
        let moved = shifted(&x, 2, 4);
        let (r1, c1) = canonical_shift(&moved);
        let canon_b = roll_plane(moved.channel(0), 6, 6, r1, c1);
        assert_eq!(canon_a, canon_b);
    }
}
