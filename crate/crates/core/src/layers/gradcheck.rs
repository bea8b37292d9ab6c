//! Finite-difference verification of layer and stack pullbacks.

use crate::stack::Representation;
use crate::{Result, Tensor};

use super::Layer;

/// Central-difference step. Small enough that truncation error sits well
/// below the pass tolerance, large enough to stay clear of roundoff.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest |analytic − numeric| across coordinates, relative to the
    /// largest gradient magnitude (with a 1e-8 floor). A normalized
    /// infinity-norm comparison is robust to near-zero coordinates, where a
    /// per-coordinate quotient would amplify finite-difference roundoff.
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub coords: usize,
}

/// Compare `layer`'s vjp against central finite differences of the scalar
/// probe `φ(x) = ⟨forward(x), c⟩` for a fixed pseudo-random cotangent `c`.
///
/// Precondition: no coordinate of `x` may sit within [`FD_STEP`] of a
/// nondifferentiability of the layer — rectifier zeros, exact pooling ties,
/// zero-magnitude spectrum bins, or ties for the Fourier canonicalization
/// anchor. Such inputs make the finite difference measure a subgradient jump
/// rather than the derivative, so they are excluded by contract rather than
/// detected.
pub fn gradient_check(layer: &Layer, x: &Tensor, tolerance: f64) -> Result<GradCheckReport> {
    let cot_data = lcg_unit(x_out_len(layer, x)?, 0x9E37_79B9_7F4A_7C15);
    let y = layer.forward(x)?;
    let cot = Tensor::new(y.shape().to_vec(), cot_data)?;
    gradient_check_with(layer, x, &cot, FD_STEP, tolerance)
}

/// As [`gradient_check`] but with caller-chosen cotangent and step.
pub fn gradient_check_with(
    layer: &Layer,
    x: &Tensor,
    cot: &Tensor,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let y = layer.forward(x)?;
    let analytic = layer.vjp(x, &y, cot)?;

    let mut probe = x.clone();
    let mut numeric = Tensor::zeros(x.shape().to_vec());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = layer.forward(&probe)?.dot(cot)?;
        probe.data_mut()[i] = orig - step;
        let minus = layer.forward(&probe)?.dot(cot)?;
        probe.data_mut()[i] = orig;
        numeric.data_mut()[i] = (plus - minus) / (2.0 * step);
    }

    Ok(report_from(&analytic, &numeric, tolerance))
}

/// Compare a whole representation's pullback against central finite
/// differences of `φ(x) = ⟨f(x), c⟩` for a fixed pseudo-random cotangent.
///
/// Deep stacks amplify a perturbation more than a single layer does, so
/// callers usually pair this with [`smoothness_margin`] to admit only inputs
/// whose forward pass stays clear of every kink, and pick `step` an order of
/// magnitude below [`FD_STEP`].
pub fn pullback_check<R: Representation>(
    rep: &R,
    x: &Tensor,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let y = rep.evaluate(x)?;
    let cot = Tensor::new(y.shape().to_vec(), lcg_unit(y.len(), 0x517C_C1B7_2722_0A95))?;
    let analytic = rep.pullback_at(x, &cot)?;

    let mut probe = x.clone();
    let mut numeric = Tensor::zeros(x.shape().to_vec());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = rep.evaluate(&probe)?.dot(&cot)?;
        probe.data_mut()[i] = orig - step;
        let minus = rep.evaluate(&probe)?.dot(&cot)?;
        probe.data_mut()[i] = orig;
        numeric.data_mut()[i] = (plus - minus) / (2.0 * step);
    }
    Ok(report_from(&analytic, &numeric, tolerance))
}

/// Distance from the nearest nondifferentiable point encountered while
/// running `steps` on `x`; `+∞` when the whole chain is smooth there.
///
/// Checked per step: halfwave pre-activation magnitudes, maxpool win margins
/// (block max minus runner-up), Fourier bin magnitudes, and — when the
/// canonical roll is active — the gap between the two smallest channel-0
/// values that anchor it. Finite-difference checks admit an input only when
/// this margin comfortably exceeds the probe step times the stack's gain.
pub fn smoothness_margin(steps: &[Layer], x: &Tensor) -> Result<f64> {
    let mut margin = f64::INFINITY;
    let mut act = x.clone();
    let mut after_halfwave = false;
    for step in steps {
        match step {
            Layer::Halfwave => {
                for &v in act.data() {
                    margin = margin.min(v.abs());
                }
            }
            Layer::Maxpool(p) => {
                margin = margin.min(maxpool_win_margin(p, &act, after_halfwave)?)
            }
            Layer::FourierMagnitude(f) => {
                if f.canonicalize {
                    margin = margin.min(anchor_gap(&act)?);
                }
                let y = step.forward(&act)?;
                for &m in y.data() {
                    margin = margin.min(m);
                }
                act = y;
                continue;
            }
            _ => {}
        }
        after_halfwave = matches!(step, Layer::Halfwave);
        act = step.forward(&act)?;
    }
    Ok(margin)
}

/// Smallest (max − runner-up) gap over all pooling windows; `+∞` for
/// single-element windows.
///
/// When the pool directly follows a rectifier, a window of exact zeros is
/// *locally constant* rather than tied: every such zero came from a strictly
/// negative pre-activation (the rectifier's own margin term vouches for
/// strictness), so no admissible perturbation can move it. Those windows are
/// skipped.
fn maxpool_win_margin(pool: &super::MaxPool, x: &Tensor, after_halfwave: bool) -> Result<f64> {
    let (c, h, w) = x.chw()?;
    let (e, s) = (pool.extent, pool.stride);
    let out_h = (h - e) / s + 1;
    let out_w = (w - e) / s + 1;
    let mut margin = f64::INFINITY;
    for ch in 0..c {
        let plane = x.channel(ch);
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut best = f64::NEG_INFINITY;
                let mut second = f64::NEG_INFINITY;
                for dy in 0..e {
                    for dx in 0..e {
                        let v = plane[(oy * s + dy) * w + (ox * s + dx)];
                        if v > best {
                            second = best;
                            best = v;
                        } else if v > second {
                            second = v;
                        }
                    }
                }
                if after_halfwave && best == 0.0 {
                    continue;
                }
                if second.is_finite() {
                    margin = margin.min(best - second);
                }
            }
        }
    }
    Ok(margin)
}

/// Gap between the two smallest channel-0 values (the canonical-roll anchor).
fn anchor_gap(x: &Tensor) -> Result<f64> {
    x.chw()?;
    let mut min1 = f64::INFINITY;
    let mut min2 = f64::INFINITY;
    for &v in x.channel(0) {
        if v < min1 {
            min2 = min1;
            min1 = v;
        } else if v < min2 {
            min2 = v;
        }
    }
    Ok(if min2.is_finite() { min2 - min1 } else { f64::INFINITY })
}

fn report_from(analytic: &Tensor, numeric: &Tensor, tolerance: f64) -> GradCheckReport {
    let scale = analytic
        .data()
        .iter()
        .chain(numeric.data())
        .fold(1e-8_f64, |m, &v| m.max(v.abs()));
    let max_rel_err = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .fold(0.0_f64, |m, (&a, &n)| m.max((a - n).abs() / scale));
    GradCheckReport {
        max_rel_err,
        tolerance,
        pass: max_rel_err <= tolerance,
        coords: analytic.len(),
    }
}

fn x_out_len(layer: &Layer, x: &Tensor) -> Result<usize> {
    Ok(layer.out_shape(x.shape())?.iter().product())
}

/// Deterministic values in (-1, 1) from a 64-bit LCG.
fn lcg_unit(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 52) as f64) - 1.0
        })
        .collect()
}
