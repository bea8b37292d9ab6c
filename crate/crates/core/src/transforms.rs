//! Parametric image deformations and ground-truth transformation paths.
//!
//! A [`TransformSpec`] describes a translation, rotation or dilation together
//! with its boundary and interpolation policies. [`apply`] warps an image by
//! a *fraction* of the transform (translations and rotations scale linearly,
//! dilations geometrically), and [`ground_truth_path`] samples the fractions
//! `n/N` to produce the reference sequence a synthesized geodesic is compared
//! against. Every frame is resampled directly from the source image — never
//! from the previous frame — so interpolation blur does not compound.

use serde::{Deserialize, Serialize};

use crate::geodesic::Path;
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformKind {
    /// Shift by `dx` columns and `dy` rows (pixels).
    Translate { dx: f64, dy: f64 },
    /// Rotate about the center; positive angles turn the +x axis toward +y
    /// (clockwise on screen, where y points down).
    Rotate { degrees: f64 },
    /// Scale about the center by `scale` (> 1 grows the content).
    Dilate { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Circular,
    Zero,
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Bilinear,
    Bicubic,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct TransformSpec {
    #[serde(flatten)]
    pub kind: TransformKind,
    /// Rotation/dilation center `[x, y]`; defaults to the image center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    /// Defaults to circular for translations (exact rolls, exact Fourier
    /// invariance) and zero for rotation/dilation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    /// Defaults to bicubic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpolation: Option<Interpolation>,
}

impl TransformSpec {
    pub fn translate(dx: f64, dy: f64) -> Self {
        Self {
            kind: TransformKind::Translate { dx, dy },
            center: None,
            boundary: None,
            interpolation: None,
        }
    }

    pub fn rotate(degrees: f64) -> Self {
        Self {
            kind: TransformKind::Rotate { degrees },
            center: None,
            boundary: None,
            interpolation: None,
        }
    }

    pub fn dilate(scale: f64) -> Self {
        Self {
            kind: TransformKind::Dilate { scale },
            center: None,
            boundary: None,
            interpolation: None,
        }
    }

    pub fn with_boundary(mut self, b: Boundary) -> Self {
        self.boundary = Some(b);
        self
    }

    pub fn with_interpolation(mut self, i: Interpolation) -> Self {
        self.interpolation = Some(i);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            TransformKind::Dilate { scale } if !(scale > 0.0) => Err(Error::Config(format!(
                "dilation scale must be positive, got {scale}"
            ))),
            TransformKind::Rotate { degrees } if !(-180.0 < degrees && degrees <= 180.0) => {
                Err(Error::Config(format!(
                    "rotation must lie in (-180, 180] degrees, got {degrees}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn effective_boundary(&self) -> Boundary {
        self.boundary.unwrap_or(match self.kind {
            TransformKind::Translate { .. } => Boundary::Circular,
            _ => Boundary::Zero,
        })
    }

    pub fn effective_interpolation(&self) -> Interpolation {
        self.interpolation.unwrap_or(Interpolation::Bicubic)
    }
}

/// Warp `x` by `fraction` of the transform; pixels clamped to `[0,1]`.
///
/// `fraction = 0` returns the input unchanged, bitwise, for every kind.
/// Integer circular translations are exact pixel rolls with no resampling.
pub fn apply(spec: &TransformSpec, x: &Tensor, fraction: f64) -> Result<Tensor> {
    spec.validate()?;
    let (_, h, w) = x.chw()?;
    if fraction == 0.0 {
        return Ok(x.clone());
    }
    match spec.kind {
        TransformKind::Translate { dx, dy } => {
            let (tx, ty) = (dx * fraction, dy * fraction);
            if spec.effective_boundary() == Boundary::Circular
                && tx.fract() == 0.0
                && ty.fract() == 0.0
            {
                return Ok(roll(x, ty as i64, tx as i64));
            }
            resample(spec, x, move |r, c| (r as f64 - ty, c as f64 - tx))
        }
        TransformKind::Rotate { degrees } => {
            let theta = degrees.to_radians() * fraction;
            if theta == 0.0 {
                return Ok(x.clone());
            }
            let (cx, cy) = center_of(spec, h, w);
            let (sin, cos) = theta.sin_cos();
            // Inverse-warp: rotate output coordinates by −θ back to the source.
            resample(spec, x, move |r, c| {
                let px = c as f64 - cx;
                let py = r as f64 - cy;
                (cy + (py * cos - px * sin), cx + (px * cos + py * sin))
            })
        }
        TransformKind::Dilate { scale } => {
            let s = scale.powf(fraction);
            if s == 1.0 {
                return Ok(x.clone());
            }
            let (cx, cy) = center_of(spec, h, w);
            resample(spec, x, move |r, c| {
                (cy + (r as f64 - cy) / s, cx + (c as f64 - cx) / s)
            })
        }
    }
}

/// Frames `x_n = apply(spec, x0, n/N)` for `n = 0..N`. Frame `N` is the
/// endpoint a geodesic synthesis between the pair would use.
pub fn ground_truth_path(spec: &TransformSpec, x0: &Tensor, n: usize) -> Result<Path> {
    if n < 1 {
        return Err(Error::Config("ground-truth path needs N >= 1".into()));
    }
    let frames = (0..=n)
        .map(|k| apply(spec, x0, k as f64 / n as f64))
        .collect::<Result<Vec<_>>>()?;
    Path::from_frames(frames)
}

fn center_of(spec: &TransformSpec, h: usize, w: usize) -> (f64, f64) {
    match spec.center {
        Some([cx, cy]) => (cx, cy),
        None => ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0),
    }
}

/// Exact circular roll: output (r, c) reads input (r − dy, c − dx), wrapped.
fn roll(x: &Tensor, dy: i64, dx: i64) -> Tensor {
    let (nc, h, w) = x.chw().unwrap();
    let mut out = Tensor::zeros(x.shape().to_vec());
    for ch in 0..nc {
        let src = x.channel(ch);
        let dst = out.channel_mut(ch);
        for r in 0..h {
            let sr = (r as i64 - dy).rem_euclid(h as i64) as usize;
            for c in 0..w {
                let sc = (c as i64 - dx).rem_euclid(w as i64) as usize;
                dst[r * w + c] = src[sr * w + sc];
            }
        }
    }
    out
}

/// Inverse-warp resampling: for each output pixel, `src` yields the source
/// (row, col) to sample with the spec's interpolation and boundary policies.
fn resample(
    spec: &TransformSpec,
    x: &Tensor,
    src: impl Fn(usize, usize) -> (f64, f64),
) -> Result<Tensor> {
    let (nc, h, w) = x.chw()?;
    let boundary = spec.effective_boundary();
    let interp = spec.effective_interpolation();
    let mut out = Tensor::zeros(x.shape().to_vec());
    for ch in 0..nc {
        let plane = x.channel(ch);
        let dst = out.channel_mut(ch);
        for r in 0..h {
            for c in 0..w {
                let (sr, sc) = src(r, c);
                let v = match interp {
                    Interpolation::Bilinear => bilinear(plane, h, w, sr, sc, boundary),
                    Interpolation::Bicubic => bicubic(plane, h, w, sr, sc, boundary),
                };
                dst[r * w + c] = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Fetch with boundary policy. Zero padding returns 0 outside; circular
/// wraps; reflect mirrors symmetrically (edge pixels duplicated).
fn fetch(plane: &[f64], h: usize, w: usize, r: i64, c: i64, b: Boundary) -> f64 {
    let (ri, ci) = match b {
        Boundary::Zero => {
            if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                return 0.0;
            }
            (r as usize, c as usize)
        }
        Boundary::Circular => (
            r.rem_euclid(h as i64) as usize,
            c.rem_euclid(w as i64) as usize,
        ),
        Boundary::Reflect => (reflect_index(r, h), reflect_index(c, w)),
    };
    plane[ri * w + ci]
}

fn reflect_index(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let mut v = i.rem_euclid(period);
    if v >= n {
        v = period - 1 - v;
    }
    v as usize
}

fn bilinear(plane: &[f64], h: usize, w: usize, r: f64, c: f64, b: Boundary) -> f64 {
    let r0 = r.floor();
    let c0 = c.floor();
    let fr = r - r0;
    let fc = c - c0;
    let (r0, c0) = (r0 as i64, c0 as i64);
    let v00 = fetch(plane, h, w, r0, c0, b);
    let v01 = fetch(plane, h, w, r0, c0 + 1, b);
    let v10 = fetch(plane, h, w, r0 + 1, c0, b);
    let v11 = fetch(plane, h, w, r0 + 1, c0 + 1, b);
    let top = v00 + fc * (v01 - v00);
    let bot = v10 + fc * (v11 - v10);
    top + fr * (bot - top)
}

/// Catmull-Rom cubic through four taps, evaluated at `t` in [0,1] past `p1`.
fn cubic(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    p1 + 0.5
        * t
        * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)))
}

fn bicubic(plane: &[f64], h: usize, w: usize, r: f64, c: f64, b: Boundary) -> f64 {
    let r1 = r.floor();
    let c1 = c.floor();
    let fr = r - r1;
    let fc = c - c1;
    let (r1, c1) = (r1 as i64, c1 as i64);
    let mut rows = [0.0; 4];
    for (i, row) in rows.iter_mut().enumerate() {
        let rr = r1 - 1 + i as i64;
        *row = cubic(
            fetch(plane, h, w, rr, c1 - 1, b),
            fetch(plane, h, w, rr, c1, b),
            fetch(plane, h, w, rr, c1 + 1, b),
            fetch(plane, h, w, rr, c1 + 2, b),
            fc,
        );
    }
    cubic(rows[0], rows[1], rows[2], rows[3], fr)
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

    fn image(h: usize, w: usize, seed: u64) -> Tensor {
        Tensor::new(vec![1, h, w], pseudo_random(h * w, seed)).unwrap()
    }

    /// Centered disk with a smooth (cosine) edge over an 8 px band; smooth
    /// enough that resampling error stays well below the profile scale.
    fn soft_disk(n: usize, radius: f64) -> Tensor {
        let c = (n as f64 - 1.0) / 2.0;
        let mut t = Tensor::zeros(vec![1, n, n]);
        for r in 0..n {
            for s in 0..n {
                let d = ((r as f64 - c).powi(2) + (s as f64 - c).powi(2)).sqrt();
                let v = if d < radius - 4.0 {
                    1.0
                } else if d > radius + 4.0 {
                    0.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * (d - radius + 4.0) / 8.0).cos())
                };
                t.data_mut()[r * n + s] = v;
            }
        }
        t
    }

    #[test]
    fn fraction_zero_is_bitwise_identity_for_all_kinds() {
        let x = image(8, 8, 1);
        for spec in [
            TransformSpec::translate(3.7, -1.2),
            TransformSpec::rotate(33.0),
            TransformSpec::dilate(1.1),
        ] {
            let y = apply(&spec, &x, 0.0).unwrap();
            assert_eq!(y.data(), x.data());
        }
    }

    #[test]
    fn integer_circular_translation_is_an_exact_roll() {
        let x = image(6, 8, 2);
        let spec = TransformSpec::translate(3.0, 2.0);
        let y = apply(&spec, &x, 1.0).unwrap();
        for r in 0..6 {
            for c in 0..8 {
                let want = x.data()[((r + 6 - 2) % 6) * 8 + (c + 8 - 3) % 8];
                assert_eq!(y.data()[r * 8 + c], want, "at ({r},{c})");
            }
        }
    }

    #[test]
    fn fractional_integer_shift_along_path_is_exact() {
        // 8 px over N=8 → every frame is an integer roll.
        let x = image(8, 8, 3);
        let spec = TransformSpec::translate(8.0, 0.0);
        let path = ground_truth_path(&spec, &x, 8).unwrap();
        // Quarter way: 2 px roll.
        let want = apply(&TransformSpec::translate(2.0, 0.0), &x, 1.0).unwrap();
        assert_eq!(path.frame(2).data(), want.data());
        // Full transform wraps back to the original.
        assert_eq!(path.frame(8).data(), x.data());
    }

    #[test]
    fn rotating_a_centered_disk_changes_almost_nothing() {
        let disk = soft_disk(32, 10.0);
        let spec = TransformSpec::rotate(4.0);
        let y = apply(&spec, &disk, 1.0).unwrap();
        let rmse =
            (crate::tensor::dist_sq(y.data(), disk.data()) / disk.len() as f64).sqrt();
        assert!(rmse <= 1e-3, "rmse {rmse}");
    }

    #[test]
    fn dilation_fraction_scales_geometrically() {
        let spec = TransformSpec::dilate(1.10);
        // At fraction 1/2 the effective scale is sqrt(1.10), not 1.05.
        let x = soft_disk(24, 8.0);
        let half = apply(&spec, &x, 0.5).unwrap();
        let direct = apply(&TransformSpec::dilate(1.10_f64.sqrt()), &x, 1.0).unwrap();
        for (a, b) in half.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ground_truth_path_has_n_plus_one_frames_with_exact_endpoints() {
        let x = image(8, 8, 4);
        let spec = TransformSpec::rotate(4.0);
        let path = ground_truth_path(&spec, &x, 10).unwrap();
        assert_eq!(path.frames().len(), 11);
        assert_eq!(path.frame(0).data(), x.data());
        let endpoint = apply(&spec, &x, 1.0).unwrap();
        assert_eq!(path.frame(10).data(), endpoint.data());
    }

    #[test]
    fn n_equals_one_gives_just_the_endpoint_pair() {
        let x = image(6, 6, 5);
        let spec = TransformSpec::translate(2.0, 0.0);
        let path = ground_truth_path(&spec, &x, 1).unwrap();
        assert_eq!(path.frames().len(), 2);
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        let x = image(12, 12, 6);
        for spec in [
            TransformSpec::translate(1.3, 0.4),
            TransformSpec::rotate(17.0),
            TransformSpec::dilate(0.8),
        ] {
            let y = apply(&spec, &x, 1.0).unwrap();
            assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn incremental_composition_stays_close_to_direct_application() {
        // Iterating the per-step warp accumulates interpolation error; the
        // bound is a regression guard, not an exactness claim.
        let x = soft_disk(32, 9.0);
        let n = 10;
        for spec in [
            TransformSpec::translate(8.0, 0.0),
            TransformSpec::rotate(4.0),
            TransformSpec::dilate(1.10),
        ] {
            let direct = apply(&spec, &x, 1.0).unwrap();
            let step = match spec.kind {
                TransformKind::Translate { dx, dy } => {
                    TransformSpec::translate(dx / n as f64, dy / n as f64)
                }
                TransformKind::Rotate { degrees } => {
                    TransformSpec::rotate(degrees / n as f64)
                }
                TransformKind::Dilate { scale } => {
                    TransformSpec::dilate(scale.powf(1.0 / n as f64))
                }
            };
            let mut iterated = x.clone();
            for _ in 0..n {
                iterated = apply(&step, &iterated, 1.0).unwrap();
            }
            let rmse = (crate::tensor::dist_sq(iterated.data(), direct.data())
                / x.len() as f64)
                .sqrt();
            assert!(rmse <= 2e-2, "{:?}: rmse {rmse}", spec.kind);
        }
    }

    #[test]
    fn validation_rejects_out_of_range_parameters() {
        assert!(TransformSpec::dilate(0.0).validate().is_err());
        assert!(TransformSpec::rotate(200.0).validate().is_err());
        assert!(TransformSpec::rotate(180.0).validate().is_ok());
    }

    #[test]
    fn bilinear_option_is_selectable_and_differs_from_bicubic() {
        let x = image(10, 10, 7);
        let spec = TransformSpec::translate(0.5, 0.0);
        let cubic = apply(&spec, &x, 1.0).unwrap();
        let linear = apply(&spec.with_interpolation(Interpolation::Bilinear), &x, 1.0).unwrap();
        assert_ne!(cubic.data(), linear.data());
    }
}
