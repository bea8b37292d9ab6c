//! Path diagnostics and visualization data.
//!
//! Four measurements turn synthesized paths into comparable numbers and
//! images:
//!
//! * [`deviation_profile`] — how far each frame's representation strays from
//!   the straight line joining the endpoint representations, in units of the
//!   endpoint distance. A representation that linearizes a transformation
//!   produces a flat profile.
//! * [`temporal_slice`] — one pixel row (or column) from every frame, stacked
//!   in frame order. Rigid translation reads as diagonal stripes; cross-fading
//!   reads as a static double exposure.
//! * [`receptive_field`] — the image region a response column actually
//!   depends on, measured as gradient magnitude averaged over seeded noise
//!   images, plus a scalar size estimate.
//! * [`path_rmse`] — per-frame pixel RMSE between a path and a reference,
//!   the score used to compare synthesized paths against ground truth.
//!
//! Everything here is pure and deterministic: noise draws are seeded per
//! draw and reduced in index order, so results are bitwise reproducible
//! regardless of thread count.

use serde::{Deserialize, Serialize};

use crate::geodesic::Path;
use crate::images;
use crate::par;
use crate::stack::Representation;
use crate::tensor::{dist_sq, Tensor};
use crate::{Error, Result};

/// Default number of noise draws for [`receptive_field`].
pub const DEFAULT_N_NOISE: usize = 256;

/// Mass fraction captured by the receptive-field size estimate.
const RF_MASS_FRACTION: f64 = 0.95;

/// One frame's position relative to the straight line through the endpoint
/// representations. Both coordinates are normalized by the endpoint
/// representation distance, so 1.0 means "as far as the endpoints are apart".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationKnot {
    /// Parallel coordinate along the line: 0 at `f(x₀)`, 1 at `f(x_N)`.
    pub arc_position: f64,
    /// Perpendicular distance from the line, in the full response space.
    pub deviation: f64,
}

/// Straight-line deviation profile of a path: one knot per frame.
///
/// Endpoint knots are exactly `(0, 0)` and `(1, 0)` — the endpoints span the
/// line, so they lie on it by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationProfile {
    pub knots: Vec<DeviationKnot>,
}

impl DeviationProfile {
    /// Largest perpendicular deviation over all knots.
    pub fn max_deviation(&self) -> f64 {
        self.knots.iter().map(|k| k.deviation).fold(0.0, f64::max)
    }
}

/// Which pixel line [`temporal_slice`] extracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceAxis {
    Row,
    Column,
}

/// Measured receptive field of one response column.
#[derive(Debug, Clone)]
pub struct RFMap {
    /// Per-pixel gradient magnitude, averaged over noise draws, column units,
    /// and input channels. Single-channel image, nonnegative.
    pub grid: Tensor,
    /// Side length in pixels of the smallest square, centered on the map's
    /// center of mass, that captures 95% of its total mass.
    pub size_estimate: f64,
}

/// Projects every frame's representation onto the line through the endpoint
/// representations.
///
/// For frame `n` with response `r_n`, let `u = r_N − r_0` and `v = r_n − r_0`.
/// The knot is `(⟨v,u⟩/‖u‖², ‖v − t·u‖/‖u‖)` — parallel coordinate and
/// perpendicular distance, both in units of the endpoint separation. The
/// perpendicular distance is taken in the full response space, which for any
/// single point coincides with its distance inside the plane spanned by the
/// point and the line.
///
/// # Errors
///
/// Fails when the endpoint representations coincide (the line, and hence the
/// profile, is undefined) or when the representation rejects a frame.
pub fn deviation_profile<R: Representation>(path: &Path, rep: &R) -> Result<DeviationProfile> {
    let responses: Vec<Tensor> = par::map_indexed(path.frames().len(), |n| rep.evaluate(path.frame(n)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let r0 = &responses[0];
    let u = responses[responses.len() - 1].sub(r0)?;
    let d2 = u.norm_sq();
    if d2 == 0.0 {
        return Err(Error::Config(
            "deviation profile undefined: endpoint representations coincide".into(),
        ));
    }
    let scale = d2.sqrt();
    let knots = responses
        .iter()
        .map(|r| {
            let v = r.sub(r0).expect("responses share a shape");
            let t = v.dot(&u).expect("responses share a shape") / d2;
            let perp_sq: f64 = v
                .data()
                .iter()
                .zip(u.data())
                .map(|(vi, ui)| {
                    let p = vi - t * ui;
                    p * p
                })
                .sum();
            DeviationKnot {
                arc_position: t,
                deviation: perp_sq.sqrt() / scale,
            }
        })
        .collect();
    Ok(DeviationProfile { knots })
}

/// Stacks one pixel line from every frame into a single image.
///
/// With `SliceAxis::Row`, output row `n` is row `index` of frame `n` (shape
/// `[C, frames, W]`). With `SliceAxis::Column`, output *column* `n` is column
/// `index` of frame `n` (shape `[C, H, frames]`). Channels pass through
/// unchanged.
///
/// # Errors
///
/// Fails when `index` is outside the frame's height (rows) or width
/// (columns).
pub fn temporal_slice(path: &Path, axis: SliceAxis, index: usize) -> Result<Tensor> {
    let (c, h, w) = path.frame(0).chw()?;
    let frames = path.frames();
    match axis {
        SliceAxis::Row => {
            if index >= h {
                return Err(Error::Config(format!(
                    "row index {index} out of range for height {h}"
                )));
            }
            let mut out = Tensor::zeros(vec![c, frames.len(), w]);
            for (n, frame) in frames.iter().enumerate() {
                for ch in 0..c {
                    let src = &frame.channel(ch)[index * w..(index + 1) * w];
                    out.channel_mut(ch)[n * w..(n + 1) * w].copy_from_slice(src);
                }
            }
            Ok(out)
        }
        SliceAxis::Column => {
            if index >= w {
                return Err(Error::Config(format!(
                    "column index {index} out of range for width {w}"
                )));
            }
            let mut out = Tensor::zeros(vec![c, h, frames.len()]);
            let n_frames = frames.len();
            for (n, frame) in frames.iter().enumerate() {
                for ch in 0..c {
                    let src = frame.channel(ch);
                    let dst = out.channel_mut(ch);
                    for r in 0..h {
                        dst[r * n_frames + n] = src[r * w + index];
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Measures the receptive field of the response column at `location`.
///
/// A "column" is the set of response units across all channels at one spatial
/// position of the response grid, so `rep`'s response must be a
/// `[channels, height, width]` tensor and `location` is a `(row, column)`
/// index into its grid. `in_shape` fixes the image domain the field is
/// measured over.
///
/// For each of `n_noise` seeded uniform-noise images and each unit in the
/// column, the gradient of that unit's response is pulled back to the input
/// and its absolute value accumulated; the map is the mean over draws, units,
/// and input channels. Taking the mean of per-unit absolute gradients (rather
/// than the gradient of the column's sum) prevents cancellation between units
/// from shrinking the measured field.
///
/// Draw `i` uses RNG stream `i` of `seed`, and draws are reduced in index
/// order, so the result is bitwise reproducible at any thread count.
///
/// # Errors
///
/// Fails when `n_noise` is zero, the response is not an image-shaped tensor,
/// `location` falls outside the response grid, or the map has no mass (every
/// unit in the column had zero gradient on every draw).
pub fn receptive_field<R: Representation>(
    rep: &R,
    in_shape: &[usize],
    location: (usize, usize),
    n_noise: usize,
    seed: u64,
) -> Result<RFMap> {
    if n_noise == 0 {
        return Err(Error::Config("receptive_field needs n_noise >= 1".into()));
    }
    let probe = rep.evaluate(&Tensor::full(in_shape.to_vec(), 0.5))?;
    let &[units, grid_h, grid_w] = probe.shape() else {
        return Err(Error::Shape(format!(
            "receptive_field needs a [channels, height, width] response, got shape {:?}",
            probe.shape()
        )));
    };
    let (row, col) = location;
    if row >= grid_h || col >= grid_w {
        return Err(Error::Config(format!(
            "column location ({row}, {col}) outside the {grid_h}×{grid_w} response grid"
        )));
    }

    let in_c = in_shape[0];
    let plane = in_shape[1] * in_shape[2];
    let per_draw = par::map_indexed(n_noise, |draw| -> Result<Vec<f64>> {
        let x = images::uniform_noise(in_shape, seed, draw as u64);
        let eval = rep.forward(&x)?;
        let mut acc = vec![0.0; plane];
        for unit in 0..units {
            let mut cot = Tensor::zeros(probe.shape().to_vec());
            cot.data_mut()[(unit * grid_h + row) * grid_w + col] = 1.0;
            let g = rep.pullback(&eval, &cot)?;
            for c in 0..in_c {
                for (a, v) in acc.iter_mut().zip(g.channel(c)) {
                    *a += v.abs();
                }
            }
        }
        Ok(acc)
    });

    let mut grid = vec![0.0; plane];
    for draw in per_draw {
        for (g, v) in grid.iter_mut().zip(draw?) {
            *g += v;
        }
    }
    let denom = (n_noise * units * in_c) as f64;
    for g in &mut grid {
        *g /= denom;
    }
    let grid = Tensor::new(vec![1, in_shape[1], in_shape[2]], grid)?;
    let size_estimate = mass_square_side(&grid)?;
    Ok(RFMap { grid, size_estimate })
}

/// Side length of the smallest square, centered on the map's center of mass,
/// whose contained pixel centers carry at least [`RF_MASS_FRACTION`] of the
/// total mass.
fn mass_square_side(grid: &Tensor) -> Result<f64> {
    let (_, h, w) = grid.chw()?;
    let data = grid.data();
    let total: f64 = data.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config(
            "receptive field is empty: the column had zero gradient on every draw".into(),
        ));
    }
    let mut r_bar = 0.0;
    let mut c_bar = 0.0;
    for r in 0..h {
        for c in 0..w {
            let m = data[r * w + c];
            r_bar += m * r as f64;
            c_bar += m * c as f64;
        }
    }
    r_bar /= total;
    c_bar /= total;

    let target = RF_MASS_FRACTION * total;
    let side_max = 2 * h.max(w);
    for side in 1..=side_max {
        let half = side as f64 / 2.0;
        let mut captured = 0.0;
        for r in 0..h {
            if (r as f64 - r_bar).abs() > half {
                continue;
            }
            for c in 0..w {
                if (c as f64 - c_bar).abs() <= half {
                    captured += data[r * w + c];
                }
            }
        }
        if captured >= target {
            return Ok(side as f64);
        }
    }
    Ok(side_max as f64)
}

/// Per-frame root-mean-square pixel difference between two paths.
///
/// # Errors
///
/// Fails when the paths differ in frame count or frame shape.
pub fn path_rmse(path: &Path, reference: &Path) -> Result<Vec<f64>> {
    if path.frames().len() != reference.frames().len() {
        return Err(Error::Shape(format!(
            "paths have {} and {} frames",
            path.frames().len(),
            reference.frames().len()
        )));
    }
    path.frames()
        .iter()
        .zip(reference.frames())
        .map(|(a, b)| {
            a.check_same_shape(b)?;
            Ok((dist_sq(a.data(), b.data()) / a.len() as f64).sqrt())
        })
        .collect()
}
