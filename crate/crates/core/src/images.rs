//! Seeded synthetic image sources.
//!
//! Every generator here is a pure function of its arguments: the same seed and
//! stream always produce the same tensor, bit for bit, on every platform. That
//! property is what lets shipped recipes and the determinism checks re-create
//! their inputs instead of shipping large binary fixtures.
//!
//! Values are always in `[0, 1]`, the range expected by image I/O and by the
//! geodesic solver's clamp.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Uniform white noise on `[0, 1)` with the given shape.
///
/// `seed` selects the experiment; `stream` selects an independent draw within
/// it. Distinct `(seed, stream)` pairs give statistically independent images,
/// so parallel consumers can generate draw `i` on stream `i` without sharing
/// any RNG state.
pub fn uniform_noise(shape: &[usize], seed: u64, stream: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let len: usize = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
    Tensor::new(shape.to_vec(), data).expect("noise shape is consistent by construction")
}

/// Single-channel `1/f` ("pink") noise image: white noise shaped to the
/// power spectrum of natural scenes.
///
/// Pink noise is the standard stand-in for natural image statistics when no
/// photographs are available: it has the long-range spatial correlations and
/// multi-scale structure that white noise lacks. The result is rescaled to
/// mean 0.5 with extremes at 0.05 / 0.95, leaving headroom inside `[0, 1]` so
/// that resampling overshoot does not clip.
pub fn pink_noise(height: usize, width: usize, seed: u64, stream: u64) -> Tensor {
    assert!(height > 0 && width > 0, "pink_noise needs a nonempty image");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut buf: Vec<Complex<f64>> = (0..height * width)
        .map(|_| Complex::new(rng.gen::<f64>() - 0.5, 0.0))
        .collect();

    let mut planner = FftPlanner::new();
    fft2_in_place(&mut planner, &mut buf, height, width, true);

    // Scale each coefficient by 1/f, with f the radial frequency in cycles
    // per pixel. The DC term is zeroed (mean is reimposed below).
    for ky in 0..height {
        for kx in 0..width {
            let fy = ky.min(height - ky) as f64 / height as f64;
            let fx = kx.min(width - kx) as f64 / width as f64;
            let f = (fy * fy + fx * fx).sqrt();
            let gain = if ky == 0 && kx == 0 { 0.0 } else { 1.0 / f };
            buf[ky * width + kx] *= gain;
        }
    }

    fft2_in_place(&mut planner, &mut buf, height, width, false);

    // The inverse transform of a Hermitian-filtered real signal is real up to
    // rounding; keep the real part and normalize into [0.05, 0.95].
    let n = (height * width) as f64;
    let vals: Vec<f64> = buf.iter().map(|z| z.re / n).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let peak = vals
        .iter()
        .map(|v| (v - mean).abs())
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let data: Vec<f64> = vals.iter().map(|v| 0.5 + 0.45 * (v - mean) / peak).collect();
    Tensor::new(vec![1, height, width], data).expect("shape consistent by construction")
}

/// Replicates a single-channel image across `channels` identical channels.
///
/// Used to feed grayscale sources to three-channel stacks.
///
/// # Errors
///
/// Rejects inputs that are not single-channel images.
pub fn replicate_channels(x: &Tensor, channels: usize) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if c != 1 {
        return Err(Error::Shape(format!(
            "replicate_channels expects a single-channel image, got {c} channels"
        )));
    }
    if channels == 0 {
        return Err(Error::Shape("replicate_channels needs channels >= 1".into()));
    }
    let mut data = Vec::with_capacity(channels * h * w);
    for _ in 0..channels {
        data.extend_from_slice(x.data());
    }
    Tensor::new(vec![channels, h, w], data)
}

/// Single-channel disk of intensity 1 on a 0 background with a raised-cosine
/// edge of width `edge` pixels, centered at `(center_row, center_col)`.
///
/// The smooth edge keeps the image band-limited enough for subpixel
/// resampling to stay accurate; a hard edge would ring.
pub fn soft_disk(
    height: usize,
    width: usize,
    center: [f64; 2],
    radius: f64,
    edge: f64,
) -> Tensor {
    assert!(radius > 0.0 && edge > 0.0, "disk needs positive radius and edge");
    let mut img = Tensor::zeros(vec![1, height, width]);
    let data = img.data_mut();
    for r in 0..height {
        for c in 0..width {
            let d = ((r as f64 - center[0]).powi(2) + (c as f64 - center[1]).powi(2)).sqrt();
            let v = if d <= radius - edge / 2.0 {
                1.0
            } else if d >= radius + edge / 2.0 {
                0.0
            } else {
                0.5 * (1.0 + (std::f64::consts::PI * (d - radius + edge / 2.0) / edge).cos())
            };
            data[r * width + c] = v;
        }
    }
    img
}

/// In-place 2-D FFT over a row-major `h × w` complex buffer.
fn fft2_in_place(
    planner: &mut FftPlanner<f64>,
    buf: &mut [Complex<f64>],
    h: usize,
    w: usize,
    forward: bool,
) {
    let (row_fft, col_fft) = if forward {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    } else {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    };
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
