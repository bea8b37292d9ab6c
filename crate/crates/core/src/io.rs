//! Image, tensor, and CSV persistence.
//!
//! Three formats cover every artifact the pipeline emits:
//!
//! * **PNG** for anything meant to be looked at — frames, slices, RF maps.
//!   8- or 16-bit, grayscale or RGB, with tensor values mapped linearly
//!   between `[0, 1]` and the integer code range. Quantization is lossy by
//!   nature, which is why PNG is never the format of record.
//! * **`.ten`**, a little binary tensor container, for exact round-trips.
//!   Every float survives bit for bit, so determinism checks can compare
//!   files instead of re-deriving values.
//! * **CSV** for diagnostics and profiles, one writer per artifact so the
//!   column sets stay fixed.
//!
//! # The `.ten` container
//!
//! Little-endian throughout:
//!
//! | offset | size | field |
//! |--------|------|-------|
//! | 0      | 8    | magic `"REPGTEN\0"` |
//! | 8      | 4    | format version, `u32`, currently 1 |
//! | 12     | 4    | dtype code, `u32`, 1 = IEEE-754 binary64 |
//! | 16     | 4    | number of dimensions, `u32` |
//! | 20     | 8·n  | extents, `u64` each |
//! | …      | 8·∏  | payload, row-major `f64` |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path as FsPath;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::geodesic::DiagnosticsRow;
use crate::metrics::DeviationProfile;
use crate::tensor::Tensor;
use crate::{Error, Result};

const TEN_MAGIC: [u8; 8] = *b"REPGTEN\0";
const TEN_VERSION: u32 = 1;
const TEN_DTYPE_F64: u32 = 1;

/// Output sample depth for [`write_png`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Writes a 1-channel (grayscale) or 3-channel (RGB) image tensor as PNG.
///
/// Values are clamped to `[0, 1]` and quantized to the code range by
/// round-to-nearest, so a tensor holding exact codes (`k/255` at 8 bit)
/// round-trips losslessly.
///
/// # Errors
///
/// Fails on channel counts other than 1 or 3, or on filesystem trouble.
pub fn write_png(path: &FsPath, x: &Tensor, depth: BitDepth) -> Result<()> {
    let (c, h, w) = x.chw()?;
    let (wu, hu) = (w as u32, h as u32);
    let img = match (c, depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(
            ImageBuffer::from_fn(wu, hu, |px, py| {
                Luma([quantize_u8(x.channel(0)[py as usize * w + px as usize])])
            }),
        ),
        (3, BitDepth::Eight) => DynamicImage::ImageRgb8(ImageBuffer::from_fn(wu, hu, |px, py| {
            let i = py as usize * w + px as usize;
            Rgb([
                quantize_u8(x.channel(0)[i]),
                quantize_u8(x.channel(1)[i]),
                quantize_u8(x.channel(2)[i]),
            ])
        })),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            ImageBuffer::from_fn(wu, hu, |px, py| {
                Luma([quantize_u16(x.channel(0)[py as usize * w + px as usize])])
            }),
        ),
        (3, BitDepth::Sixteen) => {
            DynamicImage::ImageRgb16(ImageBuffer::from_fn(wu, hu, |px, py| {
                let i = py as usize * w + px as usize;
                Rgb([
                    quantize_u16(x.channel(0)[i]),
                    quantize_u16(x.channel(1)[i]),
                    quantize_u16(x.channel(2)[i]),
                ])
            }))
        }
        _ => {
            return Err(Error::Format(format!(
                "PNG output supports 1 or 3 channels, got {c}"
            )))
        }
    };
    img.save(path)?;
    Ok(())
}

/// Reads a PNG into a `[channels, height, width]` tensor with values in
/// `[0, 1]`.
///
/// Grayscale and RGB at 8 or 16 bit map to 1- and 3-channel tensors; an
/// alpha channel, if present, is dropped.
///
/// # Errors
///
/// Fails on unreadable files, undecodable images, or pixel formats beyond
/// the above.
pub fn read_png(path: &FsPath) -> Result<Tensor> {
    let img = image::open(path)?;
    let img = match img {
        DynamicImage::ImageLumaA8(_) => DynamicImage::ImageLuma8(img.to_luma8()),
        DynamicImage::ImageRgba8(_) => DynamicImage::ImageRgb8(img.to_rgb8()),
        DynamicImage::ImageLumaA16(_) => DynamicImage::ImageLuma16(img.to_luma16()),
        DynamicImage::ImageRgba16(_) => DynamicImage::ImageRgb16(img.to_rgb16()),
        other => other,
    };
    match img {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
            Tensor::new(vec![1, h, w], data)
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf
                .into_raw()
                .iter()
                .map(|&v| f64::from(v) / 65535.0)
                .collect();
            Tensor::new(vec![1, h, w], data)
        }
        DynamicImage::ImageRgb8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let raw = buf.into_raw();
            Tensor::new(vec![3, h, w], deinterleave(&raw, w * h, |v| f64::from(v) / 255.0))
        }
        DynamicImage::ImageRgb16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let raw = buf.into_raw();
            Tensor::new(vec![3, h, w], deinterleave(&raw, w * h, |v| f64::from(v) / 65535.0))
        }
        other => Err(Error::Format(format!(
            "unsupported PNG pixel format {:?}; expected 8/16-bit grayscale or RGB",
            other.color()
        ))),
    }
}

fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quantize_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Interleaved `RGBRGB…` to planar channel-major data.
fn deinterleave<T: Copy>(raw: &[T], plane: usize, f: impl Fn(T) -> f64) -> Vec<f64> {
    let mut data = vec![0.0; 3 * plane];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        data[i] = f(px[0]);
        data[plane + i] = f(px[1]);
        data[2 * plane + i] = f(px[2]);
    }
    data
}

/// Writes a tensor to the `.ten` container. Exact: every float survives
/// bit for bit.
pub fn write_tensor(path: &FsPath, x: &Tensor) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&TEN_MAGIC)?;
    out.write_all(&TEN_VERSION.to_le_bytes())?;
    out.write_all(&TEN_DTYPE_F64.to_le_bytes())?;
    out.write_all(&(x.shape().len() as u32).to_le_bytes())?;
    for &d in x.shape() {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in x.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `.ten` container written by [`write_tensor`].
///
/// # Errors
///
/// Fails on I/O trouble or on a malformed header (wrong magic, unknown
/// version or dtype, truncated payload).
pub fn read_tensor(path: &FsPath) -> Result<Tensor> {
    let mut input = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if magic != TEN_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a tensor container (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut input)?;
    if version != TEN_VERSION {
        return Err(Error::Format(format!(
            "unsupported tensor container version {version}"
        )));
    }
    let dtype = read_u32(&mut input)?;
    if dtype != TEN_DTYPE_F64 {
        return Err(Error::Format(format!("unsupported dtype code {dtype}")));
    }
    let ndim = read_u32(&mut input)? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        shape.push(u64::from_le_bytes(b) as usize);
    }
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        data.push(f64::from_le_bytes(b));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format(format!(
            "trailing bytes after tensor payload in {}",
            path.display()
        )));
    }
    Tensor::new(shape, data)
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Writes solver diagnostics as CSV with the fixed column set
/// `iter, rep_energy, pixel_energy, rep_length, equispacing_cv`.
pub fn write_diagnostics_csv(path: &FsPath, rows: &[DiagnosticsRow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "iter,rep_energy,pixel_energy,rep_length,equispacing_cv")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iter, r.rep_energy, r.pixel_energy, r.rep_length, r.equispacing_cv
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a deviation profile as CSV with columns `arc_position, deviation`.
pub fn write_profile_csv(path: &FsPath, profile: &DeviationProfile) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "arc_position,deviation")?;
    for k in &profile.knots {
        writeln!(out, "{},{}", k.arc_position, k.deviation)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a per-frame RMSE list as CSV with columns `frame, rmse`.
pub fn write_rmse_csv(path: &FsPath, rmse: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "frame,rmse")?;
    for (n, v) in rmse.iter().enumerate() {
        writeln!(out, "{n},{v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a receptive-field size estimate as a one-row CSV with column
/// `size_estimate_px`.
pub fn write_rf_size_csv(path: &FsPath, size_estimate: f64) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "size_estimate_px")?;
    writeln!(out, "{size_estimate}")?;
    out.flush()?;
    Ok(())
}
