//! The `check` command: seeded gradient sweeps, fast invariant audits, and
//! post-hoc audits of existing run directories, reported as machine-readable
//! JSON.
//!
//! Every gradient entry draws a fresh seeded instance per repetition;
//! operators with kinks (rectifier, max pooling, canonical Fourier roll)
//! screen candidates with the stack's smoothness margin so finite
//! differences never straddle a nondifferentiable point.

use std::path::{Path as FsPath, PathBuf};

use serde::Serialize;

use repgeo::geodesic::{
    equispacing_cv, init_linear, minimize_rep_energy, pixel_energy_grad_check,
    rep_energy_grad_check, GeodesicConfig, Path,
};
use repgeo::images::{pink_noise, replicate_channels, uniform_noise};
use repgeo::layers::{
    gradient_check, hanning_kernel, pullback_check, smoothness_margin, Conv2d, L2Pool, Layer,
    MaxPool, Padding,
};
use repgeo::stack::{preset, Representation, StackRep};
use repgeo::tensor::dist_sq;
use repgeo::transforms::{apply, TransformSpec};
use repgeo::{Result, Tensor};

use crate::exit::{invalid, CliResult};
use crate::manifest::RunManifest;

/// Smoothness margin an instance must clear to be admitted to a
/// finite-difference comparison.
const MARGIN: f64 = 3e-4;
/// Relative-error bound every gradient comparison is held to.
const GRAD_TOL: f64 = 1e-4;
/// Finite-difference step for multi-layer stacks (the single-layer checks
/// use the library default).
const STACK_STEP: f64 = 1e-6;
/// Equispacing bound after representation-energy minimization.
const CV_BOUND: f64 = 0.05;

#[derive(Debug, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub pass: bool,
    /// Number of seeded instances (or rows/files) the entry covered.
    pub instances: usize,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub pass: bool,
    pub checks: Vec<CheckEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Gradients,
    Invariants,
    Runs,
    All,
}

pub fn run_checks(scope: Scope, instances: usize, runs: &[PathBuf]) -> CliResult<CheckReport> {
    let mut checks = Vec::new();
    if matches!(scope, Scope::Gradients | Scope::All) {
        gradient_checks(&mut checks, instances)?;
    }
    if matches!(scope, Scope::Invariants | Scope::All) {
        invariant_checks(&mut checks, instances)?;
    }
    if matches!(scope, Scope::Runs | Scope::All) {
        for dir in runs {
            run_dir_checks(&mut checks, dir)?;
        }
        if runs.is_empty() && scope == Scope::Runs {
            return Err(invalid("--scope runs needs at least one --runs directory"));
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(CheckReport { pass, checks })
}

// --- gradient sweep -------------------------------------------------------

fn gradient_checks(out: &mut Vec<CheckEntry>, instances: usize) -> CliResult<()> {
    // Single layers. Weights and signed inputs are seeded per instance; the
    // closure returns the layer and an admissible input for it.
    layer_entry(out, "vjp.conv2d_same", instances, |i| {
        let w = signed_noise(&[3, 2, 3, 3], 100 + i);
        let layer = Layer::Conv2d(Conv2d::new(w, 1, Padding::Same)?);
        Ok((layer, signed_noise(&[2, 5, 5], 200 + i)))
    })?;
    layer_entry(out, "vjp.conv2d_valid_stride2", instances, |i| {
        let w = signed_noise(&[2, 2, 3, 3], 300 + i);
        let layer = Layer::Conv2d(Conv2d::new(w, 2, Padding::Valid)?);
        Ok((layer, signed_noise(&[2, 7, 7], 400 + i)))
    })?;
    layer_entry(out, "vjp.halfwave", instances, |i| {
        let layer = Layer::Halfwave;
        Ok((layer.clone(), admissible(&layer, &[2, 6, 6], 500 + i)?))
    })?;
    layer_entry(out, "vjp.maxpool_2x2", instances, |i| {
        let layer = Layer::Maxpool(MaxPool::new(2, 2)?);
        Ok((layer.clone(), admissible(&layer, &[2, 6, 6], 600 + i)?))
    })?;
    layer_entry(out, "vjp.l2pool_hanning4", instances, |i| {
        let layer = Layer::L2pool(L2Pool::new(hanning_kernel(4), 2, 1e-10)?);
        Ok((layer, signed_noise(&[2, 6, 6], 700 + i)))
    })?;
    layer_entry(out, "vjp.fourier_magnitude", instances, |i| {
        let layer = Layer::FourierMagnitude(Default::default());
        Ok((layer.clone(), admissible(&layer, &[2, 6, 6], 800 + i)?))
    })?;
    layer_entry(out, "vjp.affine_preprocess", instances, |i| {
        let layer = Layer::AffinePreprocess(repgeo::layers::AffinePreprocess::bgr_imagenet());
        Ok((layer, signed_noise(&[3, 5, 5], 900 + i)))
    })?;

    // Whole-stack pullbacks for every shipped preset.
    let presets: &[(&str, &[usize])] = &[
        ("pixel", &[1, 6, 6]),
        ("fourier_mag", &[2, 6, 6]),
        ("smallnet_max", &[3, 8, 8]),
        ("smallnet_l2", &[3, 8, 8]),
        ("smallnet_l2_pool1_36", &[3, 8, 8]),
        ("smallnet_l2_pool2_18", &[3, 12, 12]),
    ];
    for (p, (name, shape)) in presets.iter().enumerate() {
        let rep = preset(name)?.build(shape)?;
        sweep_entry(out, &format!("pullback.{name}"), instances, |i| {
            let x = admissible_for(&rep, shape, 1000 + 50 * p as u64 + i)?;
            pullback_check(&rep, &x, STACK_STEP, GRAD_TOL)
        })?;
    }

    // Path-energy gradients through a representation mix, plus the pixel
    // energy's own gradient.
    let energy_reps: &[(&str, &[usize])] = &[
        ("pixel", &[1, 5, 5]),
        ("fourier_mag", &[1, 6, 6]),
        ("smallnet_l2", &[3, 8, 8]),
    ];
    for (p, (name, shape)) in energy_reps.iter().enumerate() {
        let rep = preset(name)?.build(shape)?;
        sweep_entry(out, &format!("energy.rep_grad.{name}"), instances, |i| {
            let path = admissible_path(&rep, shape, 2000 + 60 * p as u64 + i)?;
            rep_energy_grad_check(&path, &rep, STACK_STEP, GRAD_TOL)
        })?;
    }
    sweep_entry(out, "energy.pixel_grad", instances, |i| {
        let path = jagged_path(&[1, 5, 5], 3000 + i);
        pixel_energy_grad_check(&path, 1e-5, GRAD_TOL)
    })?;
    Ok(())
}

fn layer_entry(
    out: &mut Vec<CheckEntry>,
    name: &str,
    instances: usize,
    mut make: impl FnMut(u64) -> Result<(Layer, Tensor)>,
) -> CliResult<()> {
    sweep_entry(out, name, instances, |i| {
        let (layer, x) = make(i)?;
        gradient_check(&layer, &x, GRAD_TOL)
    })
}

fn sweep_entry(
    out: &mut Vec<CheckEntry>,
    name: &str,
    instances: usize,
    mut one: impl FnMut(u64) -> Result<repgeo::layers::GradCheckReport>,
) -> CliResult<()> {
    let mut worst = 0.0_f64;
    let mut pass = true;
    for i in 0..instances as u64 {
        let report = one(i)?;
        worst = worst.max(report.max_rel_err);
        pass &= report.pass;
    }
    out.push(CheckEntry {
        name: name.into(),
        pass,
        instances,
        detail: format!("max relative FD error {worst:.3e} (tolerance {GRAD_TOL:.0e})"),
    });
    Ok(())
}

/// Seeded values in (-1, 1).
fn signed_noise(shape: &[usize], stream: u64) -> Tensor {
    uniform_noise(shape, 0xC0FFEE, stream).map(|v| 2.0 * v - 1.0)
}

/// First seeded signed-noise input the layer accepts with a clear margin.
fn admissible(layer: &Layer, shape: &[usize], base: u64) -> Result<Tensor> {
    let steps = std::slice::from_ref(layer);
    for s in 0..200 {
        let x = signed_noise(shape, base * 1000 + s);
        if smoothness_margin(steps, &x)? > MARGIN {
            return Ok(x);
        }
    }
    Err(repgeo::Error::Config(format!(
        "no admissible instance for margin screening at {shape:?}"
    )))
}

/// Stack counterpart of [`admissible`]; noise stays in [0,1] like images do.
fn admissible_for(rep: &StackRep, shape: &[usize], base: u64) -> Result<Tensor> {
    for s in 0..200 {
        let x = uniform_noise(shape, base, s);
        if smoothness_margin(rep.steps(), &x)? > MARGIN {
            return Ok(x);
        }
    }
    Err(repgeo::Error::Config(format!(
        "no admissible stack input at {shape:?}"
    )))
}

/// Independent noise frames — gradients are O(1), unlike a linear path whose
/// discrete Laplacian vanishes.
fn jagged_path(shape: &[usize], base: u64) -> Path {
    let frames = (0..4).map(|k| uniform_noise(shape, base, k)).collect();
    Path::from_frames(frames).expect("fixed-shape frames")
}

/// Jagged path all of whose frames clear the margin.
fn admissible_path(rep: &StackRep, shape: &[usize], base: u64) -> Result<Path> {
    for s in 0..200u64 {
        let frames: Vec<Tensor> = (0..4)
            .map(|k| uniform_noise(shape, base, s * 16 + k))
            .collect();
        let mut ok = true;
        for f in &frames {
            ok &= smoothness_margin(rep.steps(), f)? > MARGIN;
        }
        if ok {
            return Ok(Path::from_frames(frames)?);
        }
    }
    Err(repgeo::Error::Config(format!(
        "no admissible path at {shape:?}"
    )))
}

// --- invariant audits -----------------------------------------------------

fn invariant_checks(out: &mut Vec<CheckEntry>, instances: usize) -> CliResult<()> {
    // Fourier magnitude ignores integer circular shifts, bitwise.
    let rep = preset("fourier_mag")?.build(&[1, 8, 8])?;
    bool_entry(out, "invariant.fourier_shift", instances, |i| {
        let x = uniform_noise(&[1, 8, 8], 0xF0, i);
        let shifted = apply(
            &TransformSpec::translate(1.0 + (i % 7) as f64, (i % 5) as f64),
            &x,
            1.0,
        )?;
        Ok(rep.evaluate(&x)?.data() == rep.evaluate(&shifted)?.data())
    })?;

    // fraction-0 transforms return their input bitwise.
    bool_entry(out, "invariant.transform_identity_at_zero", instances, |i| {
        let x = uniform_noise(&[1, 7, 7], 0xF1, i);
        let specs = [
            TransformSpec::translate(3.7, -1.2),
            TransformSpec::rotate(11.0),
            TransformSpec::dilate(1.3),
        ];
        let spec = &specs[(i % 3) as usize];
        Ok(apply(spec, &x, 0.0)?.data() == x.data())
    })?;

    // Cauchy–Schwartz between logged-style length and energy on noise paths.
    bool_entry(out, "invariant.cauchy_schwartz", instances, |i| {
        let path = jagged_path(&[1, 5, 5], 4000 + i);
        let lengths: Vec<f64> = path
            .frames()
            .windows(2)
            .map(|w| dist_sq(w[0].data(), w[1].data()).sqrt())
            .collect();
        let l: f64 = lengths.iter().sum();
        let e: f64 = lengths.iter().map(|d| d * d).sum();
        let n = path.n_steps() as f64;
        let cv = equispacing_cv(&lengths);
        Ok(cauchy_schwartz_holds(l, e, n, cv))
    })?;

    // Equispacing after representation-energy minimization, every preset.
    let mut worst_cv = 0.0_f64;
    let mut cv_pass = true;
    for name in repgeo::stack::PRESET_NAMES {
        let (shape, gray): (&[usize], bool) = match name {
            "pixel" | "fourier_mag" => (&[1, 12, 12], true),
            _ => (&[3, 12, 12], false),
        };
        let rep = preset(name)?.build(shape)?;
        let (a, b) = endpoint_pair(shape, gray, 0xCACE);
        let init = init_linear(&a, &b, 5)?;
        let cfg = GeodesicConfig {
            n: 5,
            inner_iters: 2_000,
            inner_tol: 1e-6,
            inner_window: 400,
            ..GeodesicConfig::default()
        };
        let (path, _) = minimize_rep_energy(&init, &rep, &cfg)?;
        let responses: Vec<Tensor> = path
            .frames()
            .iter()
            .map(|f| rep.evaluate(f))
            .collect::<Result<_>>()?;
        let lengths: Vec<f64> = responses
            .windows(2)
            .map(|w| dist_sq(w[0].data(), w[1].data()).sqrt())
            .collect();
        let cv = equispacing_cv(&lengths);
        worst_cv = worst_cv.max(cv);
        cv_pass &= cv <= CV_BOUND;
    }
    out.push(CheckEntry {
        name: "invariant.equispacing_after_minimization".into(),
        pass: cv_pass,
        instances: repgeo::stack::PRESET_NAMES.len(),
        detail: format!("worst CV {worst_cv:.4} (bound {CV_BOUND})"),
    });
    Ok(())
}

/// Two distinct natural-statistics endpoints at the given shape.
fn endpoint_pair(shape: &[usize], gray: bool, seed: u64) -> (Tensor, Tensor) {
    let (h, w) = (shape[1], shape[2]);
    let a = pink_noise(h, w, seed, 0);
    let b = pink_noise(h, w, seed, 1);
    if gray {
        (a, b)
    } else {
        (
            replicate_channels(&a, 3).expect("planar input"),
            replicate_channels(&b, 3).expect("planar input"),
        )
    }
}

fn bool_entry(
    out: &mut Vec<CheckEntry>,
    name: &str,
    instances: usize,
    mut one: impl FnMut(u64) -> Result<bool>,
) -> CliResult<()> {
    let mut pass = true;
    for i in 0..instances as u64 {
        pass &= one(i)?;
    }
    out.push(CheckEntry {
        name: name.into(),
        pass,
        instances,
        detail: if pass { "all instances held" } else { "violated" }.into(),
    });
    Ok(())
}

// --- run-directory audits -------------------------------------------------

/// `L² ≤ N·E` on logged values. The second disjunct is the exact-equality
/// certificate: the true gap is `N²·mean²·CV²` relative ≈ `CV²`, so a CV²
/// under 16·ε means the inequality is an equality to beneath representable
/// precision and the float comparison is decided by rounding alone.
fn cauchy_schwartz_holds(l: f64, e: f64, n: f64, cv: f64) -> bool {
    l * l <= n * e || cv * cv <= 16.0 * f64::EPSILON
}

struct LoggedRow {
    rep_energy: f64,
    pixel_energy: f64,
    rep_length: f64,
    equispacing_cv: f64,
}

fn read_diagnostics(path: &FsPath) -> CliResult<Vec<LoggedRow>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(invalid(format!(
                "{}:{}: expected 5 columns, got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| invalid(format!("{}:{}: {e}", path.display(), lineno + 1)))
        };
        rows.push(LoggedRow {
            rep_energy: parse(fields[1])?,
            pixel_energy: parse(fields[2])?,
            rep_length: parse(fields[3])?,
            equispacing_cv: parse(fields[4])?,
        });
    }
    Ok(rows)
}

fn run_dir_checks(out: &mut Vec<CheckEntry>, dir: &FsPath) -> CliResult<()> {
    let label = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("run")
        .to_string();
    let manifest = RunManifest::read(dir)?;
    let complete = manifest.verify(dir).is_ok();
    out.push(CheckEntry {
        name: format!("run.{label}.manifest"),
        pass: complete,
        instances: manifest.artifacts.len(),
        detail: if complete {
            "all listed artifacts present".into()
        } else {
            "missing artifacts".into()
        },
    });

    let diagnostics = dir.join("diagnostics.csv");
    if !diagnostics.is_file() {
        return Ok(());
    }
    let rows = read_diagnostics(&diagnostics)?;
    if rows.is_empty() {
        return Err(invalid(format!("{} has no data rows", diagnostics.display())));
    }
    let n = manifest.config["geodesic"]["n"]
        .as_u64()
        .ok_or_else(|| invalid("manifest config lacks geodesic.n"))? as f64;
    let rep_tol = manifest.config["geodesic"]["rep_tol"].as_f64().unwrap_or(0.01);

    let cs = rows.iter().all(|r| {
        cauchy_schwartz_holds(r.rep_length, r.rep_energy, n, r.equispacing_cv)
    });
    out.push(CheckEntry {
        name: format!("run.{label}.cauchy_schwartz"),
        pass: cs,
        instances: rows.len(),
        detail: "L² ≤ N·E on every logged row".into(),
    });

    // Monotone conditioning: accepted steps must not raise the pixel energy
    // beyond the documented slack, and the terminal representation energy
    // must stay within 1% of its post-first-minimization value.
    let slack = rep_tol * rows[0].pixel_energy;
    let pixels_ok = rows
        .windows(2)
        .all(|w| w[1].pixel_energy <= w[0].pixel_energy + slack);
    let rep_scale = rows[0].rep_energy.abs().max(1e-12);
    let rep_ok = rows.last().unwrap().rep_energy <= rows[0].rep_energy + 0.01 * rep_scale;
    out.push(CheckEntry {
        name: format!("run.{label}.monotone_conditioning"),
        pass: pixels_ok && rep_ok,
        instances: rows.len(),
        detail: format!(
            "pixel energy {} → {}, rep energy {} → {}",
            rows[0].pixel_energy,
            rows.last().unwrap().pixel_energy,
            rows[0].rep_energy,
            rows.last().unwrap().rep_energy
        ),
    });

    // Terminal equispacing, audited only while the representation path keeps
    // its scale. When the pair is (near-)invariant the energy collapses
    // toward zero and segment lengths become optimizer noise, not geometry,
    // so the coefficient of variation stops being meaningful.
    let terminal = rows.last().unwrap();
    if terminal.rep_energy > 0.1 * rep_scale {
        out.push(CheckEntry {
            name: format!("run.{label}.equispacing"),
            pass: terminal.equispacing_cv <= CV_BOUND,
            instances: 1,
            detail: format!(
                "terminal CV {:.4} (bound {CV_BOUND})",
                terminal.equispacing_cv
            ),
        });
    }
    Ok(())
}
