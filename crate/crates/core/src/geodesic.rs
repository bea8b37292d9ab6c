//! Path objectives and the conditional geodesic computation.
//!
//! A path γ = {x_0 … x_N} is scored by two energies: the representation
//! energy `E[f(γ)] = Σ‖f(x_n) − f(x_{n−1})‖²` and the pixel energy
//! `E[γ] = Σ‖x_n − x_{n−1}‖²`. [`synth_geodesic`] first drives `E[f(γ)]` to a
//! minimum from the linear-interpolation start (Adam on the interior frames,
//! pixels clamped to `[0,1]` after every update), then alternates small pixel
//! steps with re-minimization: the pixel gradient is stepped only along its
//! component orthogonal to the representation gradient, and after each step
//! the representation energy must return to within `rep_tol` of the best
//! value seen, otherwise the step is reverted and the step size halved. The
//! result is a path of (near-)minimal representation length that is, among
//! such paths, as short as possible in pixel space.

use serde::{Deserialize, Serialize};

use crate::layers::GradCheckReport;
use crate::stack::Representation;
use crate::tensor::dist_sq;
use crate::{par, Error, Result, Tensor};

/// An ordered sequence of `N+1` same-shaped frames. Endpoints are frozen
/// throughout optimization: every operation here returns paths whose first and
/// last frames are bitwise equal to the inputs they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    frames: Vec<Tensor>,
}

impl Path {
    pub fn from_frames(frames: Vec<Tensor>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::Config(format!(
                "a path needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        for f in &frames[1..] {
            f.check_same_shape(&frames[0])?;
        }
        Ok(Self { frames })
    }

    /// Number of segments `N` (one less than the frame count).
    pub fn n_steps(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn frames(&self) -> &[Tensor] {
        &self.frames
    }

    pub fn frame(&self, n: usize) -> &Tensor {
        &self.frames[n]
    }

    pub fn into_frames(self) -> Vec<Tensor> {
        self.frames
    }

    /// Root-mean-square difference to another path of the same layout,
    /// averaged over frames.
    pub fn rmse_to(&self, other: &Path) -> Result<f64> {
        if self.frames.len() != other.frames.len() {
            return Err(Error::Shape(format!(
                "paths have {} and {} frames",
                self.frames.len(),
                other.frames.len()
            )));
        }
        let per_frame: f64 = self
            .frames
            .iter()
            .zip(&other.frames)
            .map(|(a, b)| (dist_sq(a.data(), b.data()) / a.len() as f64).sqrt())
            .sum();
        Ok(per_frame / self.frames.len() as f64)
    }
}

/// Adam parameters; defaults follow the standard recommendation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            step_size: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Step size λ for the outer (pixel) descent.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionStep {
    /// Move the mean absolute pixel value of the projected gradient by this
    /// much: the actual step is `s / mean|d̂_p|`.
    Normalized(f64),
    /// Plain gradient-descent step size.
    Absolute(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeodesicConfig {
    /// Number of path segments; the path has `n + 1` frames.
    pub n: usize,
    pub adam: AdamParams,
    /// Adam budget for the first minimization of `E[f(γ)]`.
    pub inner_iters: usize,
    /// Adam budget for each re-minimization after a pixel step.
    pub reproject_iters: usize,
    /// Outer pixel-descent step size.
    pub lambda: ProjectionStep,
    /// Outer convergence: relative decrease of `E[γ]` below this over
    /// `outer_window` consecutive accepted iterations stops the loop.
    pub outer_tol: f64,
    pub outer_window: usize,
    pub outer_max: usize,
    /// Relative slack on `E[f(γ)]`: a pixel step is accepted only if
    /// re-minimization restores the representation energy to within this
    /// factor of the best value seen.
    pub rep_tol: f64,
    /// Optional early stop for the inner Adam loops: relative energy
    /// improvement below this over `inner_window` iterations ends the loop
    /// before the budget. `0` (the default) disables early stopping.
    pub inner_tol: f64,
    pub inner_window: usize,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self {
            n: 10,
            adam: AdamParams::default(),
            inner_iters: 10_000,
            reproject_iters: 1_000,
            lambda: ProjectionStep::Normalized(0.1),
            outer_tol: 1e-4,
            outer_window: 5,
            outer_max: 200,
            rep_tol: 0.01,
            inner_tol: 0.0,
            inner_window: 500,
        }
    }
}

impl GeodesicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("need n >= 2 segments, got {}", self.n)));
        }
        let a = &self.adam;
        if !(a.step_size > 0.0 && a.eps > 0.0) || !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
        {
            return Err(Error::Config("invalid Adam parameters".into()));
        }
        let lam = match self.lambda {
            ProjectionStep::Normalized(v) | ProjectionStep::Absolute(v) => v,
        };
        if !(lam > 0.0) {
            return Err(Error::Config("projection step must be positive".into()));
        }
        if !(self.outer_tol > 0.0) || !(self.rep_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.outer_window == 0 || self.inner_window == 0 {
            return Err(Error::Config("convergence windows must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    /// Outer loop met its tolerance (or the projected gradient vanished).
    Converged,
    /// Outer iteration budget exhausted first.
    MaxOuterReached,
    /// Re-minimization failed to restore the representation energy three
    /// times in a row; the returned path is the last accepted one.
    Diverged,
}

/// One diagnostics row, logged after the first minimization and after every
/// accepted outer iteration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub iter: usize,
    pub rep_energy: f64,
    pub pixel_energy: f64,
    pub rep_length: f64,
    pub equispacing_cv: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rows: Vec<DiagnosticsRow>,
    pub status: ConvergenceStatus,
    /// Outer iterations whose pixel step was reverted (step size halved).
    pub rejected_steps: usize,
}

impl Diagnostics {
    pub fn terminal(&self) -> &DiagnosticsRow {
        self.rows.last().expect("diagnostics always has rows")
    }
}

/// Sum of squared consecutive representation distances `E[f(γ)]`.
pub fn rep_energy<R: Representation>(path: &Path, rep: &R) -> Result<f64> {
    let responses = responses_of(path, rep)?;
    Ok(energy_of(&responses))
}

/// Sum of consecutive representation distances `L[f(γ)]`.
pub fn rep_length<R: Representation>(path: &Path, rep: &R) -> Result<f64> {
    let responses = responses_of(path, rep)?;
    Ok(segment_lengths(&responses).iter().sum())
}

/// Sum of squared consecutive pixel distances `E[γ]`.
pub fn pixel_energy(path: &Path) -> f64 {
    path.frames
        .windows(2)
        .map(|w| dist_sq(w[0].data(), w[1].data()))
        .sum()
}

/// Coefficient of variation (std/mean) of consecutive representation-space
/// step lengths; 0 for perfectly equispaced responses. Returns 0 for the
/// degenerate all-zero-steps case.
pub fn equispacing_cv(lengths: &[f64]) -> f64 {
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return 0.0;
    }
    let var = lengths.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Pixel-space linear interpolation `x_n = ((N−n)/N)·x₀ + (n/N)·x_N`,
/// clamped to `[0,1]`. Endpoint frames are the inputs themselves, bitwise.
pub fn init_linear(x0: &Tensor, xn: &Tensor, n: usize) -> Result<Path> {
    x0.check_same_shape(xn)?;
    if n < 2 {
        return Err(Error::Config(format!("need n >= 2 segments, got {n}")));
    }
    let mut frames = Vec::with_capacity(n + 1);
    frames.push(x0.clone());
    for k in 1..n {
        let b = k as f64 / n as f64;
        // Lerp in the p + b·(q−p) form: exact when endpoints coincide, so an
        // x₀ = x_N pair yields a bitwise-constant path.
        let data = x0
            .data()
            .iter()
            .zip(xn.data())
            .map(|(&p, &q)| (p + b * (q - p)).clamp(0.0, 1.0))
            .collect();
        frames.push(Tensor::new(x0.shape().to_vec(), data)?);
    }
    frames.push(xn.clone());
    Path::from_frames(frames)
}

/// Gradient of `E[f(γ)]` with respect to every frame; endpoint slots are zero
/// because endpoints are frozen.
///
/// For interior `n` the cotangent at the response is
/// `2(f(x_n) − f(x_{n−1})) − 2(f(x_{n+1}) − f(x_n))`, pulled back through the
/// representation at `x_n`.
pub fn grad_rep_energy<R: Representation>(path: &Path, rep: &R) -> Result<Vec<Tensor>> {
    let evals = forward_all(path, rep)?;
    let responses: Vec<&Tensor> = evals.iter().map(|e| rep.response(e)).collect();
    interior_rep_grads(path, rep, &evals, &responses)
}

/// Gradient of the pixel energy `E[γ]`: interior frames get the discrete
/// Laplacian `2(2x_n − x_{n−1} − x_{n+1})`, endpoints zero.
pub fn grad_pixel_energy(path: &Path) -> Vec<Tensor> {
    let n = path.n_steps();
    let mut grads = Vec::with_capacity(n + 1);
    grads.push(Tensor::zeros(path.frame(0).shape().to_vec()));
    for k in 1..n {
        let x = path.frame(k).data();
        let prev = path.frame(k - 1).data();
        let next = path.frame(k + 1).data();
        let data = (0..x.len())
            .map(|i| 2.0 * (2.0 * x[i] - prev[i] - next[i]))
            .collect();
        grads.push(Tensor::new(path.frame(k).shape().to_vec(), data).unwrap());
    }
    grads.push(Tensor::zeros(path.frame(0).shape().to_vec()));
    grads
}

/// Finite-difference check of [`grad_rep_energy`] over every interior-frame
/// coordinate, with the same normalized infinity-norm error metric as the
/// layer checks.
///
/// The usual smoothness caveat applies: frames whose forward pass sits near
/// a rectifier zero or pooling tie make the finite difference measure a
/// subgradient jump; callers screen instances with
/// [`crate::layers::smoothness_margin`].
pub fn rep_energy_grad_check<R: Representation>(
    path: &Path,
    rep: &R,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = grad_rep_energy(path, rep)?;
    let numeric = energy_fd(path, |p| rep_energy(p, rep), step)?;
    Ok(grad_check_report(&analytic, &numeric, tolerance))
}

/// Finite-difference check of [`grad_pixel_energy`]; the objective is a
/// quadratic, so this holds essentially to roundoff everywhere.
pub fn pixel_energy_grad_check(path: &Path, step: f64, tolerance: f64) -> Result<GradCheckReport> {
    let analytic = grad_pixel_energy(path);
    let numeric = energy_fd(path, |p| Ok(pixel_energy(p)), step)?;
    Ok(grad_check_report(&analytic, &numeric, tolerance))
}

/// Central differences of a path functional over interior-frame coordinates;
/// endpoint slots stay zero to match the frozen-endpoint convention.
fn energy_fd(
    path: &Path,
    phi: impl Fn(&Path) -> Result<f64>,
    step: f64,
) -> Result<Vec<Tensor>> {
    let n = path.n_steps();
    let mut numeric = vec![Tensor::zeros(path.frame(0).shape().to_vec()); n + 1];
    let mut frames = path.frames().to_vec();
    for k in 1..n {
        for i in 0..frames[k].len() {
            let orig = frames[k].data()[i];
            frames[k].data_mut()[i] = orig + step;
            let plus = phi(&Path::from_frames(frames.clone())?)?;
            frames[k].data_mut()[i] = orig - step;
            let minus = phi(&Path::from_frames(frames.clone())?)?;
            frames[k].data_mut()[i] = orig;
            numeric[k].data_mut()[i] = (plus - minus) / (2.0 * step);
        }
    }
    Ok(numeric)
}

fn grad_check_report(analytic: &[Tensor], numeric: &[Tensor], tolerance: f64) -> GradCheckReport {
    let all = |ts: &[Tensor]| ts.iter().flat_map(|t| t.data().iter().copied()).collect::<Vec<_>>();
    let (a, n) = (all(analytic), all(numeric));
    let scale = a
        .iter()
        .chain(&n)
        .fold(1e-8_f64, |m, &v| m.max(v.abs()));
    let max_rel_err = a
        .iter()
        .zip(&n)
        .fold(0.0_f64, |m, (&av, &nv)| m.max((av - nv).abs() / scale));
    GradCheckReport {
        max_rel_err,
        tolerance,
        pass: max_rel_err <= tolerance,
        coords: a.len(),
    }
}

/// Remove from `dp` its component along `dr` (inner products taken jointly
/// over all frames): `d̂_p = d_p − (⟨d_r,d_p⟩/‖d_r‖²)·d_r`. If `‖d_r‖` is
/// degenerate (RMS below `eps`), `dp` is returned unchanged.
pub fn project_out(dp: &[Tensor], dr: &[Tensor], eps: f64) -> Vec<Tensor> {
    let mut dr_sq = 0.0;
    let mut cross = 0.0;
    let mut count = 0usize;
    for (p, r) in dp.iter().zip(dr) {
        dr_sq += crate::tensor::dot(r.data(), r.data());
        cross += crate::tensor::dot(r.data(), p.data());
        count += r.len();
    }
    let rms = (dr_sq / count.max(1) as f64).sqrt();
    if rms < eps {
        return dp.to_vec();
    }
    let coef = cross / dr_sq;
    dp.iter()
        .zip(dr)
        .map(|(p, r)| {
            let data = p
                .data()
                .iter()
                .zip(r.data())
                .map(|(&pv, &rv)| pv - coef * rv)
                .collect();
            Tensor::new(p.shape().to_vec(), data).unwrap()
        })
        .collect()
}

/// RMS threshold under which the representation gradient counts as vanished
/// and projection is skipped (e.g. a representation fully invariant along the
/// current path).
pub const PROJECTION_EPS: f64 = 1e-12;

/// Minimize `E[f(γ)]` over the interior frames with Adam, clamping pixels to
/// `[0,1]` after every update. Returns the best path seen (so the final
/// energy never exceeds the initial one) together with its energy.
pub fn minimize_rep_energy<R: Representation>(
    path: &Path,
    rep: &R,
    cfg: &GeodesicConfig,
) -> Result<(Path, f64)> {
    cfg.validate()?;
    minimize_inner(path.clone(), rep, cfg, cfg.inner_iters)
}

fn minimize_inner<R: Representation>(
    mut path: Path,
    rep: &R,
    cfg: &GeodesicConfig,
    budget: usize,
) -> Result<(Path, f64)> {
    let n = path.n_steps();
    let n_interior = n - 1;
    if n_interior == 0 {
        let e = rep_energy(&path, rep)?;
        return Ok((path, e));
    }
    // Endpoint responses never change; evaluate them once.
    let end0 = rep.evaluate(path.frame(0))?;
    let end_n = rep.evaluate(path.frame(n))?;

    let frame_len = path.frame(0).len();
    let mut m = vec![vec![0.0; frame_len]; n_interior];
    let mut v = vec![vec![0.0; frame_len]; n_interior];

    let mut best_energy = f64::INFINITY;
    let mut best_frames: Option<Vec<Tensor>> = None;
    let mut window_start_energy = f64::INFINITY;

    for t in 1..=budget {
        let evals = par::map_indexed(n_interior, |i| rep.forward(path.frame(i + 1)));
        let evals: Vec<R::Eval> = evals.into_iter().collect::<Result<_>>()?;
        let mut responses: Vec<&Tensor> = Vec::with_capacity(n + 1);
        responses.push(&end0);
        for e in &evals {
            responses.push(rep.response(e));
        }
        responses.push(&end_n);

        let energy = energy_of_refs(&responses);
        if !energy.is_finite() {
            return Err(Error::Diverged(format!(
                "rep energy became non-finite at inner iteration {t}"
            )));
        }
        if energy < best_energy {
            best_energy = energy;
            best_frames = Some(path.frames[1..n].to_vec());
        }

        // Early stop on stalled relative improvement, if enabled.
        if cfg.inner_tol > 0.0 && t % cfg.inner_window == 0 {
            if window_start_energy.is_finite() {
                let drop = (window_start_energy - best_energy).max(0.0);
                if drop / window_start_energy.max(f64::MIN_POSITIVE) < cfg.inner_tol {
                    break;
                }
            }
            window_start_energy = best_energy;
        }

        let cots: Vec<Tensor> = (1..n)
            .map(|k| {
                // 2(f_k − f_{k−1}) − 2(f_{k+1} − f_k) = 2(2f_k − f_{k−1} − f_{k+1})
                let fk = responses[k].data();
                let fp = responses[k - 1].data();
                let fnx = responses[k + 1].data();
                let data = (0..fk.len())
                    .map(|i| 2.0 * (2.0 * fk[i] - fp[i] - fnx[i]))
                    .collect();
                Tensor::new(responses[k].shape().to_vec(), data).unwrap()
            })
            .collect();
        let grads = par::map_indexed(n_interior, |i| rep.pullback(&evals[i], &cots[i]));
        let grads: Vec<Tensor> = grads.into_iter().collect::<Result<_>>()?;

        // Adam step with bias correction, then clamp.
        let b1t = 1.0 - cfg.adam.beta1.powi(t as i32);
        let b2t = 1.0 - cfg.adam.beta2.powi(t as i32);
        for i in 0..n_interior {
            let g = grads[i].data();
            let mi = &mut m[i];
            let vi = &mut v[i];
            let x = path.frames[i + 1].data_mut();
            for j in 0..frame_len {
                mi[j] = cfg.adam.beta1 * mi[j] + (1.0 - cfg.adam.beta1) * g[j];
                vi[j] = cfg.adam.beta2 * vi[j] + (1.0 - cfg.adam.beta2) * g[j] * g[j];
                let mhat = mi[j] / b1t;
                let vhat = vi[j] / b2t;
                x[j] = (x[j] - cfg.adam.step_size * mhat / (vhat.sqrt() + cfg.adam.eps))
                    .clamp(0.0, 1.0);
            }
        }
    }

    // The last Adam update was never scored; keep the best *scored* path.
    if let Some(best) = best_frames {
        for (i, f) in best.into_iter().enumerate() {
            path.frames[i + 1] = f;
        }
    }
    let final_energy = if best_energy.is_finite() {
        best_energy
    } else {
        rep_energy(&path, rep)?
    };
    Ok((path, final_energy))
}

/// Full conditional geodesic computation: linear init, representation-energy
/// minimization, then projected pixel-energy descent with re-minimization
/// after every step.
pub fn synth_geodesic<R: Representation>(
    x0: &Tensor,
    xn: &Tensor,
    rep: &R,
    cfg: &GeodesicConfig,
) -> Result<(Path, Diagnostics)> {
    cfg.validate()?;
    for (name, t) in [("x0", x0), ("xN", xn)] {
        if !t.all_finite() || t.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Config(format!("{name} must lie in [0,1] and be finite")));
        }
    }

    let init = init_linear(x0, xn, cfg.n)?;
    let init_pixel_scale = pixel_energy(&init).max(1e-12);
    let init_rep_scale = rep_energy(&init, rep)?;

    let (mut path, first_min_energy) = minimize_inner(init, rep, cfg, cfg.inner_iters)?;
    let mut rep_target = first_min_energy;
    // Absolute slack so a bit-exact zero target (fully invariant
    // representations) still accepts bit-identical re-minimizations.
    let accept_slack = 1e-12 * init_rep_scale.max(1.0);

    let mut diagnostics = Diagnostics {
        rows: vec![diag_row(0, &path, rep, first_min_energy)?],
        status: ConvergenceStatus::MaxOuterReached,
        rejected_steps: 0,
    };

    let mut lambda = cfg.lambda;
    let mut pixel_e = pixel_energy(&path);
    let mut window: Vec<f64> = vec![pixel_e];
    let mut consecutive_rep_failures = 0usize;
    let mut consecutive_pixel_stalls = 0usize;

    for outer in 1..=cfg.outer_max {
        let evals = forward_all(&path, rep)?;
        let responses: Vec<&Tensor> = evals.iter().map(|e| rep.response(e)).collect();
        let dr = interior_rep_grads(&path, rep, &evals, &responses)?;
        let dp = grad_pixel_energy(&path);
        let dhat = project_out(&dp, &dr, PROJECTION_EPS);

        let mean_abs = mean_abs_interior(&dhat);
        if mean_abs < PROJECTION_EPS {
            diagnostics.status = ConvergenceStatus::Converged;
            break;
        }
        let step = match lambda {
            ProjectionStep::Normalized(s) => s / mean_abs,
            ProjectionStep::Absolute(s) => s,
        };

        let mut candidate = path.clone();
        for k in 1..cfg.n {
            let g = dhat[k].data();
            let x = candidate.frames[k].data_mut();
            for j in 0..x.len() {
                x[j] = (x[j] - step * g[j]).clamp(0.0, 1.0);
            }
        }

        let (candidate, cand_rep_e) = minimize_inner(candidate, rep, cfg, cfg.reproject_iters)?;
        let cand_pixel_e = pixel_energy(&candidate);

        let rep_ok = cand_rep_e <= rep_target * (1.0 + cfg.rep_tol) + accept_slack;
        let pixel_ok = cand_pixel_e < pixel_e;
        if rep_ok && pixel_ok {
            path = candidate;
            pixel_e = cand_pixel_e;
            rep_target = rep_target.min(cand_rep_e);
            consecutive_rep_failures = 0;
            consecutive_pixel_stalls = 0;
            diagnostics
                .rows
                .push(diag_row(outer, &path, rep, cand_rep_e)?);

            window.push(pixel_e);
            if window.len() > cfg.outer_window {
                let oldest = window[window.len() - 1 - cfg.outer_window];
                let rel_drop = (oldest - pixel_e) / init_pixel_scale;
                if rel_drop < cfg.outer_tol {
                    diagnostics.status = ConvergenceStatus::Converged;
                    break;
                }
            }
        } else {
            diagnostics.rejected_steps += 1;
            halve(&mut lambda);
            if rep_ok {
                // Pixel energy stalled: the path cannot get shorter without
                // leaving the geodesic set. Repeated stalls mean convergence.
                consecutive_rep_failures = 0;
                consecutive_pixel_stalls += 1;
                if consecutive_pixel_stalls >= 3 {
                    diagnostics.status = ConvergenceStatus::Converged;
                    break;
                }
            } else {
                consecutive_pixel_stalls = 0;
                consecutive_rep_failures += 1;
                if consecutive_rep_failures >= 3 {
                    // Give up on the pixel descent but keep the last accepted
                    // path and its log; callers decide how loudly to fail.
                    diagnostics.status = ConvergenceStatus::Diverged;
                    break;
                }
            }
        }
    }

    Ok((path, diagnostics))
}

fn halve(lambda: &mut ProjectionStep) {
    *lambda = match *lambda {
        ProjectionStep::Normalized(s) => ProjectionStep::Normalized(s / 2.0),
        ProjectionStep::Absolute(s) => ProjectionStep::Absolute(s / 2.0),
    };
}

fn diag_row<R: Representation>(
    iter: usize,
    path: &Path,
    rep: &R,
    known_rep_energy: f64,
) -> Result<DiagnosticsRow> {
    let responses = responses_of(path, rep)?;
    let lengths = segment_lengths(&responses);
    let row = DiagnosticsRow {
        iter,
        rep_energy: known_rep_energy,
        pixel_energy: pixel_energy(path),
        rep_length: lengths.iter().sum(),
        equispacing_cv: equispacing_cv(&lengths),
    };
    if !(row.rep_energy.is_finite() && row.pixel_energy.is_finite() && row.rep_length.is_finite())
    {
        return Err(Error::Diverged(format!(
            "non-finite diagnostics at outer iteration {iter}"
        )));
    }
    Ok(row)
}

fn forward_all<R: Representation>(path: &Path, rep: &R) -> Result<Vec<R::Eval>> {
    par::map_slice(path.frames(), |f| rep.forward(f))
        .into_iter()
        .collect()
}

fn responses_of<R: Representation>(path: &Path, rep: &R) -> Result<Vec<Tensor>> {
    par::map_slice(path.frames(), |f| rep.evaluate(f))
        .into_iter()
        .collect()
}

fn interior_rep_grads<R: Representation>(
    path: &Path,
    rep: &R,
    evals: &[R::Eval],
    responses: &[&Tensor],
) -> Result<Vec<Tensor>> {
    let n = path.n_steps();
    let cots: Vec<Tensor> = (1..n)
        .map(|k| {
            let fk = responses[k].data();
            let fp = responses[k - 1].data();
            let fnx = responses[k + 1].data();
            let data = (0..fk.len())
                .map(|i| 2.0 * (2.0 * fk[i] - fp[i] - fnx[i]))
                .collect();
            Tensor::new(responses[k].shape().to_vec(), data).unwrap()
        })
        .collect();
    let interior = par::map_indexed(n - 1, |i| rep.pullback(&evals[i + 1], &cots[i]));
    let interior: Vec<Tensor> = interior.into_iter().collect::<Result<_>>()?;

    let zero = Tensor::zeros(path.frame(0).shape().to_vec());
    let mut grads = Vec::with_capacity(n + 1);
    grads.push(zero.clone());
    grads.extend(interior);
    grads.push(zero);
    Ok(grads)
}

fn segment_lengths(responses: &[Tensor]) -> Vec<f64> {
    responses
        .windows(2)
        .map(|w| dist_sq(w[0].data(), w[1].data()).sqrt())
        .collect()
}

fn energy_of(responses: &[Tensor]) -> f64 {
    responses
        .windows(2)
        .map(|w| dist_sq(w[0].data(), w[1].data()))
        .sum()
}

fn energy_of_refs(responses: &[&Tensor]) -> f64 {
    responses
        .windows(2)
        .map(|w| dist_sq(w[0].data(), w[1].data()))
        .sum()
}

fn mean_abs_interior(grads: &[Tensor]) -> f64 {
    let n = grads.len();
    if n <= 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for g in &grads[1..n - 1] {
        for v in g.data() {
            acc += v.abs();
        }
        count += g.len();
    }
    acc / count as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::preset;

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

    fn image(shape: Vec<usize>, seed: u64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, pseudo_random(n, seed)).unwrap()
    }

    fn pixel_rep() -> impl Representation<Eval = crate::stack::StackEval> {
        preset("pixel").unwrap().build(&[1, 4, 4]).unwrap()
    }

    #[test]
    fn init_linear_hits_endpoints_bitwise_and_midpoint_exactly() {
        let x0 = Tensor::zeros(vec![1, 2, 2]);
        let xn = Tensor::full(vec![1, 2, 2], 1.0);
        let path = init_linear(&x0, &xn, 2).unwrap();
        assert_eq!(path.frame(0), &x0);
        assert_eq!(path.frame(2), &xn);
        assert!(path.frame(1).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn init_linear_constant_for_equal_endpoints() {
        let x = image(vec![1, 3, 3], 1);
        let path = init_linear(&x, &x, 4).unwrap();
        for f in path.frames() {
            assert_eq!(f.data(), x.data());
        }
    }

    #[test]
    fn energies_of_constant_path_are_zero() {
        let x = image(vec![1, 4, 4], 2);
        let path = Path::from_frames(vec![x.clone(); 5]).unwrap();
        let rep = pixel_rep();
        assert_eq!(rep_energy(&path, &rep).unwrap(), 0.0);
        assert_eq!(rep_length(&path, &rep).unwrap(), 0.0);
        assert_eq!(pixel_energy(&path), 0.0);
    }

    #[test]
    fn linear_path_energies_match_closed_forms() {
        let x0 = image(vec![1, 4, 4], 3);
        let xn = image(vec![1, 4, 4], 4);
        let n = 5;
        let path = init_linear(&x0, &xn, n).unwrap();
        let rep = pixel_rep();
        let d2 = dist_sq(x0.data(), xn.data());
        let e = rep_energy(&path, &rep).unwrap();
        assert!((e - d2 / n as f64).abs() < 1e-12 * d2);
        let l = rep_length(&path, &rep).unwrap();
        assert!((l - d2.sqrt()).abs() < 1e-12 * d2.sqrt());
        assert!((pixel_energy(&path) - d2 / n as f64).abs() < 1e-12 * d2);
    }

    #[test]
    fn nonlinear_path_has_strictly_larger_pixel_energy() {
        let x0 = image(vec![1, 4, 4], 5);
        let xn = image(vec![1, 4, 4], 6);
        let linear = init_linear(&x0, &xn, 4).unwrap();
        let mut bent = linear.clone();
        bent.frames[2] = bent.frames[2].map(|v| (v + 0.05).clamp(0.0, 1.0));
        assert!(pixel_energy(&bent) > pixel_energy(&linear));
    }

    #[test]
    fn two_frame_path_pixel_energy_is_the_squared_distance() {
        let a = image(vec![1, 3, 3], 7);
        let b = image(vec![1, 3, 3], 8);
        let path = Path::from_frames(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(pixel_energy(&path), dist_sq(a.data(), b.data()));
    }

    #[test]
    fn cauchy_schwartz_binds_length_to_energy() {
        let x0 = image(vec![1, 4, 4], 9);
        let xn = image(vec![1, 4, 4], 10);
        let rep = pixel_rep();
        for n in [2, 5, 10] {
            let mut path = init_linear(&x0, &xn, n).unwrap();
            // Perturb to break equispacing.
            for k in 1..n {
                let t = path.frames[k].map(|v| (v * 1.02).clamp(0.0, 1.0));
                path.frames[k] = t;
            }
            let e = rep_energy(&path, &rep).unwrap();
            let l = rep_length(&path, &rep).unwrap();
            assert!(l * l <= n as f64 * e * (1.0 + 1e-12));
        }
    }

    #[test]
    fn equality_in_cauchy_schwartz_iff_equispaced() {
        let x0 = image(vec![1, 4, 4], 11);
        let xn = image(vec![1, 4, 4], 12);
        let rep = pixel_rep();
        let n = 6;
        let path = init_linear(&x0, &xn, n).unwrap();
        let e = rep_energy(&path, &rep).unwrap();
        let l = rep_length(&path, &rep).unwrap();
        assert!((l * l - n as f64 * e).abs() < 1e-10 * l * l);
        let responses = responses_of(&path, &rep).unwrap();
        assert!(equispacing_cv(&segment_lengths(&responses)) < 1e-7);
    }

    #[test]
    fn grad_rep_energy_is_zero_on_constant_paths() {
        let x = image(vec![1, 4, 4], 13);
        let path = Path::from_frames(vec![x.clone(); 4]).unwrap();
        let grads = grad_rep_energy(&path, &pixel_rep()).unwrap();
        for g in grads {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identity_rep_gradient_is_the_discrete_laplacian() {
        let frames: Vec<Tensor> = (0..4).map(|k| image(vec![1, 4, 4], 20 + k)).collect();
        let path = Path::from_frames(frames.clone()).unwrap();
        let grads = grad_rep_energy(&path, &pixel_rep()).unwrap();
        for k in 1..3 {
            for i in 0..16 {
                let want = 2.0
                    * (2.0 * frames[k].data()[i]
                        - frames[k - 1].data()[i]
                        - frames[k + 1].data()[i]);
                let got = grads[k].data()[i];
                assert!((got - want).abs() < 1e-12, "frame {k} coord {i}");
            }
        }
        assert!(grads[0].data().iter().all(|&v| v == 0.0));
        assert!(grads[3].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn project_out_of_itself_is_zero() {
        let g: Vec<Tensor> = vec![Tensor::zeros(vec![4]), image(vec![4], 30), Tensor::zeros(vec![4])];
        let out = project_out(&g, &g, PROJECTION_EPS);
        for t in &out[1..2] {
            for &v in t.data() {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn project_out_leaves_orthogonal_directions_unchanged() {
        let dr = vec![
            Tensor::zeros(vec![2]),
            Tensor::new(vec![2], vec![1.0, 0.0]).unwrap(),
            Tensor::zeros(vec![2]),
        ];
        let dp = vec![
            Tensor::zeros(vec![2]),
            Tensor::new(vec![2], vec![0.0, 2.0]).unwrap(),
            Tensor::zeros(vec![2]),
        ];
        let out = project_out(&dp, &dr, PROJECTION_EPS);
        assert_eq!(out[1].data(), dp[1].data());
    }

    #[test]
    fn projected_gradient_is_orthogonal_to_dr() {
        let dr: Vec<Tensor> = (0..3).map(|k| image(vec![8], 40 + k)).collect();
        let dp: Vec<Tensor> = (0..3).map(|k| image(vec![8], 50 + k)).collect();
        let out = project_out(&dp, &dr, PROJECTION_EPS);
        let mut dot = 0.0;
        let mut norm = 0.0;
        for (o, r) in out.iter().zip(&dr) {
            dot += o.dot(r).unwrap();
            norm += r.norm_sq();
        }
        assert!((dot / norm).abs() < 1e-10, "normalized dot {}", dot / norm);
    }

    #[test]
    fn degenerate_dr_returns_dp_unchanged() {
        let dr = vec![Tensor::zeros(vec![4]); 3];
        let dp: Vec<Tensor> = (0..3).map(|k| image(vec![4], 60 + k)).collect();
        let out = project_out(&dp, &dr, PROJECTION_EPS);
        for (o, p) in out.iter().zip(&dp) {
            assert_eq!(o.data(), p.data());
        }
    }

    #[test]
    fn minimize_on_identity_rep_recovers_linear_interpolation() {
        let x0 = image(vec![1, 4, 4], 70);
        let xn = image(vec![1, 4, 4], 71);
        let n = 5;
        // Start from a bent path: linear init plus a bump.
        let mut start = init_linear(&x0, &xn, n).unwrap();
        for k in 1..n {
            start.frames[k] = start.frames[k].map(|v| (v + 0.1).clamp(0.0, 1.0));
        }
        let cfg = GeodesicConfig {
            n,
            inner_iters: 4000,
            adam: AdamParams { step_size: 0.005, ..AdamParams::default() },
            ..GeodesicConfig::default()
        };
        let rep = pixel_rep();
        let (out, energy) = minimize_rep_energy(&start, &rep, &cfg).unwrap();
        let optimum = dist_sq(x0.data(), xn.data()) / n as f64;
        assert!(
            (energy - optimum).abs() <= 1e-6 * optimum,
            "energy {energy} vs optimum {optimum}"
        );
        assert_eq!(out.frame(0), &x0);
        assert_eq!(out.frame(n), &xn);
    }

    #[test]
    fn minimize_never_increases_energy() {
        let x0 = image(vec![1, 4, 4], 80);
        let xn = image(vec![1, 4, 4], 81);
        let path = init_linear(&x0, &xn, 4).unwrap();
        let rep = pixel_rep();
        let before = rep_energy(&path, &rep).unwrap();
        let cfg = GeodesicConfig { n: 4, inner_iters: 50, ..GeodesicConfig::default() };
        let (_, after) = minimize_rep_energy(&path, &rep, &cfg).unwrap();
        assert!(after <= before * (1.0 + 1e-15));
    }

    #[test]
    fn synth_on_identity_rep_returns_linear_interpolation() {
        let x0 = image(vec![1, 4, 4], 90);
        let xn = image(vec![1, 4, 4], 91);
        let cfg = GeodesicConfig { n: 5, inner_iters: 200, ..GeodesicConfig::default() };
        let rep = pixel_rep();
        let (path, diag) = synth_geodesic(&x0, &xn, &rep, &cfg).unwrap();
        let linear = init_linear(&x0, &xn, 5).unwrap();
        for (got, want) in path.frames().iter().zip(linear.frames()) {
            for (g, w) in got.data().iter().zip(want.data()) {
                assert!((g - w).abs() <= 1e-4, "got {g}, want {w}");
            }
        }
        assert_eq!(diag.status, ConvergenceStatus::Converged);
    }

    #[test]
    fn synth_with_equal_endpoints_is_constant_with_zero_energies() {
        let x = image(vec![1, 3, 3], 95);
        let cfg = GeodesicConfig { n: 3, inner_iters: 20, ..GeodesicConfig::default() };
        let rep = pixel_rep();
        let (path, diag) = synth_geodesic(&x, &x, &rep, &cfg).unwrap();
        for f in path.frames() {
            assert_eq!(f.data(), x.data());
        }
        let t = diag.terminal();
        assert_eq!(t.rep_energy, 0.0);
        assert_eq!(t.pixel_energy, 0.0);
    }

    #[test]
    fn synth_rejects_out_of_range_endpoints() {
        let ok = Tensor::full(vec![1, 2, 2], 0.5);
        let bad = Tensor::full(vec![1, 2, 2], 1.5);
        let cfg = GeodesicConfig { n: 2, inner_iters: 5, ..GeodesicConfig::default() };
        assert!(synth_geodesic(&ok, &bad, &pixel_rep(), &cfg).is_err());
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut cfg = GeodesicConfig::default();
        cfg.n = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = GeodesicConfig::default();
        cfg.adam.beta1 = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = GeodesicConfig::default();
        cfg.rep_tol = 0.0;
        assert!(cfg.validate().is_err());
    }

    /// A path of independent noise frames: unlike a linear interpolation,
    /// whose Laplacian vanishes, these have O(1) energy gradients, so the
    /// relative-error metric has a real scale to normalize against.
    fn jagged_path(shape: &[usize], seed: u64, frames: usize) -> Path {
        Path::from_frames(
            (0..frames)
                .map(|k| crate::images::uniform_noise(shape, seed, k as u64))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn energy_gradients_match_finite_differences() {
        let path = jagged_path(&[1, 5, 5], 31, 4);

        let report = pixel_energy_grad_check(&path, 1e-5, 1e-8).unwrap();
        assert!(report.pass, "pixel: {}", report.max_rel_err);
        assert_eq!(report.coords, 4 * 25, "all frames' coords reported");

        let rep = pixel_rep();
        let report = rep_energy_grad_check(&path, &rep, 1e-5, 1e-6).unwrap();
        assert!(report.pass, "identity rep: {}", report.max_rel_err);
    }

    #[test]
    fn rep_energy_gradient_matches_fd_through_a_small_stack() {
        let rep = crate::stack::preset("smallnet_l2")
            .unwrap()
            .build(&[3, 8, 8])
            .unwrap();
        // Admit only a path whose every frame clears the smoothness margins.
        let path = (0..60)
            .map(|s| jagged_path(&[3, 8, 8], 500 + s, 4))
            .find(|p| {
                p.frames().iter().all(|f| {
                    crate::layers::smoothness_margin(rep.steps(), f).unwrap() > 3e-4
                })
            })
            .expect("an admissible path exists among 60 seeds");
        let report = rep_energy_grad_check(&path, &rep, 1e-6, 1e-4).unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }
}
