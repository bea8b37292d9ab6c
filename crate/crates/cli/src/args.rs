//! Clap surface and flag/config-file merging.
//!
//! Every run-producing command takes `--config FILE` (a config JSON or a run
//! manifest); explicitly supplied flags override file values, and the merged
//! result is what the manifest snapshots.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use repgeo::geodesic::ProjectionStep;
use repgeo::metrics::SliceAxis;
use repgeo::transforms::{Boundary, Interpolation, TransformKind, TransformSpec};

use crate::checks::Scope;
use crate::config::{
    load_config, RfRunConfig, StackSource, SynthRunConfig, TransformRunConfig, DEFAULT_BIT_DEPTH,
};
use crate::exit::{invalid, CliResult};

#[derive(Parser)]
#[command(
    name = "repgeo",
    version,
    about = "Representational geodesics: synthesis, reference paths and diagnostics",
    after_help = "Exit codes: 0 success/converged, 1 failed checks, \
                  2 invalid input, 3 non-convergence (artifacts still written)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Sample a ground-truth transformation path into frames
    Transform(TransformArgs),
    /// Synthesize a conditional representational geodesic between two images
    Synth(SynthArgs),
    /// Extract a temporal slice (one row/column per frame) from a run
    Slice(SliceArgs),
    /// Measure a receptive-field map and size estimate for a stack
    Rf(RfArgs),
    /// Deviation-from-straight-line profile of a run under a stack
    Deviation(DeviationArgs),
    /// Per-frame RMSE between two runs' frames
    Compare(CompareArgs),
    /// Gradient sweeps, invariant audits and run audits (JSON report)
    Check(CheckArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Translate,
    Rotate,
    Dilate,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum BoundaryArg {
    Circular,
    Zero,
    Reflect,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Circular => Boundary::Circular,
            BoundaryArg::Zero => Boundary::Zero,
            BoundaryArg::Reflect => Boundary::Reflect,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InterpArg {
    Bilinear,
    Bicubic,
}

impl From<InterpArg> for Interpolation {
    fn from(i: InterpArg) -> Self {
        match i {
            InterpArg::Bilinear => Interpolation::Bilinear,
            InterpArg::Bicubic => Interpolation::Bicubic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Row,
    Column,
}

impl From<AxisArg> for SliceAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Row => SliceAxis::Row,
            AxisArg::Column => SliceAxis::Column,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum StepModeArg {
    /// Step scaled so the mean absolute pixel update equals the value
    Normalized,
    /// Plain gradient-descent step
    Absolute,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    Gradients,
    Invariants,
    Runs,
    All,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Gradients => Scope::Gradients,
            ScopeArg::Invariants => Scope::Invariants,
            ScopeArg::Runs => Scope::Runs,
            ScopeArg::All => Scope::All,
        }
    }
}

#[derive(Args)]
pub struct TransformArgs {
    /// Input image (PNG, grayscale or RGB, 8- or 16-bit)
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Endpoint shift in columns, pixels (translate)
    #[arg(long)]
    pub dx: Option<f64>,
    /// Endpoint shift in rows, pixels (translate)
    #[arg(long)]
    pub dy: Option<f64>,
    /// Endpoint rotation in degrees (rotate)
    #[arg(long)]
    pub deg: Option<f64>,
    /// Endpoint scale factor (dilate)
    #[arg(long)]
    pub scale: Option<f64>,
    /// Rotation/dilation center as `x y` (defaults to the image center)
    #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
    pub center: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryArg>,
    #[arg(long, value_enum)]
    pub interpolation: Option<InterpArg>,
    /// Number of path segments; the run writes n+1 frames
    #[arg(long)]
    pub n: Option<usize>,
    /// PNG output depth, 8 or 16 (the .ten containers are always exact)
    #[arg(long)]
    pub bit_depth: Option<u8>,
    /// JSON config or manifest supplying defaults for the flags above
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (default: next free under $REPGEO_OUT_ROOT or ./runs)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TransformArgs {
    pub fn into_config(self) -> CliResult<(TransformRunConfig, Option<PathBuf>)> {
        let base: Option<TransformRunConfig> = match &self.config {
            Some(path) => Some(load_config(path)?),
            None => None,
        };

        // Kind resolution: a --kind flag starts from neutral parameters
        // unless the config file already has the same kind; individual
        // parameter flags then override.
        let start = match (self.kind, base.as_ref().map(|b| b.spec.kind)) {
            (Some(k), Some(bk)) if kind_matches(k, &bk) => bk,
            (Some(k), _) => neutral_kind(k),
            (None, Some(bk)) => bk,
            (None, None) => return Err(invalid("missing --kind (or --config with a spec)")),
        };
        let kind = match start {
            TransformKind::Translate { dx, dy } => TransformKind::Translate {
                dx: self.dx.unwrap_or(dx),
                dy: self.dy.unwrap_or(dy),
            },
            TransformKind::Rotate { degrees } => TransformKind::Rotate {
                degrees: self.deg.unwrap_or(degrees),
            },
            TransformKind::Dilate { scale } => TransformKind::Dilate {
                scale: self.scale.unwrap_or(scale),
            },
        };

        let mut spec = TransformSpec {
            kind,
            center: base.as_ref().and_then(|b| b.spec.center),
            boundary: base.as_ref().and_then(|b| b.spec.boundary),
            interpolation: base.as_ref().and_then(|b| b.spec.interpolation),
        };
        if let Some(c) = self.center {
            spec.center = Some([c[0], c[1]]);
        }
        if let Some(b) = self.boundary {
            spec.boundary = Some(b.into());
        }
        if let Some(i) = self.interpolation {
            spec.interpolation = Some(i.into());
        }

        let input = self
            .input
            .map(|p| p.display().to_string())
            .or_else(|| base.as_ref().map(|b| b.input.clone()))
            .ok_or_else(|| invalid("missing --input"))?;
        let config = TransformRunConfig {
            input,
            spec,
            n: self.n.or(base.as_ref().map(|b| b.n)).unwrap_or(10),
            bit_depth: self
                .bit_depth
                .or(base.as_ref().map(|b| b.bit_depth))
                .unwrap_or(DEFAULT_BIT_DEPTH),
        };
        Ok((config, self.out))
    }
}

fn kind_matches(arg: KindArg, kind: &TransformKind) -> bool {
    matches!(
        (arg, kind),
        (KindArg::Translate, TransformKind::Translate { .. })
            | (KindArg::Rotate, TransformKind::Rotate { .. })
            | (KindArg::Dilate, TransformKind::Dilate { .. })
    )
}

fn neutral_kind(arg: KindArg) -> TransformKind {
    match arg {
        KindArg::Translate => TransformKind::Translate { dx: 0.0, dy: 0.0 },
        KindArg::Rotate => TransformKind::Rotate { degrees: 0.0 },
        KindArg::Dilate => TransformKind::Dilate { scale: 1.0 },
    }
}

#[derive(Args)]
pub struct SynthArgs {
    /// First endpoint image (PNG)
    #[arg(long)]
    pub x0: Option<PathBuf>,
    /// Last endpoint image (PNG, same size)
    #[arg(long)]
    pub xn: Option<PathBuf>,
    /// Preset name or stack-spec JSON path
    #[arg(long)]
    pub stack: Option<String>,
    /// Number of path segments
    #[arg(long)]
    pub n: Option<usize>,
    /// Adam budget for the first representation-energy minimization
    #[arg(long)]
    pub inner_iters: Option<usize>,
    /// Adam budget for each re-minimization after a pixel step
    #[arg(long)]
    pub reproject_iters: Option<usize>,
    /// Outer pixel-descent step size (see --step-mode)
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long, value_enum)]
    pub step_mode: Option<StepModeArg>,
    /// Outer convergence tolerance on the pixel-energy decrease
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub outer_window: Option<usize>,
    #[arg(long)]
    pub outer_max: Option<usize>,
    /// Accepted slack on the representation energy after re-minimization
    #[arg(long)]
    pub rep_tol: Option<f64>,
    /// Early-stop tolerance for the inner Adam loops (0 disables)
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub inner_window: Option<usize>,
    /// PNG output depth, 8 or 16
    #[arg(long)]
    pub bit_depth: Option<u8>,
    /// JSON config or manifest supplying defaults for the flags above
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (default: next free under $REPGEO_OUT_ROOT or ./runs)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SynthArgs {
    pub fn into_config(self) -> CliResult<(SynthRunConfig, Option<PathBuf>)> {
        let base: Option<SynthRunConfig> = match &self.config {
            Some(path) => Some(load_config(path)?),
            None => None,
        };
        let mut geodesic = base
            .as_ref()
            .map(|b| b.geodesic.clone())
            .unwrap_or_default();
        set(&mut geodesic.n, self.n);
        set(&mut geodesic.inner_iters, self.inner_iters);
        set(&mut geodesic.reproject_iters, self.reproject_iters);
        set(&mut geodesic.outer_tol, self.outer_tol);
        set(&mut geodesic.outer_window, self.outer_window);
        set(&mut geodesic.outer_max, self.outer_max);
        set(&mut geodesic.rep_tol, self.rep_tol);
        set(&mut geodesic.inner_tol, self.inner_tol);
        set(&mut geodesic.inner_window, self.inner_window);
        if self.step.is_some() || self.step_mode.is_some() {
            let value = self.step.unwrap_or(match geodesic.lambda {
                ProjectionStep::Normalized(v) | ProjectionStep::Absolute(v) => v,
            });
            let absolute = match self.step_mode {
                Some(StepModeArg::Absolute) => true,
                Some(StepModeArg::Normalized) => false,
                None => matches!(geodesic.lambda, ProjectionStep::Absolute(_)),
            };
            geodesic.lambda = if absolute {
                ProjectionStep::Absolute(value)
            } else {
                ProjectionStep::Normalized(value)
            };
        }

        let x0 = self
            .x0
            .map(|p| p.display().to_string())
            .or_else(|| base.as_ref().map(|b| b.x0.clone()))
            .ok_or_else(|| invalid("missing --x0"))?;
        let xn = self
            .xn
            .map(|p| p.display().to_string())
            .or_else(|| base.as_ref().map(|b| b.xn.clone()))
            .ok_or_else(|| invalid("missing --xn"))?;
        let stack = self
            .stack
            .map(StackSource::Preset)
            .or_else(|| base.as_ref().map(|b| b.stack.clone()))
            .ok_or_else(|| invalid("missing --stack"))?;
        let config = SynthRunConfig {
            x0,
            xn,
            stack,
            geodesic,
            bit_depth: self
                .bit_depth
                .or(base.as_ref().map(|b| b.bit_depth))
                .unwrap_or(DEFAULT_BIT_DEPTH),
        };
        Ok((config, self.out))
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
pub struct SliceArgs {
    /// Run directory holding the frames
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// Row or column index to slice
    #[arg(long)]
    pub index: usize,
    /// PNG output depth, 8 or 16
    #[arg(long, default_value_t = DEFAULT_BIT_DEPTH)]
    pub bit_depth: u8,
    /// Output PNG path (a .ten sibling is always written); default inside the run
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct RfArgs {
    /// Preset name or stack-spec JSON path
    #[arg(long)]
    pub stack: Option<String>,
    /// Input shape as `C H W`
    #[arg(long, num_args = 3, value_names = ["C", "H", "W"])]
    pub shape: Option<Vec<usize>>,
    /// Probed response column as `ROW COL` (defaults to the center column)
    #[arg(long, num_args = 2, value_names = ["ROW", "COL"])]
    pub location: Option<Vec<usize>>,
    /// Number of noise draws to average
    #[arg(long)]
    pub n_noise: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// PNG output depth, 8 or 16
    #[arg(long)]
    pub bit_depth: Option<u8>,
    /// JSON config or manifest supplying defaults for the flags above
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (default: next free under $REPGEO_OUT_ROOT or ./runs)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RfArgs {
    pub fn into_config(self) -> CliResult<(RfRunConfig, Option<PathBuf>)> {
        let base: Option<RfRunConfig> = match &self.config {
            Some(path) => Some(load_config(path)?),
            None => None,
        };
        let stack = self
            .stack
            .map(StackSource::Preset)
            .or_else(|| base.as_ref().map(|b| b.stack.clone()))
            .ok_or_else(|| invalid("missing --stack"))?;
        let in_shape = self
            .shape
            .or_else(|| base.as_ref().map(|b| b.in_shape.clone()))
            .ok_or_else(|| invalid("missing --shape C H W"))?;
        if in_shape.len() != 3 {
            return Err(invalid("--shape takes exactly C H W"));
        }
        let location = match (self.location, base.as_ref()) {
            (Some(loc), _) => [loc[0], loc[1]],
            (None, Some(b)) => b.location,
            (None, None) => {
                // Default to the center column of the response grid.
                let response = stack.resolve()?.response_shape(&in_shape)?;
                if response.len() != 3 {
                    return Err(invalid(format!(
                        "receptive fields need a [units, rows, cols] response, got {response:?}"
                    )));
                }
                [response[1] / 2, response[2] / 2]
            }
        };
        let config = RfRunConfig {
            stack,
            location,
            in_shape,
            n_noise: self
                .n_noise
                .or(base.as_ref().map(|b| b.n_noise))
                .unwrap_or(repgeo::metrics::DEFAULT_N_NOISE),
            seed: self.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0),
            bit_depth: self
                .bit_depth
                .or(base.as_ref().map(|b| b.bit_depth))
                .unwrap_or(DEFAULT_BIT_DEPTH),
        };
        Ok((config, self.out))
    }
}

#[derive(Args)]
pub struct DeviationArgs {
    /// Run directory holding the frames
    #[arg(long)]
    pub run: PathBuf,
    /// Preset name or stack-spec JSON path
    #[arg(long)]
    pub stack: String,
    /// Output CSV path; default `<run>/deviation.csv`
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Run directory whose frames are scored
    #[arg(long)]
    pub run: PathBuf,
    /// Reference run directory (e.g. a ground-truth transform run)
    #[arg(long)]
    pub reference: PathBuf,
    /// Output CSV path; default `<run>/rmse.csv`
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CheckArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub scope: ScopeArg,
    /// Seeded instances per gradient/invariant entry
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Run directories to audit (repeatable)
    #[arg(long)]
    pub runs: Vec<PathBuf>,
    /// Also write the JSON report to this path
    #[arg(long)]
    pub out: Option<PathBuf>,
}
