//! Implementations of the seven subcommands. Each run-producing command
//! merges file config with flags, executes, writes its artifacts plus a
//! manifest, and prints a short summary to stdout.

use std::path::Path as FsPath;

use repgeo::geodesic::{synth_geodesic, ConvergenceStatus};
use repgeo::io::{
    read_png, write_diagnostics_csv, write_png, write_profile_csv, write_rf_size_csv,
    write_rmse_csv, write_tensor,
};
use repgeo::metrics::{deviation_profile, path_rmse, receptive_field, temporal_slice};
use repgeo::transforms::ground_truth_path;

use crate::args::{
    AxisArg, CheckArgs, CompareArgs, DeviationArgs, RfArgs, SliceArgs, SynthArgs, TransformArgs,
};
use crate::checks::run_checks;
use crate::config::{
    build_rep_for, path_with_channels, validate_bit_depth, widen_frame, StackSource,
};
use crate::exit::{CliResult, Outcome};
use crate::manifest::RunManifest;
use crate::rundir::{clear_frames, load_frames, resolve_run_dir, write_frames};

/// Print a summary line, ignoring a closed pipe: `repgeo … | head` must end
/// the pipeline quietly instead of panicking on EPIPE.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub fn cmd_transform(args: TransformArgs) -> CliResult<Outcome> {
    let (config, out) = args.into_config()?;
    config.spec.validate()?;
    let depth = validate_bit_depth(config.bit_depth)?;
    let x0 = read_png(FsPath::new(&config.input))?;
    let path = ground_truth_path(&config.spec, &x0, config.n)?;

    let dir = resolve_run_dir(out.as_deref(), "transform")?;
    clear_frames(&dir)?;
    let mut manifest = RunManifest::new("transform", serde_json::to_value(&config)?);
    manifest.artifacts = write_frames(&dir, &path, depth)?;
    manifest.write(&dir)?;

    say!("run: {}", dir.display());
    say!("frames: {}", path.frames().len());
    Ok(Outcome::Success)
}

pub fn cmd_synth(args: SynthArgs) -> CliResult<Outcome> {
    let (config, out) = args.into_config()?;
    let depth = validate_bit_depth(config.bit_depth)?;
    let x0 = read_png(FsPath::new(&config.x0))?;
    let xn = read_png(FsPath::new(&config.xn))?;
    let spec = config.stack.resolve()?;
    let (rep, widen) = build_rep_for(&spec, x0.shape())?;
    let x0 = widen_frame(&x0, widen)?;
    let xn = widen_frame(&xn, widen)?;

    let (path, diagnostics) = synth_geodesic(&x0, &xn, &rep, &config.geodesic)?;

    let dir = resolve_run_dir(out.as_deref(), "synth")?;
    clear_frames(&dir)?;
    let mut manifest = RunManifest::new("synth", serde_json::to_value(&config)?);
    manifest.outcome = Some(status_name(diagnostics.status));
    manifest.artifacts = write_frames(&dir, &path, depth)?;
    write_diagnostics_csv(&dir.join("diagnostics.csv"), &diagnostics.rows)?;
    manifest.artifacts.push("diagnostics.csv".into());
    manifest.write(&dir)?;

    let terminal = diagnostics.terminal();
    say!("run: {}", dir.display());
    say!("status: {}", status_name(diagnostics.status));
    say!("rep_energy: {}", terminal.rep_energy);
    say!("pixel_energy: {}", terminal.pixel_energy);
    Ok(match diagnostics.status {
        ConvergenceStatus::Converged => Outcome::Success,
        _ => Outcome::NonConverged,
    })
}

fn status_name(status: ConvergenceStatus) -> String {
    serde_json::to_value(status)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_else(|| "unknown".into())
}

pub fn cmd_slice(args: SliceArgs) -> CliResult<Outcome> {
    let depth = validate_bit_depth(args.bit_depth)?;
    let path = load_frames(&args.run)?;
    let slice = temporal_slice(&path, args.axis.into(), args.index)?;

    let axis_name = match args.axis {
        AxisArg::Row => "row",
        AxisArg::Column => "col",
    };
    let png = args
        .out
        .unwrap_or_else(|| args.run.join(format!("slice_{axis_name}_{:03}.png", args.index)));
    write_png(&png, &slice, depth)?;
    write_tensor(&png.with_extension("ten"), &slice)?;

    say!("wrote {}", png.display());
    Ok(Outcome::Success)
}

pub fn cmd_rf(args: RfArgs) -> CliResult<Outcome> {
    let (config, out) = args.into_config()?;
    let depth = validate_bit_depth(config.bit_depth)?;
    let spec = config.stack.resolve()?;
    let rep = spec.build(&config.in_shape)?;
    let map = receptive_field(
        &rep,
        &config.in_shape,
        (config.location[0], config.location[1]),
        config.n_noise,
        config.seed,
    )?;

    let dir = resolve_run_dir(out.as_deref(), "rf")?;
    let mut manifest = RunManifest::new("rf", serde_json::to_value(&config)?);
    write_tensor(&dir.join("rf_map.ten"), &map.grid)?;
    // The PNG is a visualization: peak-normalized so faint tails survive
    // quantization. The container holds the raw averaged magnitudes.
    let peak = map.grid.data().iter().cloned().fold(0.0_f64, f64::max);
    let vis = if peak > 0.0 {
        map.grid.map(|v| v / peak)
    } else {
        map.grid.clone()
    };
    write_png(&dir.join("rf_map.png"), &vis, depth)?;
    write_rf_size_csv(&dir.join("rf_size.csv"), map.size_estimate)?;
    manifest.artifacts = vec!["rf_map.ten".into(), "rf_map.png".into(), "rf_size.csv".into()];
    manifest.write(&dir)?;

    say!("run: {}", dir.display());
    say!("size_estimate_px: {}", map.size_estimate);
    Ok(Outcome::Success)
}

pub fn cmd_deviation(args: DeviationArgs) -> CliResult<Outcome> {
    let frames = load_frames(&args.run)?;
    let source = StackSource::Preset(args.stack);
    let spec = source.resolve()?;
    let (rep, widen) = build_rep_for(&spec, frames.frame(0).shape())?;
    let path = path_with_channels(frames, widen)?;
    let profile = deviation_profile(&path, &rep)?;

    let out = args.out.unwrap_or_else(|| args.run.join("deviation.csv"));
    write_profile_csv(&out, &profile)?;
    say!("max_deviation: {}", profile.max_deviation());
    say!("wrote {}", out.display());
    Ok(Outcome::Success)
}

pub fn cmd_compare(args: CompareArgs) -> CliResult<Outcome> {
    let path = load_frames(&args.run)?;
    let reference = load_frames(&args.reference)?;
    let rmse = path_rmse(&path, &reference)?;

    let out = args.out.unwrap_or_else(|| args.run.join("rmse.csv"));
    write_rmse_csv(&out, &rmse)?;
    let mean = rmse.iter().sum::<f64>() / rmse.len() as f64;
    say!("mean_rmse: {mean}");
    say!("wrote {}", out.display());
    Ok(Outcome::Success)
}

pub fn cmd_check(args: CheckArgs) -> CliResult<Outcome> {
    let report = run_checks(args.scope.into(), args.instances, &args.runs)?;
    let json = serde_json::to_string_pretty(&report)?;
    say!("{json}");
    if let Some(path) = args.out {
        std::fs::write(path, json + "\n")?;
    }
    Ok(if report.pass {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}
