//! Run-directory management: output-root resolution, frame naming, and the
//! dual PNG + tensor-container frame format.
//!
//! Frames are written twice: `frame_%03d.png` for viewing (quantized to the
//! configured bit depth) and `frame_%03d.ten` for exact 64-bit round-trips
//! used by bitwise determinism checks. Readers prefer the containers when
//! present and fall back to the PNGs.

use std::path::{Path as FsPath, PathBuf};

use repgeo::geodesic::Path;
use repgeo::io::{read_png, read_tensor, write_png, write_tensor, BitDepth};

use crate::exit::{invalid, CliResult};

/// Environment variable naming the default output root (default `runs`).
pub const OUT_ROOT_ENV: &str = "REPGEO_OUT_ROOT";

/// Resolve the run directory: `--out` verbatim, otherwise the first free
/// `<root>/<command>_NNN` under the output root. The directory is created.
pub fn resolve_run_dir(out: Option<&FsPath>, command: &str) -> CliResult<PathBuf> {
    let dir = match out {
        Some(dir) => dir.to_path_buf(),
        None => {
            let root =
                PathBuf::from(std::env::var(OUT_ROOT_ENV).unwrap_or_else(|_| "runs".into()));
            let mut index = 0;
            loop {
                let candidate = root.join(format!("{command}_{index:03}"));
                if !candidate.exists() {
                    break candidate;
                }
                index += 1;
                if index > 999 {
                    return Err(invalid(format!(
                        "no free run directory under {} (looked up to {command}_999)",
                        root.display()
                    )));
                }
            }
        }
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Remove stale `frame_*` files so a rerun into an existing directory cannot
/// leave frames from a longer previous path behind.
pub fn clear_frames(dir: &FsPath) -> CliResult<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("frame_") && (name.ends_with(".png") || name.ends_with(".ten")) {
            std::fs::remove_file(&path)?;
        }
    }
    Ok(())
}

/// Write every frame as PNG + container; returns the artifact names in
/// deterministic order.
pub fn write_frames(dir: &FsPath, path: &Path, depth: BitDepth) -> CliResult<Vec<String>> {
    let mut artifacts = Vec::with_capacity(2 * path.frames().len());
    for (i, frame) in path.frames().iter().enumerate() {
        let png = format!("frame_{i:03}.png");
        let ten = format!("frame_{i:03}.ten");
        write_png(&dir.join(&png), frame, depth)?;
        write_tensor(&dir.join(&ten), frame)?;
        artifacts.push(png);
        artifacts.push(ten);
    }
    Ok(artifacts)
}

/// Load a frame sequence from a run directory, preferring exact containers.
pub fn load_frames(dir: &FsPath) -> CliResult<Path> {
    let mut tens = list_sorted(dir, ".ten")?;
    let frames = if tens.is_empty() {
        let pngs = list_sorted(dir, ".png")?;
        if pngs.len() < 2 {
            return Err(invalid(format!(
                "{} holds {} frame file(s); a path needs at least 2",
                dir.display(),
                pngs.len()
            )));
        }
        pngs.iter()
            .map(|p| read_png(p))
            .collect::<repgeo::Result<Vec<_>>>()?
    } else {
        tens.drain(..)
            .map(|p| read_tensor(&p))
            .collect::<repgeo::Result<Vec<_>>>()?
    };
    Ok(Path::from_frames(frames)?)
}

fn list_sorted(dir: &FsPath, ext: &str) -> CliResult<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir)
        .map_err(|e| invalid(format!("cannot read run directory {}: {e}", dir.display())))?
    {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("frame_") && name.ends_with(ext) {
            found.push(path);
        }
    }
    found.sort();
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use repgeo::images::uniform_noise;

    #[test]
    fn frames_round_trip_exactly_through_the_container() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<_> = (0..3).map(|k| uniform_noise(&[1, 4, 4], 5, k)).collect();
        let path = Path::from_frames(frames.clone()).unwrap();
        let names = write_frames(dir.path(), &path, BitDepth::Eight).unwrap();
        assert_eq!(names.len(), 6);
        assert_eq!(names[0], "frame_000.png");

        let back = load_frames(dir.path()).unwrap();
        for (a, b) in back.frames().iter().zip(&frames) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn rerun_clears_stale_frames() {
        let dir = tempfile::tempdir().unwrap();
        let long = Path::from_frames((0..5).map(|k| uniform_noise(&[1, 4, 4], 5, k)).collect())
            .unwrap();
        write_frames(dir.path(), &long, BitDepth::Eight).unwrap();
        clear_frames(dir.path()).unwrap();
        let short = Path::from_frames((0..2).map(|k| uniform_noise(&[1, 4, 4], 9, k)).collect())
            .unwrap();
        write_frames(dir.path(), &short, BitDepth::Eight).unwrap();
        assert_eq!(load_frames(dir.path()).unwrap().frames().len(), 2);
    }

    #[test]
    fn default_run_dirs_count_up() {
        let root = tempfile::tempdir().unwrap();
        // Scoped override of the output root for this test only.
        std::env::set_var(OUT_ROOT_ENV, root.path());
        let a = resolve_run_dir(None, "transform").unwrap();
        let b = resolve_run_dir(None, "transform").unwrap();
        std::env::remove_var(OUT_ROOT_ENV);
        assert_eq!(a.file_name().unwrap(), "transform_000");
        assert_eq!(b.file_name().unwrap(), "transform_001");
    }
}
