//! On-disk dataset layout: one directory per sample holding `frame_1.pfm` ...
//! `frame_5.pfm` and optionally `phase_gt.pfm`, each with a JSON sidecar.

use std::path::{Path, PathBuf};

use psim_core::io::{read_pfm, read_sidecar, write_image, Provenance, Sidecar};
use psim_core::{Image, FRAME_COUNT};
use psim_gan::StackRecord;

use crate::error::{io_err, CliError, CliResult};

pub const PHASE_GT: &str = "phase_gt.pfm";
pub const PHASE_PRED: &str = "phase_pred.pfm";
pub const PHASE_UNWRAPPED: &str = "phase_unwrapped.pfm";

pub fn frame_name(k: usize) -> String {
    format!("frame_{k}.pfm")
}

pub fn sample_name(i: usize) -> String {
    format!("sample_{i:04}")
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Sample directories under `root`, sorted by name. A directory that itself
/// holds `frame_1.pfm` is a single sample.
pub fn sample_dirs(root: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    if !root.is_dir() {
        return Err(io_err(root, "not a directory"));
    }
    if root.join(frame_name(1)).exists() {
        let name = root
            .file_name()
            .map_or_else(|| "sample".to_string(), |n| n.to_string_lossy().into_owned());
        return Ok(vec![(name, root.to_path_buf())]);
    }
    let mut dirs: Vec<(String, PathBuf)> = std::fs::read_dir(root)
        .map_err(|e| io_err(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no sample directories",
            root.display()
        )));
    }
    Ok(dirs)
}

pub fn read_image(path: &Path) -> CliResult<Image<f64>> {
    read_pfm(path).map_err(|e| match e {
        psim_core::Error::Io(io) => io_err(path, io),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

/// Reads the five frames of a stack; a missing frame is a data-shape error.
pub fn read_frames(name: &str, dir: &Path) -> CliResult<Vec<Image<f64>>> {
    let missing: Vec<String> = (1..=FRAME_COUNT)
        .map(frame_name)
        .filter(|f| !dir.join(f).exists())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "stack {name} ({}) is missing {}",
            dir.display(),
            missing.join(", ")
        )));
    }
    let frames: Vec<Image<f64>> = (1..=FRAME_COUNT)
        .map(|k| read_image(&dir.join(frame_name(k))))
        .collect::<CliResult<_>>()?;
    for f in &frames[1..] {
        if f.dims() != frames[0].dims() {
            return Err(CliError::Data(format!("stack {name}: frame sizes differ")));
        }
    }
    Ok(frames)
}

pub fn read_optional(dir: &Path, file: &str) -> CliResult<Option<Image<f64>>> {
    let p = dir.join(file);
    if p.exists() {
        read_image(&p).map(Some)
    } else {
        Ok(None)
    }
}

pub fn read_stack(name: &str, dir: &Path) -> CliResult<StackRecord> {
    Ok(StackRecord {
        frames: read_frames(name, dir)?,
        truth: read_optional(dir, PHASE_GT)?,
    })
}

/// Centre wavelength recorded in the first frame's sidecar, if any.
pub fn lambda0(dir: &Path) -> Option<f64> {
    read_sidecar(&dir.join(frame_name(1))).ok().and_then(|s| s.lambda0)
}

pub fn write(path: &Path, img: &Image<f64>, role: &str, units: &str, wrapped: Option<bool>) -> CliResult<Sidecar> {
    let meta = Sidecar {
        role: role.to_string(),
        units: units.to_string(),
        wrapped,
        width: img.width(),
        height: img.height(),
        provenance: Provenance::default(),
        lambda0: None,
        shift: None,
    };
    write_with(path, img, meta)
}

pub fn write_with(path: &Path, img: &Image<f64>, meta: Sidecar) -> CliResult<Sidecar> {
    write_image(path, img, &meta).map_err(|e| io_err(path, e))?;
    Ok(meta)
}
