use std::path::Path;

use clap::ValueEnum;
use psim_core::io::{profile_to_csv, write_atomic, write_json};
use psim_core::metrics::{
    align_global_offset, foreground_mask, mean_abs_error, rms_error, ssim, stitch_rows, MetricReport, PerImage,
    SsimParams,
};
use psim_core::{Image, PhaseMap, FRAME_COUNT};
use rayon::prelude::*;

use crate::error::{io_err, CliError, CliResult};
use crate::layout::{
    create_dir, frame_name, read_frames, read_optional, sample_dirs, PHASE_GT, PHASE_PRED, PHASE_UNWRAPPED,
};
use crate::manifest::RunManifest;
use crate::pool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskMode {
    None,
    Foreground,
}

/// Foreground: pixels deviating from the reference median by more than this fraction of its range.
pub const FOREGROUND_FRACTION: f64 = 0.05;

#[derive(Default)]
struct SampleMetrics {
    name: String,
    ssim: Option<f64>,
    ssim_foreground: Option<f64>,
    rms: Option<f64>,
    hops: Option<Vec<f64>>,
}

fn has_all_frames(dir: &Path) -> bool {
    (1..=FRAME_COUNT).all(|k| dir.join(frame_name(k)).exists())
}

fn predicted_phase(dir: &Path) -> CliResult<Option<Image<f64>>> {
    for f in [PHASE_PRED, PHASE_UNWRAPPED] {
        if let Some(img) = read_optional(dir, f)? {
            return Ok(Some(img));
        }
    }
    Ok(None)
}

fn evaluate(
    name: &str,
    pred_dir: &Path,
    truth_dir: Option<&Path>,
    mask: MaskMode,
    out: &Path,
) -> CliResult<SampleMetrics> {
    let mut m = SampleMetrics {
        name: name.to_string(),
        ..Default::default()
    };
    let truth = match truth_dir {
        Some(d) => read_optional(d, PHASE_GT)?,
        None => None,
    };
    if let (Some(pred), Some(truth)) = (predicted_phase(pred_dir)?, truth) {
        if pred.dims() != truth.dims() {
            return Err(CliError::Data(format!(
                "{name}: prediction {:?} vs truth {:?}",
                pred.dims(),
                truth.dims()
            )));
        }
        let truth = PhaseMap::unwrapped(truth);
        let pred = align_global_offset(&PhaseMap::unwrapped(pred), &truth)?;
        let params = SsimParams::for_reference(truth.image());
        let s = ssim(pred.image(), truth.image(), &params)?;
        m.ssim = Some(s.mean);
        if mask == MaskMode::Foreground {
            let fg = foreground_mask(truth.image(), FOREGROUND_FRACTION);
            m.ssim_foreground = s.masked_mean(&fg, truth.image().width(), params.window);
        }
        m.rms = Some(rms_error(pred.image(), truth.image())?);
    }
    let sample_out = out.join(name);
    if let Some(td) = truth_dir.filter(|d| has_all_frames(d)) {
        let truth_frames = read_frames(name, td)?;
        let row = truth_frames[0].height() / 2;
        create_dir(&sample_out)?;
        let csv = sample_out.join("profile.csv");
        write_atomic(&csv, profile_to_csv(&stitch_rows(&truth_frames, row)?).as_bytes())
            .map_err(|e| io_err(&csv, e))?;
        if has_all_frames(pred_dir) && pred_dir != td {
            let pred_frames = read_frames(name, pred_dir)?;
            let hops = (1..FRAME_COUNT)
                .map(|k| mean_abs_error(&pred_frames[k], &truth_frames[k]))
                .collect::<psim_core::Result<Vec<f64>>>()?;
            m.hops = Some(hops);
            let csv = sample_out.join("profile_pred.csv");
            write_atomic(&csv, profile_to_csv(&stitch_rows(&pred_frames, row)?).as_bytes())
                .map_err(|e| io_err(&csv, e))?;
        }
    }
    Ok(m)
}

pub fn run(pred: &Path, data: Option<&Path>, out: &Path, mask: MaskMode, workers: usize) -> CliResult<()> {
    let mut manifest = RunManifest::start("eval");
    manifest.inputs.push(pred.to_path_buf());
    manifest.inputs.extend(data.map(Path::to_path_buf));
    let samples = sample_dirs(pred)?;
    let truth_dirs: Vec<Option<std::path::PathBuf>> = match data {
        Some(d) => {
            let known = sample_dirs(d)?;
            samples
                .iter()
                .map(|(n, _)| {
                    known
                        .iter()
                        .find(|(k, _)| k == n)
                        .map(|(_, p)| p.clone())
                        .or_else(|| (known.len() == 1 && samples.len() == 1).then(|| known[0].1.clone()))
                })
                .collect()
        }
        None => samples.iter().map(|(_, p)| Some(p.clone())).collect(),
    };
    create_dir(out)?;
    let results = pool(workers)?.install(|| {
        samples
            .par_iter()
            .zip(truth_dirs.par_iter())
            .map(|((name, dir), td)| evaluate(name, dir, td.as_deref(), mask, out))
            .collect::<CliResult<Vec<_>>>()
    })?;
    manifest.stage("evaluate");

    let collect = |f: &dyn Fn(&SampleMetrics) -> Option<f64>| -> Vec<PerImage> {
        results
            .iter()
            .filter_map(|m| {
                f(m).map(|value| PerImage {
                    name: m.name.clone(),
                    value,
                })
            })
            .collect()
    };
    let mut ssim_params = serde_json::to_value(SsimParams::default()).expect("serializable");
    // L is taken per image from the truth, not the default
    ssim_params["dynamic_range"] = "max - min of phase_gt".into();
    let mut reports = Vec::new();
    let full = collect(&|m| m.ssim);
    if !full.is_empty() {
        reports.push(MetricReport::from_entries("ssim", ssim_params.clone(), full));
        reports.push(MetricReport::from_entries(
            "rms_rad",
            serde_json::json!({"aligned": "2pi turns"}),
            collect(&|m| m.rms),
        ));
    }
    if mask == MaskMode::Foreground {
        let fg = collect(&|m| m.ssim_foreground);
        if !fg.is_empty() {
            let mut p = ssim_params;
            p["foreground_fraction"] = FOREGROUND_FRACTION.into();
            reports.push(MetricReport::from_entries("ssim_foreground", p, fg));
        }
    }
    for hop in 0..FRAME_COUNT - 1 {
        let entries = collect(&|m| m.hops.as_ref().map(|h| h[hop]));
        if !entries.is_empty() {
            let metric = format!("hop{}_l1", hop + 1);
            reports.push(MetricReport::from_entries(
                &metric,
                serde_json::json!({"frames": [hop + 1, hop + 2]}),
                entries,
            ));
        }
    }
    if reports.is_empty() {
        log::warn!("nothing to compare: no phase_gt/prediction pairs and no predicted frames");
    }
    write_json(&out.join("metrics.json"), &reports)?;
    manifest.finish(out)
}
