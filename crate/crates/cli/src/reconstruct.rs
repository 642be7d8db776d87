use std::path::Path;

use psim_core::psi::{phase_to_height, reconstruct_frames};
use rayon::prelude::*;

use crate::error::CliResult;
use crate::layout::{create_dir, lambda0, read_frames, sample_dirs, write, PHASE_UNWRAPPED};
use crate::manifest::RunManifest;
use crate::pool;

pub fn run(data: &Path, out: &Path, workers: usize) -> CliResult<()> {
    let mut manifest = RunManifest::start("reconstruct");
    manifest.inputs.push(data.to_path_buf());
    let samples = sample_dirs(data)?;
    // check every stack before writing anything
    let stacks = samples
        .iter()
        .map(|(name, dir)| read_frames(name, dir))
        .collect::<CliResult<Vec<_>>>()?;
    manifest.stage("read");
    create_dir(out)?;
    pool(workers)?.install(|| {
        samples
            .par_iter()
            .zip(stacks.par_iter())
            .try_for_each(|((name, dir), frames)| -> CliResult<()> {
                let rec = reconstruct_frames(frames)?;
                let dst = out.join(name);
                create_dir(&dst)?;
                write(
                    &dst.join("phase_wrapped.pfm"),
                    rec.wrapped.image(),
                    "phase_wrapped",
                    "rad",
                    Some(true),
                )?;
                write(
                    &dst.join(PHASE_UNWRAPPED),
                    rec.unwrapped.phase.image(),
                    "phase_unwrapped",
                    "rad",
                    Some(false),
                )?;
                write(
                    &dst.join("quality.pfm"),
                    rec.quality.image(),
                    "quality",
                    "intensity",
                    None,
                )?;
                if let Some(l0) = lambda0(dir) {
                    let h = phase_to_height(&rec.unwrapped.phase, l0)?;
                    write(&dst.join("height.pfm"), h.image(), "height", "nm", None)?;
                }
                Ok(())
            })
    })?;
    manifest.stage("reconstruct");
    manifest.finish(out)
}
