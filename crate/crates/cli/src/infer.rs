use std::path::Path;

use psim_core::psi::reconstruct_frames;
use psim_gan::{assemble_stack, chain_infer_frames, infer_phase, Mode};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::layout::{create_dir, frame_name, read_image, sample_dirs, write, PHASE_PRED};
use crate::manifest::RunManifest;
use crate::pool;
use crate::train::{check_mode, load_checkpoint};

pub fn run(checkpoint: &Path, data: &Path, out: &Path, mode: Option<Mode>, workers: usize) -> CliResult<()> {
    let mut manifest = RunManifest::start("infer");
    let state = load_checkpoint(checkpoint)?;
    check_mode(mode, state.spec.mode, "the checkpoint")?;
    manifest.inputs.extend([checkpoint.to_path_buf(), data.to_path_buf()]);
    manifest.seeds.insert("train".into(), state.seed);
    let samples = sample_dirs(data)?;
    let side = state.spec.side;
    let inputs = samples
        .iter()
        .map(|(name, dir)| {
            let p = dir.join(frame_name(1));
            if !p.exists() {
                return Err(CliError::Data(format!("sample {name} has no {}", frame_name(1))));
            }
            let img = read_image(&p)?;
            if img.dims() != (side, side) {
                return Err(CliError::Data(format!(
                    "sample {name} is {:?}, model expects {side}x{side}",
                    img.dims()
                )));
            }
            Ok(img)
        })
        .collect::<CliResult<Vec<_>>>()?;
    manifest.stage("read");
    create_dir(out)?;
    pool(workers)?.install(|| {
        samples
            .par_iter()
            .zip(inputs.par_iter())
            .try_for_each(|((name, _), i1)| -> CliResult<()> {
                let dst = out.join(name);
                create_dir(&dst)?;
                match state.spec.mode {
                    Mode::Frames => {
                        let predicted = chain_infer_frames(&state, i1)?;
                        let stack = assemble_stack(i1, predicted);
                        for (k, f) in stack.iter().enumerate() {
                            let role = if k == 0 { "frame" } else { "frame_pred" };
                            write(&dst.join(frame_name(k + 1)), f, role, "intensity", None)?;
                        }
                        let rec = reconstruct_frames(&stack)?;
                        write(
                            &dst.join(PHASE_PRED),
                            rec.unwrapped.phase.image(),
                            "phase_pred",
                            "rad",
                            Some(false),
                        )?;
                    }
                    Mode::Phase => {
                        let phase = infer_phase(&state, i1)?;
                        write(&dst.join(PHASE_PRED), phase.image(), "phase_pred", "rad", Some(false))?;
                    }
                }
                Ok(())
            })
    })?;
    manifest.stage("infer");
    manifest.finish(out)
}
