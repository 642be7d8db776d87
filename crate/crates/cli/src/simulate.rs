use std::path::Path;

use psim_core::io::{spec_hash, Provenance, Sidecar};
use psim_core::{synth_sample, ForwardModelSpec, ObjectFamily};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::layout::{create_dir, frame_name, sample_name, write_with, PHASE_GT};
use crate::manifest::RunManifest;
use crate::{load_config, pool};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ForwardModelSpec,
    pub family: ObjectFamily,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SimulateConfig {
    fn validate(&self) -> CliResult<()> {
        let bad = |field: &str, why: String| Err(CliError::Config(format!("{field}: {why}")));
        if self.count == 0 {
            return bad("count", "must be >= 1".into());
        }
        if self.width < psim_core::field::MIN_OBJECT_SIDE || self.height < psim_core::field::MIN_OBJECT_SIDE {
            return bad("width/height", format!("{}x{} is too small", self.width, self.height));
        }
        self.model
            .validate()
            .and_then(|_| self.family.validate())
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn run(config: &Path, out: &Path, seed: Option<u64>, workers: usize) -> CliResult<()> {
    let mut manifest = RunManifest::start("simulate");
    let mut cfg: SimulateConfig = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let hash = spec_hash(&cfg);
    manifest.config_hash = Some(hash.clone());
    manifest.seeds.insert("data".into(), cfg.seed);
    manifest.inputs.push(config.to_path_buf());
    manifest.stage("config");

    create_dir(out)?;
    let lambda0 = cfg.model.source.lambda0;
    pool(workers)?.install(|| {
        (0..cfg.count).into_par_iter().try_for_each(|i| -> CliResult<()> {
            let s = synth_sample::<f64>(i, cfg.width, cfg.height, &cfg.family, &cfg.model, cfg.seed)?;
            let dir = out.join(sample_name(i));
            create_dir(&dir)?;
            let provenance = Provenance {
                seed: Some(s.stack.seed()),
                spec_hash: Some(hash.clone()),
            };
            for (k, (frame, shift)) in s.stack.frames().iter().zip(s.stack.realized_shifts()).enumerate() {
                let meta = Sidecar {
                    role: "frame".into(),
                    units: "intensity".into(),
                    wrapped: None,
                    width: cfg.width,
                    height: cfg.height,
                    provenance: provenance.clone(),
                    lambda0: Some(lambda0),
                    shift: Some(*shift),
                };
                write_with(&dir.join(frame_name(k + 1)), frame, meta)?;
            }
            let meta = Sidecar {
                role: "phase_gt".into(),
                units: "rad".into(),
                wrapped: Some(false),
                width: cfg.width,
                height: cfg.height,
                provenance,
                lambda0: Some(lambda0),
                shift: None,
            };
            write_with(&dir.join(PHASE_GT), s.truth.image(), meta)?;
            Ok(())
        })
    })?;
    manifest.stage("simulate");
    log::info!("wrote {} samples to {}", cfg.count, out.display());
    manifest.finish(out)
}
