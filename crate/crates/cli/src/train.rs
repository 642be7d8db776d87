use std::path::Path;

use psim_core::io::{spec_hash, write_atomic, write_json};
use psim_gan::data::select;
use psim_gan::{build_pairs_with, split_dataset, GanSpec, GanState, Mode, StackRecord, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, CliResult};
use crate::layout::{create_dir, read_stack, sample_dirs};
use crate::load_config;
use crate::manifest::RunManifest;

pub const CHECKPOINT: &str = "checkpoint.psim";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub train_count: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_fraction() -> f64 {
    0.8
}

fn default_steps() -> u64 {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub gan: GanSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
    /// Train on one side of a split and record the held-out names.
    #[serde(default)]
    pub split: Option<SplitConfig>,
}

#[derive(Debug, Serialize)]
struct SplitRecord<'a> {
    train: Vec<&'a str>,
    test: Vec<&'a str>,
}

pub struct TrainArgs<'a> {
    pub config: Option<&'a Path>,
    pub data: &'a Path,
    pub out: &'a Path,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub steps: Option<u64>,
    pub checkpoint: Option<&'a Path>,
}

pub fn load_checkpoint(path: &Path) -> CliResult<GanState> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(GanState::from_checkpoint(&bytes)?)
}

pub fn check_mode(requested: Option<Mode>, actual: Mode, what: &str) -> CliResult<()> {
    match requested {
        Some(m) if m != actual => Err(CliError::Mode(format!("requested {m:?} but {what} is {actual:?}"))),
        _ => Ok(()),
    }
}

pub fn run(args: TrainArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("train");
    let cfg: Option<TrainFileConfig> = args.config.map(load_config).transpose()?;
    if let Some(c) = &cfg {
        manifest.config_hash = Some(spec_hash(c));
        c.gan.validate().map_err(|e| CliError::Config(e.to_string()))?;
        c.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let resumed = args.checkpoint.map(load_checkpoint).transpose()?;
    let mode = match (&resumed, &cfg) {
        (Some(st), c) => {
            check_mode(args.mode, st.spec.mode, "the checkpoint")?;
            if let Some(c) = c {
                check_mode(Some(c.gan.mode), st.spec.mode, "the checkpoint")?;
            }
            st.spec.mode
        }
        (None, Some(c)) => args.mode.unwrap_or(c.gan.mode),
        (None, None) => return Err(CliError::Config("train needs --config or --checkpoint".into())),
    };
    let steps = args
        .steps
        .or(cfg.as_ref().map(|c| c.steps))
        .unwrap_or_else(default_steps);

    let samples = sample_dirs(args.data)?;
    let stacks = samples
        .iter()
        .map(|(n, d)| read_stack(n, d))
        .collect::<CliResult<Vec<StackRecord>>>()?;
    manifest.inputs.push(args.data.to_path_buf());
    manifest.stage("read");

    let names: Vec<&str> = samples.iter().map(|(n, _)| n.as_str()).collect();
    let (train_stacks, split) = match cfg.as_ref().and_then(|c| c.split.clone()) {
        Some(sc) => {
            let s = split_dataset(stacks.len(), sc.train_fraction, sc.train_count, sc.seed)?;
            manifest.seeds.insert("split".into(), sc.seed);
            let rec = SplitRecord {
                train: s.train.iter().map(|&i| names[i]).collect(),
                test: s.test.iter().map(|&i| names[i]).collect(),
            };
            (select(&stacks, &s.train), Some(rec))
        }
        None => (stacks.clone(), None),
    };

    let mut state = match resumed {
        Some(st) => st,
        None => {
            let c = cfg.as_ref().expect("checked above");
            let mut spec = c.gan.clone();
            spec.mode = mode;
            let seed = args.seed.unwrap_or(c.seed);
            let set = build_pairs_with(&train_stacks, mode, None)?;
            GanState::new(spec, c.train.clone(), seed, set.norms)?
        }
    };
    let side = state.spec.side;
    if let Some((i, _)) = train_stacks
        .iter()
        .enumerate()
        .find(|(_, s)| s.frames[0].dims() != (side, side))
    {
        return Err(CliError::Data(format!(
            "training stack {i} is {:?}, model expects {side}x{side}",
            train_stacks[i].frames[0].dims()
        )));
    }
    let set = build_pairs_with(&train_stacks, mode, state.norms.phase)?;
    manifest.seeds.insert("train".into(), state.seed);
    manifest.stage("prepare");

    state.train(&set.pairs, steps)?;
    manifest.stage("train");

    create_dir(args.out)?;
    let ck = args.out.join(CHECKPOINT);
    write_atomic(&ck, &state.to_checkpoint()).map_err(|e| io_err(&ck, e))?;
    let csv = args.out.join("loss.csv");
    write_atomic(&csv, state.loss_csv().as_bytes()).map_err(|e| io_err(&csv, e))?;
    if let Some(rec) = split {
        write_json(&args.out.join("split.json"), &rec)?;
    }
    log::info!("trained to step {} ({} pairs)", state.step, set.pairs.len());
    manifest.finish(args.out)
}
