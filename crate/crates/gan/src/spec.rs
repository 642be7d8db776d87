use psim_autonet::AdamConfig;
use serde::{Deserialize, Serialize};

use crate::error::{spec_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Predict the next phase-shifted frame; chained at inference.
    Frames,
    /// Map one interferogram directly to a phase map.
    Phase,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "frames" => Ok(Mode::Frames),
            "phase" => Ok(Mode::Phase),
            other => Err(format!("unknown mode {other:?} (expected frames or phase)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub depth: usize,
    pub base: usize,
    #[serde(default = "yes")]
    pub skip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorSpec {
    pub layers: usize,
    pub base: usize,
}

fn yes() -> bool {
    true
}

/// Architecture of one conditional GAN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanSpec {
    pub mode: Mode,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub lambda_l1: f64,
    /// Image side in pixels.
    pub side: usize,
}

/// Channel count doubles per level up to 8x the base.
pub(crate) fn level_channels(base: usize, level: usize) -> usize {
    base << level.min(3)
}

impl GanSpec {
    /// Depth 4, base 16 generator; 3-block, base 16 discriminator.
    pub fn toy(mode: Mode, side: usize) -> Self {
        Self {
            mode,
            generator: GeneratorSpec {
                depth: 4,
                base: 16,
                skip: true,
            },
            discriminator: DiscriminatorSpec { layers: 3, base: 16 },
            lambda_l1: 100.0,
            side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.generator;
        if g.depth == 0 {
            return Err(spec_err("generator.depth", "must be >= 1"));
        }
        if g.base == 0 {
            return Err(spec_err("generator.base", "must be >= 1"));
        }
        if self.discriminator.layers == 0 || self.discriminator.base == 0 {
            return Err(spec_err("discriminator", "layers and base must be >= 1"));
        }
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite()) {
            return Err(spec_err("lambda_l1", format!("{} must be >= 0", self.lambda_l1)));
        }
        if !self.side.is_power_of_two() {
            return Err(spec_err("side", format!("{} is not a power of two", self.side)));
        }
        // instance norm needs at least 2x2 at the innermost level
        let deepest = g.depth.max(self.discriminator.layers);
        if self.side >> deepest < 2 {
            return Err(spec_err(
                "side",
                format!("{} px is too small for {deepest} stride-2 levels", self.side),
            ));
        }
        Ok(())
    }
}

/// Optimizer and loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub generator_adam: AdamConfig,
    pub discriminator_adam: AdamConfig,
    pub batch_size: usize,
    /// Geometric augmentations drawn per training sample; empty means none.
    pub augment: Vec<crate::data::AugmentOp>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            generator_adam: AdamConfig::default(),
            discriminator_adam: AdamConfig::default(),
            batch_size: 1,
            augment: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(spec_err("batch_size", "must be >= 1"));
        }
        for (field, a) in [
            ("generator_adam", &self.generator_adam),
            ("discriminator_adam", &self.discriminator_adam),
        ] {
            let ok = a.lr >= 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0;
            if !ok {
                return Err(spec_err(field, format!("{a:?} out of range")));
            }
        }
        Ok(())
    }
}
