//! Experiment driver.
//!
//! Synthesises labelled datasets, trains one network per window, evaluates
//! checkpoints in the event-driven mode or against the replicated-frame
//! baseline, and writes reports.

mod dataset;
mod eval;
mod report;

pub use dataset::{make_dataset, make_split, Dataset, LabeledScene, TestSet};
pub use eval::{
    evaluate, evaluate_one, frame_inputs, run_training, save_training, ConditionResult, EvalOptions, EvalReport,
    SceneOutcome,
};
pub use report::{emit_report, read_report, render_report, ReportFormat, CSV_COLUMNS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::ObjectKind;
use crate::kep::KepConfig;
use crate::train::TrainConfig;

/// Lighting condition of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lighting {
    Normal,
    LowLight,
}

impl Lighting {
    pub fn name(self) -> &'static str {
        match self {
            Lighting::Normal => "normal",
            Lighting::LowLight => "low-light",
        }
    }
}

impl std::str::FromStr for Lighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Lighting::Normal),
            "low-light" | "low" | "dark" => Ok(Lighting::LowLight),
            _ => Err(Error::arg(format!("unknown lighting condition {s:?}"))),
        }
    }
}

/// How a test stream is presented to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Per-step event slices through the event-driven simulator.
    Async,
    /// One binary frame of the whole window, repeated at every step.
    EfSnn,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Async => "async",
            Mode::EfSnn => "ef-snn",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "async" => Ok(Mode::Async),
            "ef-snn" | "ef" => Ok(Mode::EfSnn),
            _ => Err(Error::arg(format!("unknown evaluation mode {s:?}"))),
        }
    }
}

/// Distribution scenes are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneDistribution {
    /// Object radius range in pixels.
    pub radius: (f64, f64),
    /// Horizontal speed range in pixels per millisecond.
    pub speed: (f64, f64),
    /// Largest vertical drift over the window, pixels.
    pub vertical_drift: f64,
    /// Fraction of scenes approaching from the left.
    pub direction_balance: f64,
    pub threshold: f64,
    /// Object contrast in normal light.
    pub contrast: f64,
    /// Background noise in normal light, events per pixel per second.
    pub noise_rate: f64,
    pub low_light_noise_factor: f64,
    pub low_light_contrast_factor: f64,
}

impl Default for SceneDistribution {
    fn default() -> Self {
        SceneDistribution {
            radius: (6.5, 8.5),
            speed: (0.8, 1.2),
            vertical_drift: 8.0,
            direction_balance: 0.5,
            threshold: 0.2,
            contrast: 0.36,
            noise_rate: 0.06,
            low_light_noise_factor: 8.0,
            low_light_contrast_factor: 0.6,
        }
    }
}

impl SceneDistribution {
    pub fn noise_for(&self, lighting: Lighting) -> f64 {
        match lighting {
            Lighting::Normal => self.noise_rate,
            Lighting::LowLight => self.noise_rate * self.low_light_noise_factor,
        }
    }

    pub fn contrast_for(&self, lighting: Lighting) -> f64 {
        match lighting {
            Lighting::Normal => self.contrast,
            Lighting::LowLight => self.contrast * self.low_light_contrast_factor,
        }
    }

    fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi;
        if !range_ok(self.radius) || !range_ok(self.speed) {
            return Err(Error::Config("radius and speed ranges need 0 < low <= high".into()));
        }
        if !(self.direction_balance > 0.0 && self.direction_balance < 1.0) {
            return Err(Error::Config(format!("direction balance must lie in (0, 1), got {}", self.direction_balance)));
        }
        if !(self.vertical_drift >= 0.0 && self.threshold > 0.0 && self.noise_rate >= 0.0) {
            return Err(Error::Config("drift, threshold and noise must be non-negative".into()));
        }
        if !(self.low_light_noise_factor > 0.0 && self.low_light_contrast_factor > 0.0) {
            return Err(Error::Config("low-light factors must be positive".into()));
        }
        Ok(())
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub width: u16,
    pub height: u16,
    /// Window lengths to sweep, milliseconds. One network per window.
    pub windows_ms: Vec<u32>,
    pub lighting: Vec<Lighting>,
    pub train_objects: Vec<ObjectKind>,
    pub test_objects: Vec<ObjectKind>,
    /// Training scenes per window, spread evenly over lighting conditions.
    pub train_size: usize,
    /// Test scenes per (object, lighting, window) condition.
    pub test_size: usize,
    pub scenes: SceneDistribution,
    pub kep: bool,
    pub kep_config: KepConfig,
    pub quantize: bool,
    pub sigma: f64,
    pub units: f64,
    pub modes: Vec<Mode>,
    /// Record mean wall-clock time per inference. Off by default so that
    /// reports are reproducible byte for byte.
    pub timing: bool,
    /// Seed of the network's initial weights.
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            width: 128,
            height: 128,
            windows_ms: vec![30, 50, 100],
            lighting: vec![Lighting::Normal, Lighting::LowLight],
            train_objects: vec![ObjectKind::Disk],
            test_objects: vec![ObjectKind::Disk, ObjectKind::TallBlob],
            train_size: 800,
            test_size: 400,
            scenes: SceneDistribution::default(),
            kep: false,
            kep_config: KepConfig::default(),
            quantize: false,
            sigma: crate::deploy::DEFAULT_SIGMA,
            units: crate::deploy::DEFAULT_UNITS,
            modes: vec![Mode::Async, Mode::EfSnn],
            timing: false,
            init_seed: 1,
            train: TrainConfig { epochs: 4, ..TrainConfig::default() },
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows_ms.is_empty() || self.windows_ms.contains(&0) {
            return Err(Error::Config("windows must be positive and non-empty".into()));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::Config("split sizes must be at least 1".into()));
        }
        if self.lighting.is_empty() || self.train_objects.is_empty() || self.test_objects.is_empty() {
            return Err(Error::Config("lighting and object lists must be non-empty".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("empty resolution".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("no evaluation mode selected".into()));
        }
        self.scenes.validate()?;
        self.kep_config.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn invariants() {
        let mut c = ExperimentConfig::default();
        c.windows_ms = vec![50, 0];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.test_size = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.scenes.direction_balance = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_overrides() {
        let c = ExperimentConfig::from_toml(
            "seed = 9\nwindows_ms = [50]\ntest_objects = [\"tall-blob\"]\n[train]\nepochs = 2\n[scenes]\nnoise_rate = 0.5\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.windows_ms, vec![50]);
        assert_eq!(c.test_objects, vec![ObjectKind::TallBlob]);
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.train.batch_size, 16);
        assert_eq!(c.scenes.noise_rate, 0.5);
        assert_eq!(c.scenes.threshold, 0.2);
        assert!(ExperimentConfig::from_toml("windows_ms = [0]").is_err());
        assert!(ExperimentConfig::from_toml("bogus = ").is_err());
    }
}
