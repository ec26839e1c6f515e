//! TOML experiment configuration. Unknown keys are hard errors; a silent
//! typo in an experiment config is the top reproducibility hazard.

use crate::error::{CadError, Result};
use serde::Deserialize;
use std::path::Path;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub dataset: DatasetSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
}

fn default_out() -> String {
    "runs".to_string()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub n_classes: usize,
    pub radius: f64,
    pub sigma: f64,
    pub n_train: usize,
    pub n_holdout: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub beta: f64,
    pub kappa: f64,
    #[serde(default = "default_n_bins")]
    pub n_bins: usize,
}

fn default_n_bins() -> usize {
    8
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub regime: String,
    pub steps: u64,
    pub batch: usize,
    pub schedule: String,
    pub norm: String,
    pub lr_peak: f64,
    pub warmup: u64,
    pub ema_decay: f64,
    pub optimizer: String,
    pub weight_decay: f64,
    pub cfg_dropout: f64,
    pub log_every: u64,
    pub embed_dim: usize,
    pub hidden: usize,
    pub depth: usize,
    pub coh_hidden: usize,
    pub merge_hidden: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            regime: "cad".to_string(),
            steps: 3000,
            batch: 64,
            schedule: "cosine".to_string(),
            norm: "squared".to_string(),
            lr_peak: 2e-3,
            warmup: 200,
            ema_decay: 0.9999,
            optimizer: "lamb".to_string(),
            weight_decay: 0.01,
            cfg_dropout: 0.1,
            log_every: 100,
            embed_dim: 64,
            hidden: 256,
            depth: 4,
            coh_hidden: 128,
            merge_hidden: 128,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    pub n: usize,
    pub steps: usize,
    pub eta: f64,
    pub guidance: String,
    pub omega: f64,
    pub coherence: f64,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            n: 1024,
            steps: 250,
            eta: 0.0,
            guidance: "none".to_string(),
            omega: 0.0,
            coherence: 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { k: crate::metrics::DEFAULT_K }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: String,
    pub grid: Vec<f64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| CadError::io(path, e))?;
        let cfg: Config = toml::from_str(&text)
            .map_err(|e| CadError::config("config", format!("{path:?}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(CadError::config(field, reason));
        if self.run.name.is_empty()
            || self
                .run
                .name
                .chars()
                .any(|c| !(c.is_ascii_alphanumeric() || c == '-' || c == '_'))
        {
            return bad("run.name", "must be non-empty [A-Za-z0-9_-]");
        }
        if self.dataset.n_classes < 2 {
            return bad("dataset.n_classes", "need at least 2 classes");
        }
        if !(self.dataset.radius > 0.0) {
            return bad("dataset.radius", "must be positive");
        }
        if !(self.dataset.sigma > 0.0) {
            return bad("dataset.sigma", "must be positive");
        }
        if !(0.0..1.0).contains(&self.noise.beta) {
            return bad("noise.beta", "must lie in [0, 1)");
        }
        if !(self.noise.kappa > 0.0 && self.noise.kappa < 1.0) {
            return bad("noise.kappa", "must lie in (0, 1)");
        }
        if self.noise.n_bins < 2 {
            return bad("noise.n_bins", "need at least 2 bins");
        }
        let t = &self.train;
        crate::noisesim::Strategy::parse(&t.regime)
            .map_err(|_| CadError::config("train.regime", format!("unknown regime `{}`", t.regime)))?;
        if crate::diffusion::NoiseSchedule::parse(&t.schedule).is_none() {
            return bad("train.schedule", "expected `cosine` or `linear`");
        }
        if crate::diffusion::LossNorm::parse(&t.norm).is_none() {
            return bad("train.norm", "expected `squared` or `unsquared`");
        }
        if !matches!(t.optimizer.as_str(), "lamb" | "adam") {
            return bad("train.optimizer", "expected `lamb` or `adam`");
        }
        if t.batch == 0 {
            return bad("train.batch", "must be positive");
        }
        if !(t.lr_peak > 0.0) {
            return bad("train.lr_peak", "must be positive");
        }
        if !(0.0..=1.0).contains(&t.ema_decay) {
            return bad("train.ema_decay", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&t.cfg_dropout) {
            return bad("train.cfg_dropout", "must lie in [0, 1]");
        }
        if t.log_every == 0 {
            return bad("train.log_every", "must be positive");
        }
        if t.embed_dim < 2 || t.embed_dim % 2 != 0 {
            return bad("train.embed_dim", "must be even and at least 2");
        }
        if t.hidden == 0 || t.depth == 0 || t.coh_hidden == 0 || t.merge_hidden == 0 {
            return bad("train", "model widths and depth must be positive");
        }
        let s = &self.sample;
        if s.steps == 0 {
            return bad("sample.steps", "must be positive");
        }
        if !(0.0..=1.0).contains(&s.eta) {
            return bad("sample.eta", "must lie in [0, 1]");
        }
        if crate::diffusion::GuidanceMode::parse(&s.guidance).is_none() {
            return bad("sample.guidance", "expected `none`, `cfg` or `ca-cfg`");
        }
        if s.omega < 0.0 {
            return bad("sample.omega", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&s.coherence) {
            return bad("sample.coherence", "must lie in [0, 1]");
        }
        if self.eval.k == 0 {
            return bad("eval.k", "must be positive");
        }
        if let Some(sw) = &self.sweep {
            if !matches!(sw.axis.as_str(), "guidance" | "coherence") {
                return bad("sweep.axis", "expected `guidance` or `coherence`");
            }
            if sw.grid.is_empty() {
                return bad("sweep.grid", "must be non-empty");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[run]
name = \"demo\"
seed = 7

[dataset]
n_classes = 8
radius = 4.0
sigma = 0.4
n_train = 4096
n_holdout = 1024

[noise]
beta = 0.5
kappa = 0.55
";

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: Config = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.run.out, "runs");
        assert_eq!(cfg.noise.n_bins, 8);
        assert_eq!(cfg.train.regime, "cad");
        assert_eq!(cfg.sample.steps, 250);
        assert_eq!(cfg.eval.k, 5);
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = format!("{MINIMAL}\n[train]\nsteps = 10\nlr_paek = 0.1\n");
        let err = toml::from_str::<Config>(&text).unwrap_err().to_string();
        assert!(err.contains("lr_paek"), "{err}");
        let text = format!("{MINIMAL}\n[trian]\nsteps = 10\n");
        assert!(toml::from_str::<Config>(&text).is_err());
    }

    #[test]
    fn invalid_fields_named_in_error() {
        let text = MINIMAL.replace("kappa = 0.55", "kappa = 1.5");
        let cfg: Config = toml::from_str(&text).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("noise.kappa"), "{err}");

        let text = format!("{MINIMAL}\n[train]\nregime = \"cadd\"\n");
        let cfg: Config = toml::from_str(&text).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("train.regime"), "{err}");
    }
}
