//! Training-run hyperparameters, config files, and Chinchilla token accounting.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{ScheduleKind, ScheduleSpec};

/// Tokens per parameter under the Chinchilla rule.
pub const CHINCHILLA_TOKENS_PER_PARAM: u64 = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub total_steps: u64,
    pub weight_decay: f64,
    pub schedule: ScheduleSpec,
    pub tokens_per_step: Option<u64>,
    pub param_count: Option<u64>,
    /// Set for presets whose schedule parameters are a best guess.
    pub approximate: bool,
    pub notes: Option<String>,
}

impl RunConfig {
    pub fn new(name: impl Into<String>, weight_decay: f64, schedule: ScheduleSpec) -> Self {
        RunConfig {
            name: name.into(),
            total_steps: schedule.total_steps,
            weight_decay,
            schedule,
            tokens_per_step: None,
            param_count: None,
            approximate: false,
            notes: None,
        }
    }

    /// Checks the schedule and that `weight_decay * lr_t < 1` at every step.
    pub fn validate(&self) -> Result<()> {
        if self.total_steps != self.schedule.total_steps {
            return Err(Error::Config(format!(
                "total_steps {} disagrees with schedule.total_steps {}",
                self.total_steps, self.schedule.total_steps
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        self.schedule.validate()?;
        for (i, lr) in self.schedule.rates().into_iter().enumerate() {
            let step = i as u64 + 1;
            if lr < 0.0 {
                return Err(Error::Validation {
                    step,
                    reason: format!("negative learning rate {lr}"),
                });
            }
            let factor = self.weight_decay * lr;
            if factor >= 1.0 {
                return Err(Error::Validation {
                    step,
                    reason: format!(
                        "weight_decay * lr = {} * {} = {factor} >= 1",
                        self.weight_decay, lr
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn lr(&self, step: u64) -> Result<f64> {
        self.schedule.eval_lr(step)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::format(e.to_string()))?;
        let cfg = file.into_config();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&ConfigFile::from_config(self)).map_err(|e| Error::format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path, self.to_toml_string()?.as_bytes())
    }
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    RunConfig::load(path)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    name: String,
    total_steps: u64,
    weight_decay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens_per_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    param_count: Option<u64>,
    #[serde(default)]
    approximate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    notes: Option<String>,
    schedule: ScheduleSection,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSection {
    kind: ScheduleKind,
    #[serde(default)]
    warmup_steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    peak_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    final_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    knots: Vec<(u64, f64)>,
}

impl ConfigFile {
    fn into_config(self) -> RunConfig {
        let s = self.schedule;
        let schedule = match s.kind {
            ScheduleKind::PiecewiseLinear => {
                let mut spec = ScheduleSpec::piecewise(s.knots, self.total_steps);
                if let Some(p) = s.peak_lr {
                    spec.peak_lr = p;
                }
                if let Some(f) = s.final_lr {
                    spec.final_lr = f;
                }
                spec
            }
            kind => {
                let peak = s.peak_lr.unwrap_or(0.0);
                ScheduleSpec {
                    kind,
                    warmup_steps: s.warmup_steps,
                    peak_lr: peak,
                    final_lr: s.final_lr.unwrap_or(if kind == ScheduleKind::Constant { peak } else { 0.0 }),
                    total_steps: self.total_steps,
                    knots: s.knots,
                }
            }
        };
        RunConfig {
            name: self.name,
            total_steps: self.total_steps,
            weight_decay: self.weight_decay,
            schedule,
            tokens_per_step: self.tokens_per_step,
            param_count: self.param_count,
            approximate: self.approximate,
            notes: self.notes,
        }
    }

    fn from_config(cfg: &RunConfig) -> Self {
        let s = &cfg.schedule;
        ConfigFile {
            name: cfg.name.clone(),
            total_steps: cfg.total_steps,
            weight_decay: cfg.weight_decay,
            tokens_per_step: cfg.tokens_per_step,
            param_count: cfg.param_count,
            approximate: cfg.approximate,
            notes: cfg.notes.clone(),
            schedule: ScheduleSection {
                kind: s.kind,
                warmup_steps: s.warmup_steps,
                peak_lr: Some(s.peak_lr),
                final_lr: Some(s.final_lr),
                knots: s.knots.clone(),
            },
        }
    }
}

/// Shipped run presets. Only step counts that are published are exact; the
/// schedules are approximations flagged with `approximate = true`.
pub mod presets {
    use super::RunConfig;
    use crate::error::{Error, Result};

    pub const NAMES: [&str; 4] = ["olmo-1b", "olmo-7b", "llama3-405b-like", "gpt3-124m-like"];

    pub fn source(name: &str) -> Option<&'static str> {
        Some(match name {
            "olmo-1b" => include_str!("../presets/olmo-1b.toml"),
            "olmo-7b" => include_str!("../presets/olmo-7b.toml"),
            "llama3-405b-like" => include_str!("../presets/llama3-405b-like.toml"),
            "gpt3-124m-like" => include_str!("../presets/gpt3-124m-like.toml"),
            _ => return None,
        })
    }

    pub fn load(name: &str) -> Result<RunConfig> {
        let text = source(name).ok_or_else(|| {
            Error::Argument(format!("unknown preset {name:?}; known: {}", NAMES.join(", ")))
        })?;
        RunConfig::from_toml_str(text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChinchillaAccount {
    pub param_count: u64,
    pub chinchilla_tokens: u64,
    pub trained_tokens: u64,
    pub multiple: f64,
}

pub fn chinchilla_account(param_count: u64, trained_tokens: u64) -> Result<ChinchillaAccount> {
    if param_count == 0 || trained_tokens == 0 {
        return Err(Error::arg("param_count and trained_tokens must be > 0"));
    }
    let chinchilla_tokens = param_count
        .checked_mul(CHINCHILLA_TOKENS_PER_PARAM)
        .ok_or_else(|| Error::arg("param_count too large"))?;
    Ok(ChinchillaAccount {
        param_count,
        chinchilla_tokens,
        trained_tokens,
        multiple: trained_tokens as f64 / chinchilla_tokens as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chinchilla_examples() {
        assert_eq!(chinchilla_account(124_000_000, 2_480_000_000).unwrap().multiple, 1.0);
        let c = chinchilla_account(70_000_000_000, 1_400_000_000_000).unwrap();
        assert_eq!(c.chinchilla_tokens, 1_400_000_000_000);
        assert_eq!(c.multiple, 1.0);
        let olmo = chinchilla_account(7_000_000_000, 2_460_000_000_000).unwrap();
        assert!((olmo.multiple - 17.5714).abs() < 1e-3, "{}", olmo.multiple);
        assert!(chinchilla_account(0, 10).is_err());
        assert!(chinchilla_account(10, 0).is_err());
    }

    #[test]
    fn presets_load_and_validate() {
        for name in presets::NAMES {
            let cfg = presets::load(name).unwrap();
            assert_eq!(cfg.name, name);
        }
        assert_eq!(presets::load("olmo-1b").unwrap().total_steps, 739_328);
        assert!(presets::load("gpt5").is_err());
    }

    #[test]
    fn rejects_decay_factor_at_or_above_one() {
        let text = r#"
            name = "bad"
            total_steps = 10
            weight_decay = 2.0
            [schedule]
            kind = "constant"
            peak_lr = 1.0
        "#;
        match RunConfig::from_toml_str(text) {
            Err(Error::Validation { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn parse_failure_is_format_error() {
        assert!(matches!(RunConfig::from_toml_str("name = "), Err(Error::Format(_))));
        assert!(matches!(
            RunConfig::from_toml_str("name = \"x\"\ntotal_steps = 3\nweight_decay = 0.1\nbogus = 1\n[schedule]\nkind = \"constant\"\npeak_lr = 0.1"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn minimal_file_round_trips() {
        let text = "name = \"tiny\"\ntotal_steps = 100\nweight_decay = 0.1\n[schedule]\nkind = \"constant\"\npeak_lr = 0.001\n";
        let cfg = RunConfig::from_toml_str(text).unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.schedule.final_lr, 0.001);
    }
}
