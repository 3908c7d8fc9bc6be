use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::context::ContextConfig;
use crate::corpus::VocabLimits;
use crate::error::{Error, Result};
use crate::nmt::{SizePreset, TrainOptions};
use crate::tensor::SgdSchedule;

/// Everything a run needs, read from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub hidden: usize,
    pub embed: usize,
    pub align: usize,
    pub dropout: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub base: SgdSchedule,
    pub lm: SgdSchedule,
    pub contextual: SgdSchedule,
    pub vocab: VocabLimits,
    pub context: ContextConfig,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SizePreset::DEFAULT;
        RunConfig {
            hidden: s.hidden,
            embed: s.embed,
            align: s.align,
            dropout: 0.2,
            clip_norm: 5.0,
            seed: 1,
            base: SgdSchedule::BASE,
            lm: SgdSchedule::BASE,
            contextual: SgdSchedule::CONTEXTUAL,
            vocab: VocabLimits::default(),
            context: ContextConfig::default(),
            train: None,
            dev: None,
            test: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "bad value {value:?} for {key}, expected true or false"
        ))),
    }
}

fn set_schedule(s: &mut SgdSchedule, field: &str, key: &str, value: &str) -> Result<()> {
    match field {
        "lr" => s.initial_lr = parse(key, value)?,
        "decay" => s.decay_factor = parse(key, value)?,
        "decay_start" => s.decay_start_epoch = parse(key, value)?,
        "epochs" => s.total_epochs = parse(key, value)?,
        _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
    }
    Ok(())
}

impl RunConfig {
    /// Applies one setting. Keys: `hidden embed align dropout clip_norm seed
    /// preset {base,lm,ctx}_{lr,decay,decay_start,epochs} vocab_min_count
    /// vocab_max_size source_strategy history_side injection ablation_mask
    /// local_prev_sentence_only train dev test`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "hidden" => self.hidden = parse(key, value)?,
            "embed" => self.embed = parse(key, value)?,
            "align" => self.align = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "preset" => {
                let p = match value {
                    "default" => SizePreset::DEFAULT,
                    "larger" => SizePreset::LARGER,
                    _ => {
                        return Err(Error::Config(format!(
                            "unknown preset {value:?}, expected default or larger"
                        )))
                    }
                };
                self.hidden = p.hidden;
                self.embed = p.embed;
                self.align = p.align;
            }
            "vocab_min_count" => self.vocab.min_count = Some(parse(key, value)?),
            "vocab_max_size" => self.vocab.max_size = Some(parse(key, value)?),
            "source_strategy" => self.context.source_strategy = value.parse()?,
            "history_side" => self.context.history_side = value.parse()?,
            "injection" => self.context.injection = value.parse()?,
            "ablation_mask" => self.context.ablation_mask = value.parse()?,
            "local_prev_sentence_only" => self.context.local_prev_sentence_only = parse_bool(key, value)?,
            "train" => self.train = Some(value.into()),
            "dev" => self.dev = Some(value.into()),
            "test" => self.test = Some(value.into()),
            _ => {
                let (sched, field) = if let Some(f) = key.strip_prefix("base_") {
                    (&mut self.base, f)
                } else if let Some(f) = key.strip_prefix("lm_") {
                    (&mut self.lm, f)
                } else if let Some(f) = key.strip_prefix("ctx_") {
                    (&mut self.contextual, f)
                } else {
                    return Err(Error::Config(format!("unknown config key {key:?}")));
                };
                set_schedule(sched, field, key, value)?;
            }
        }
        Ok(())
    }

    /// Defaults overridden by `text`. Blank lines and `#` comments are
    /// ignored.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(k.trim(), v).map_err(|e| match e {
                Error::Config(msg) => Error::Parse { line: n + 1, msg },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embed == 0 || self.align == 0 {
            return Err(Error::Config("hidden, embed and align sizes must be positive".into()));
        }
        self.context.validate()?;
        for opts in [self.base_options(), self.lm_options(), self.contextual_options()] {
            opts.validate()?;
        }
        Ok(())
    }

    pub fn base_options(&self) -> TrainOptions {
        TrainOptions {
            schedule: self.base,
            dropout: self.dropout,
            clip_norm: self.clip_norm,
        }
    }

    pub fn lm_options(&self) -> TrainOptions {
        TrainOptions {
            schedule: self.lm,
            ..self.base_options()
        }
    }

    pub fn contextual_options(&self) -> TrainOptions {
        TrainOptions {
            schedule: self.contextual,
            ..self.base_options()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{InjectionMode, SourceStrategy};

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!((c.hidden, c.embed, c.align, c.dropout), (256, 256, 128, 0.2));
        assert_eq!(c.base, SgdSchedule::BASE);
        assert_eq!(c.contextual, SgdSchedule::CONTEXTUAL);
    }

    #[test]
    fn parses_flat_files() {
        let c = RunConfig::parse_str(
            "# toy\npreset = larger\nctx_epochs = 3\nsource_strategy = hier_gate\ninjection=add_dec\n\nseed = 7 # root\n",
        )
        .unwrap();
        assert_eq!((c.hidden, c.align), (512, 256));
        assert_eq!(c.contextual.total_epochs, 3);
        assert_eq!(c.context.source_strategy, SourceStrategy::HierGate);
        assert_eq!(c.context.injection, InjectionMode::AddDec);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn rejects_unknown_keys_with_line_numbers() {
        match RunConfig::parse_str("hidden = 8\nwidth = 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::parse_str("hidden = many").is_err());
        assert!(RunConfig::parse_str("dropout = 1.5").is_err());
    }
}
