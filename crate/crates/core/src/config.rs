//! Flat `key=value` run configuration.
//!
//! Field names mirror [`TrainConfig`]; a few extra keys describe where the
//! prompt set comes from. Blank lines and `#` comments are ignored, unknown
//! keys are rejected. Omitted keys keep their defaults.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::env::{generate_prompt_set, PassRateTargets, PromptSet};
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum PromptSource {
    File(PathBuf),
    Generate {
        num_prompts: usize,
        num_candidates: usize,
        targets: PassRateTargets,
        seed: u64,
    },
}

impl Default for PromptSource {
    fn default() -> Self {
        Self::Generate {
            num_prompts: 256,
            num_candidates: 16,
            targets: PassRateTargets::Grid { lo: 0.05, hi: 0.95 },
            seed: 0,
        }
    }
}

impl PromptSource {
    /// Relative file paths resolve against `base`.
    pub fn load(&self, base: Option<&Path>) -> Result<PromptSet> {
        match self {
            Self::File(path) => {
                let path = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                PromptSet::read_text(BufReader::new(File::open(path)?))
            }
            Self::Generate {
                num_prompts,
                num_candidates,
                targets,
                seed,
            } => generate_prompt_set(*num_prompts, *num_candidates, targets, *seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub prompts: PromptSource,
}

fn parse_value<V: FromStr>(line: usize, key: &str, raw: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| Error::Parse {
        line,
        msg: format!("{key}: {e}"),
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut file = None;
        let (mut num_prompts, mut num_candidates, mut targets, mut prompt_seed) = match cfg.prompts
        {
            PromptSource::Generate {
                num_prompts,
                num_candidates,
                ref targets,
                seed,
            } => (num_prompts, num_candidates, targets.clone(), seed),
            PromptSource::File(_) => unreachable!(),
        };
        let mut exit_condition: Option<crate::sampler::ExitCondition> = None;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected key=value, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let t = &mut cfg.train;
            match key {
                "algorithm" => t.algorithm = parse_value(line, key, value)?,
                "group_size" => t.sampler.group_size = parse_value(line, key, value)?,
                "samples_per_round" => t.sampler.samples_per_round = parse_value(line, key, value)?,
                "num_rounds" => t.sampler.num_rounds = parse_value(line, key, value)?,
                "exit_condition" => exit_condition = Some(parse_value(line, key, value)?),
                "eps_low" => t.clip.eps_low = parse_value(line, key, value)?,
                "eps_high" => t.clip.eps_high = parse_value(line, key, value)?,
                "entropy_coeff" => t.clip.entropy_coeff = parse_value(line, key, value)?,
                "learning_rate" => t.learning_rate = parse_value(line, key, value)?,
                "num_steps" => t.num_steps = parse_value(line, key, value)?,
                "batch_prompts" => t.batch_prompts = parse_value(line, key, value)?,
                "seed" => t.seed = parse_value(line, key, value)?,
                "updates_per_batch" => t.updates_per_batch = parse_value(line, key, value)?,
                "optimizer" => t.optimizer = parse_value(line, key, value)?,
                "weight_decay" => t.weight_decay = parse_value(line, key, value)?,
                "advantage_std" => t.advantage_std = parse_value(line, key, value)?,
                "grpo_epsilon" => t.grpo_epsilon = parse_value(line, key, value)?,
                "entropy_warmup_steps" => t.entropy_warmup_steps = parse_value(line, key, value)?,
                "entropy_warmup" => t.entropy_warmup = parse_value(line, key, value)?,
                "prompts_file" => file = Some(PathBuf::from(value)),
                "num_prompts" => num_prompts = parse_value(line, key, value)?,
                "num_candidates" => num_candidates = parse_value(line, key, value)?,
                "pass_rate" => targets = parse_value(line, key, value)?,
                "prompt_seed" => prompt_seed = parse_value(line, key, value)?,
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown key {other:?}"),
                    })
                }
            }
        }

        cfg.train = cfg.train.normalized();
        if let Some(exit) = exit_condition {
            if exit != cfg.train.sampler.exit_condition {
                return Err(Error::TrainConfig(format!(
                    "exit_condition={exit} conflicts with algorithm={}",
                    cfg.train.algorithm
                )));
            }
        }
        cfg.prompts = match file {
            Some(path) => PromptSource::File(path),
            None => PromptSource::Generate {
                num_prompts,
                num_candidates,
                targets,
                seed: prompt_seed,
            },
        };
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Full rendering, parseable by [`RunConfig::parse`].
    pub fn to_kv(&self) -> String {
        let mut out = self.train.to_kv();
        match &self.prompts {
            PromptSource::File(p) => out += &format!("prompts_file={}\n", p.display()),
            PromptSource::Generate {
                num_prompts,
                num_candidates,
                targets,
                seed,
            } => {
                out += &format!(
                    "num_prompts={num_prompts}\nnum_candidates={num_candidates}\npass_rate={targets}\nprompt_seed={seed}\n"
                );
            }
        }
        out
    }
}
