//! `key = value` run configuration.
//!
//! ```text
//! # lqr1d with a linear actor
//! env = lqr1d
//! seed = 3
//! total_steps = 20000
//! actor_hidden =
//! ```
//!
//! Blank lines and text after `#` are ignored. Every key is optional and
//! falls back to [`TrainConfig::default`]; unknown or repeated keys are
//! errors. `mode` is one of `gac-0`, `gac-1` or `gac-s`, the last one using
//! `expansion_samples` sampled actions. Hidden sizes are comma-separated and
//! may be empty.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use gac_core::guide::Expansion;
use gac_core::trainer::TrainConfig;

use crate::{GacError, Result};

pub const KEYS: &[&str] = &[
    "env",
    "seed",
    "total_steps",
    "epsilon",
    "mode",
    "expansion_samples",
    "gamma",
    "batch_size",
    "target_samples",
    "tau",
    "critic_lr",
    "actor_lr",
    "buffer_capacity",
    "critic_hidden",
    "actor_hidden",
    "warmup",
    "kappa_period",
    "eval_period",
    "eval_episodes",
    "state_noise",
];

const DEFAULT_EXPANSION_SAMPLES: usize = 10;

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| GacError::Config { line, message: format!("`{key}`: cannot parse `{value}`: {e}") })
}

fn parse_sizes(line: usize, key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|p| parse(line, key, p.trim())).collect()
}

pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut seen = HashSet::new();
    let mut mode: Option<(usize, String)> = None;
    let mut samples: Option<(usize, usize)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| GacError::Config { line, message: format!("expected `key = value`, found `{content}`") })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(GacError::Config { line, message: format!("unknown key `{key}`") });
        }
        if !seen.insert(key.to_string()) {
            return Err(GacError::Config { line, message: format!("`{key}` is set twice") });
        }
        match key {
            "env" => cfg.env = value.to_string(),
            "seed" => cfg.seed = parse(line, key, value)?,
            "total_steps" => cfg.total_steps = parse(line, key, value)?,
            "epsilon" => cfg.epsilon = parse(line, key, value)?,
            "mode" => mode = Some((line, value.to_ascii_lowercase())),
            "expansion_samples" => samples = Some((line, parse(line, key, value)?)),
            "gamma" => cfg.gamma = parse(line, key, value)?,
            "batch_size" => cfg.batch_size = parse(line, key, value)?,
            "target_samples" => cfg.target_samples = parse(line, key, value)?,
            "tau" => cfg.tau = parse(line, key, value)?,
            "critic_lr" => cfg.critic_lr = parse(line, key, value)?,
            "actor_lr" => cfg.actor_lr = parse(line, key, value)?,
            "buffer_capacity" => cfg.buffer_capacity = parse(line, key, value)?,
            "critic_hidden" => cfg.critic_hidden = parse_sizes(line, key, value)?,
            "actor_hidden" => cfg.actor_hidden = parse_sizes(line, key, value)?,
            "warmup" => cfg.warmup = parse(line, key, value)?,
            "kappa_period" => cfg.kappa_period = parse(line, key, value)?,
            "eval_period" => cfg.eval_period = parse(line, key, value)?,
            "eval_episodes" => cfg.eval_episodes = parse(line, key, value)?,
            "state_noise" => cfg.state_noise = parse(line, key, value)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    cfg.expansion = match mode.as_ref().map(|(l, m)| (*l, m.as_str())) {
        None | Some((_, "gac-0")) => Expansion::Mean,
        Some((_, "gac-1")) => Expansion::Sample,
        Some((_, "gac-s")) => Expansion::Averaged(samples.map_or(DEFAULT_EXPANSION_SAMPLES, |(_, s)| s)),
        Some((line, other)) => return Err(GacError::Config { line, message: format!("unknown mode `{other}`; use gac-0, gac-1 or gac-s") }),
    };
    if let Some((line, _)) = samples {
        if !matches!(cfg.expansion, Expansion::Averaged(_)) {
            return Err(GacError::Config { line, message: "`expansion_samples` only applies to mode gac-s".into() });
        }
    }
    cfg.validate().map_err(|e| GacError::InvalidConfig(e.to_string()))?;
    gac_core::envs::make_env(&cfg.env).map_err(|e| GacError::InvalidConfig(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| GacError::io(path, e))?;
    parse_config(&text)
}

fn join(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Writes every key, so the result parses back to `cfg`.
pub fn format_config(cfg: &TrainConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a string");
    kv("env", cfg.env.clone());
    kv("seed", cfg.seed.to_string());
    kv("total_steps", cfg.total_steps.to_string());
    kv("epsilon", format!("{:e}", cfg.epsilon));
    match cfg.expansion {
        Expansion::Mean => kv("mode", "gac-0".into()),
        Expansion::Sample => kv("mode", "gac-1".into()),
        Expansion::Averaged(k) => {
            kv("mode", "gac-s".into());
            kv("expansion_samples", k.to_string());
        }
    }
    kv("gamma", format!("{:e}", cfg.gamma));
    kv("batch_size", cfg.batch_size.to_string());
    kv("target_samples", cfg.target_samples.to_string());
    kv("tau", format!("{:e}", cfg.tau));
    kv("critic_lr", format!("{:e}", cfg.critic_lr));
    kv("actor_lr", format!("{:e}", cfg.actor_lr));
    kv("buffer_capacity", cfg.buffer_capacity.to_string());
    kv("critic_hidden", join(&cfg.critic_hidden));
    kv("actor_hidden", join(&cfg.actor_hidden));
    kv("warmup", cfg.warmup.to_string());
    kv("kappa_period", cfg.kappa_period.to_string());
    kv("eval_period", cfg.eval_period.to_string());
    kv("eval_episodes", cfg.eval_episodes.to_string());
    kv("state_noise", format!("{:e}", cfg.state_noise));
    s
}
