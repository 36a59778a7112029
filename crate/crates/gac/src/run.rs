//! Training and evaluation runs backed by files.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use gac_core::actor::GaussianPolicy;
use gac_core::envs::{make_env, Environment};
use gac_core::trainer::{evaluate, train, Evaluation, TrainConfig, TrainOutcome};
use gac_core::Error as CoreError;

use crate::config::format_config;
use crate::log::CsvLog;
use crate::tensor_io::{save_actor, save_critic};
use crate::{GacError, Result};

pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "log.csv";
pub const ACTOR_FILE: &str = "actor.txt";
pub const CRITIC_FILE: &str = "critic.txt";

/// Trains with `cfg`, writing the effective configuration, the log, and the
/// final actor and critic into `out_dir`. The log is flushed row by row, so a
/// failed run keeps everything logged before the failure.
pub fn train_to_dir(cfg: &TrainConfig, out_dir: &Path) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| GacError::io(out_dir, e))?;
    let cfg_path = out_dir.join(CONFIG_FILE);
    fs::write(&cfg_path, format_config(cfg)).map_err(|e| GacError::io(&cfg_path, e))?;
    let log_path = out_dir.join(LOG_FILE);
    let file = File::create(&log_path).map_err(|e| GacError::io(&log_path, e))?;
    let mut log = CsvLog::new(BufWriter::new(file)).map_err(|e| GacError::io(&log_path, e))?;
    let mut io_error = None;
    let mut sink = |row: &gac_core::trainer::LogRow| {
        log.write_row(row).map_err(|e| {
            io_error = Some(e);
            CoreError::InvalidArgument("log write failed".into())
        })
    };
    let outcome = train(cfg, &mut sink);
    if let Some(e) = io_error {
        return Err(GacError::io(&log_path, e));
    }
    let outcome = outcome.map_err(|e| match e.error {
        CoreError::SolverDiverged(_) | CoreError::NoConvergence(_) | CoreError::NotPositiveDefinite => GacError::Solver { step: e.step, source: e.error },
        other => GacError::Core(other),
    })?;
    save_actor(&out_dir.join(ACTOR_FILE), &outcome.actor)?;
    save_critic(&out_dir.join(CRITIC_FILE), &outcome.critic)?;
    Ok(outcome)
}

/// `runs/<env>-seed<k>` under the working directory.
pub fn default_out_dir(cfg: &TrainConfig) -> PathBuf {
    PathBuf::from("runs").join(format!("{}-seed{}", cfg.env, cfg.seed))
}

/// Mean-policy evaluation of a saved actor.
pub fn evaluate_saved(actor_path: &Path, env_name: &str, episodes: usize, seed: u64) -> Result<Evaluation> {
    let actor = crate::tensor_io::load_actor(actor_path)?;
    let mut env = make_env(env_name)?;
    let spec = env.spec();
    if spec.state_dim != actor.state_dim() || spec.action_dim != actor.action_dim() {
        return Err(GacError::InvalidConfig(format!(
            "actor maps {} states to {} actions but `{env_name}` has {} and {}",
            actor.state_dim(),
            actor.action_dim(),
            spec.state_dim,
            spec.action_dim
        )));
    }
    Ok(evaluate(&actor, env.as_mut(), episodes, seed)?)
}

/// Smallest and largest first state coordinate seen while running the mean
/// policy for `episodes` episodes.
pub fn visited_state_range(actor: &GaussianPolicy, env: &mut dyn Environment, episodes: usize, seed: u64) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..episodes as u64 {
        let mut s = env.reset(seed.wrapping_add(k));
        for _ in 0..env.spec().max_steps {
            lo = lo.min(s[0]);
            hi = hi.max(s[0]);
            let r = env.step(&actor.policy_mean(&s)?)?;
            s = r.next_state;
            if r.terminal {
                break;
            }
        }
    }
    Ok((lo, hi))
}

/// Gain `K` of the least-squares fit `a ≈ −K s` to the mean action of a
/// scalar-state, scalar-action actor at `points` evenly spaced states.
pub fn fitted_linear_gain(actor: &GaussianPolicy, lo: f64, hi: f64, points: usize) -> Result<f64> {
    if actor.state_dim() != 1 || actor.action_dim() != 1 || points < 2 || !(lo < hi) {
        return Err(GacError::InvalidConfig("gain fit needs a scalar actor and a nonempty range".into()));
    }
    let (mut sa, mut ss) = (0.0, 0.0);
    for i in 0..points {
        let s = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let a = actor.policy_mean(&[s])?[0];
        sa += s * a;
        ss += s * s;
    }
    Ok(-sa / ss)
}
