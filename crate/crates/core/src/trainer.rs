//! The training loop: collect one transition, then learn once, per step.
//!
//! Learning samples a mini-batch, takes a critic step and moves the target
//! critic, computes guide actors for the batch, takes one actor step towards
//! the guide means and replaces the actor covariance with the mean guide
//! covariance. The entropy bound follows
//! `κ = max(0.99(E − E₀) + E₀, E₀)` with `E₀` the entropy of `𝒩(0, 0.01 I)`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::actor::GaussianPolicy;
use crate::critic::{critic_update, target_sync, CriticNetwork, TargetCritic};
use crate::envs::{make_env_with_noise, Environment};
use crate::gauss::isotropic_entropy;
use crate::guide::{compute_guides, Expansion, GuideConfig};
use crate::math;
use crate::replay::{ReplayBuffer, Transition};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub env: String,
    pub seed: u64,
    pub total_steps: usize,
    pub epsilon: f64,
    pub expansion: Expansion,
    pub gamma: f64,
    pub batch_size: usize,
    pub target_samples: usize,
    pub tau: f64,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub buffer_capacity: usize,
    pub critic_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub warmup: usize,
    pub kappa_period: usize,
    pub eval_period: usize,
    pub eval_episodes: usize,
    /// Standard deviation of additive state noise; zero disables it.
    pub state_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: String::from("pendulum"),
            seed: 0,
            total_steps: 100_000,
            epsilon: 1e-4,
            expansion: Expansion::Mean,
            gamma: 0.99,
            batch_size: 256,
            target_samples: 10,
            tau: 0.001,
            critic_lr: 1e-3,
            actor_lr: 1e-4,
            buffer_capacity: 1_000_000,
            critic_hidden: vec![64, 64],
            actor_hidden: vec![64, 64],
            warmup: 1000,
            kappa_period: 5000,
            eval_period: 5000,
            eval_episodes: 10,
            state_noise: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.total_steps == 0
            || self.batch_size == 0
            || self.target_samples == 0
            || self.buffer_capacity == 0
            || self.kappa_period == 0
            || self.eval_period == 0
            || self.eval_episodes == 0
        {
            return bad("counts must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.critic_lr > 0.0 && self.actor_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.state_noise >= 0.0 && self.state_noise.is_finite()) {
            return bad("state noise must be non-negative");
        }
        if self.expansion == Expansion::Averaged(0) || self.critic_hidden.contains(&0) || self.actor_hidden.contains(&0) {
            return bad("sizes must be positive");
        }
        Ok(())
    }
}

/// One logged point. Loss, multiplier and KL columns are means over the
/// learning steps since the previous row (NaN when there were none).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub test_return_mean: f64,
    pub test_return_stderr: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub eta: f64,
    pub omega: f64,
    pub kl_realized: f64,
    pub entropy: f64,
    pub kappa: f64,
}

/// `max(0.99(E − E₀) + E₀, E₀)`
pub fn kappa_schedule(current_entropy: f64, base_entropy: f64) -> f64 {
    (0.99 * (current_entropy - base_entropy) + base_entropy).max(base_entropy)
}

/// Entropy of the base policy `𝒩(0, 0.01 I)` in `action_dim` dimensions.
pub fn base_entropy(action_dim: usize) -> f64 {
    isotropic_entropy(action_dim, 0.01)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub mean: f64,
    pub stderr: f64,
    pub returns: Vec<f64>,
}

/// Undiscounted returns of the mean policy over `episodes` full episodes.
/// Episode `k` starts from a reset seed drawn from a generator seeded by
/// `seed`, so the same seed always sees the same initial states.
pub fn evaluate(actor: &GaussianPolicy, env: &mut dyn Environment, episodes: usize, seed: u64) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("at least one evaluation episode".into()));
    }
    let mut seeds = crate::seeded_rng(seed);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.reset(seeds.gen());
        let mut total = 0.0;
        for _ in 0..env.spec().max_steps {
            let a = actor.policy_mean(&s)?;
            let r = env.step(&a)?;
            total += r.reward;
            s = r.next_state;
            if r.terminal {
                break;
            }
        }
        returns.push(total);
    }
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let stderr = if episodes > 1 {
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
        math::sqrt(var / n)
    } else {
        0.0
    };
    Ok(Evaluation { mean, stderr, returns })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub actor: GaussianPolicy,
    pub critic: CriticNetwork,
    pub rows: Vec<LogRow>,
    pub learning_steps: usize,
    /// Largest batch-mean KL among learning steps whose dual converged.
    pub max_kl_converged: f64,
    pub unconverged_duals: usize,
}

/// Error raised during training together with the rows logged before it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainError {
    pub error: Error,
    pub step: usize,
}

#[derive(Default)]
struct Interval {
    count: usize,
    critic_loss: f64,
    actor_loss: f64,
    eta: f64,
    omega: f64,
    kl: f64,
}

impl Interval {
    fn mean(&self, v: f64) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            v / self.count as f64
        }
    }
}

const EVAL_SALT: u64 = 0x5eed_e7a1_0000_0001;

/// Runs training, handing each log row to `sink` as soon as it is produced.
pub fn train(cfg: &TrainConfig, sink: &mut dyn FnMut(&LogRow) -> Result<()>) -> core::result::Result<TrainOutcome, TrainError> {
    let fail = |error: Error, step: usize| TrainError { error, step };
    cfg.validate().map_err(|e| fail(e, 0))?;
    let mut env = make_env_with_noise(&cfg.env, cfg.state_noise).map_err(|e| fail(e, 0))?;
    let mut eval_env = make_env_with_noise(&cfg.env, cfg.state_noise).map_err(|e| fail(e, 0))?;
    let spec = env.spec().clone();
    let (ds, da) = (spec.state_dim, spec.action_dim);

    let mut rng = crate::seeded_rng(cfg.seed);
    let mut actor = GaussianPolicy::new(ds, &cfg.actor_hidden, spec.action_box.clone(), &mut rng);
    let mut critic = CriticNetwork::new(ds, da, &cfg.critic_hidden, &mut rng);
    let mut target = TargetCritic::from_network(&critic);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, ds, da);
    let e0 = base_entropy(da);
    let mut kappa = kappa_schedule(actor.entropy(), e0);
    let eval_seed = cfg.seed ^ EVAL_SALT;

    let mut rows = Vec::new();
    let mut interval = Interval::default();
    let mut emit = |step: usize, actor: &GaussianPolicy, interval: &Interval, kappa: f64, rows: &mut Vec<LogRow>, env: &mut dyn Environment| -> Result<()> {
        let ev = evaluate(actor, env, cfg.eval_episodes, eval_seed)?;
        let row = LogRow {
            step,
            test_return_mean: ev.mean,
            test_return_stderr: ev.stderr,
            critic_loss: interval.mean(interval.critic_loss),
            actor_loss: interval.mean(interval.actor_loss),
            eta: interval.mean(interval.eta),
            omega: interval.mean(interval.omega),
            kl_realized: interval.mean(interval.kl),
            entropy: actor.entropy(),
            kappa,
        };
        sink(&row)?;
        rows.push(row);
        Ok(())
    };
    emit(0, &actor, &interval, kappa, &mut rows, eval_env.as_mut()).map_err(|e| fail(e, 0))?;

    let mut state = env.reset(rng.gen());
    let mut learning_steps = 0;
    let mut max_kl_converged = 0.0f64;
    let mut unconverged_duals = 0;
    for t in 1..=cfg.total_steps {
        let action = if t <= cfg.warmup {
            spec.action_box.sample_uniform(&mut rng)
        } else {
            actor.act(&state, &mut rng, true).map_err(|e| fail(e, t))?
        };
        let step = env.step(&action).map_err(|e| fail(e, t))?;
        // Episodes only end at the horizon, which is a truncation: the value of
        // the next state is still bootstrapped.
        let tr = Transition::new(core::mem::take(&mut state), action, step.reward, step.next_state.clone(), false);
        buffer.push(tr).map_err(|e| fail(e, t))?;
        state = if step.terminal { env.reset(rng.gen()) } else { step.next_state };

        if t > cfg.warmup {
            let mut learn = || -> Result<(f64, f64, crate::guide::DualSolution)> {
                let batch = buffer.sample(cfg.batch_size, &mut rng)?;
                let closs = critic_update(&mut critic, &target, &batch, &actor, cfg.target_samples, cfg.gamma, cfg.critic_lr, &mut rng)?;
                target_sync(&critic, &mut target, cfg.tau)?;
                let states: Vec<&[f64]> = batch.iter().map(|b| b.state.as_slice()).collect();
                let gcfg = GuideConfig::new(cfg.epsilon, kappa, cfg.expansion)?;
                let gb = compute_guides(&critic, &actor, &states, &gcfg, &mut rng)?;
                let targets: Vec<&[f64]> = gb.guides.iter().map(|g| g.mean.as_slice()).collect();
                let aloss = actor.fit_mse(&states, &targets, cfg.actor_lr)?;
                actor.update_covariance(&gb.guides)?;
                Ok((closs, aloss, gb.dual))
            };
            let (closs, aloss, dual) = learn().map_err(|e| fail(e, t))?;
            learning_steps += 1;
            if dual.converged {
                max_kl_converged = max_kl_converged.max(dual.kl);
            } else {
                unconverged_duals += 1;
            }
            interval.count += 1;
            interval.critic_loss += closs;
            interval.actor_loss += aloss;
            interval.eta += dual.eta;
            interval.omega += dual.omega;
            interval.kl += dual.kl;
        }

        if t % cfg.kappa_period == 0 {
            kappa = kappa_schedule(actor.entropy(), e0);
        }
        if t % cfg.eval_period == 0 || t == cfg.total_steps {
            emit(t, &actor, &interval, kappa, &mut rows, eval_env.as_mut()).map_err(|e| fail(e, t))?;
            interval = Interval::default();
        }
    }

    Ok(TrainOutcome { actor, critic, rows, learning_steps, max_kl_converged, unconverged_duals })
}
