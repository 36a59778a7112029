//! Seedable desk-scale control tasks.
//!
//! | name        | state                     | action        | horizon |
//! |-------------|---------------------------|---------------|---------|
//! | `lqr1d`     | `s`                       | `[-3, 3]`     | 50      |
//! | `lqr2d`     | `(s₁, s₂)`                | `[-3, 3]²`    | 50      |
//! | `pendulum`  | `(cos θ, sin θ, θ̇)`      | `[-2, 2]`     | 200     |
//! | `reacher2d` | `(x, y, ẋ, ẏ, gx, gy)`    | `[-1, 1]²`    | 200     |
//!
//! LQR tasks follow `s' = A s + B a` with reward `−sᵀQ s − aᵀR a`; `lqr1d` uses
//! `A = B = Q = R = 1` and `lqr2d` a discretized double integrator
//! `A = [[1, 0.1], [0, 1]]`, `B = Q = R = I`. Initial states are uniform in
//! `[-1, 1]` per coordinate.
//!
//! The pendulum angle is measured from upright, so `θ̈ = (g/ℓ) sin θ + u/(mℓ²)`
//! with `g = 10`, `m = ℓ = 1`, integrated by semi-implicit Euler at `Δt = 0.05`
//! with the velocity clamped to `[-8, 8]`. Reward is
//! `−(wrap(θ)² + 0.1 θ̇² + 0.001 u²)`; resets draw `θ ~ U[-π, π]`,
//! `θ̇ ~ U[-1, 1]`.
//!
//! The reacher is a planar double integrator with acceleration actions at
//! `Δt = 0.05`; reward `−‖pos − goal‖² − 0.01‖a‖²`. Position and velocity start
//! at zero and the goal is uniform in `[-1, 1]²`.
//!
//! Episodes end only at the horizon. Optional additive Gaussian state noise
//! with standard deviation `noise_std` is applied after each step.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::error::check_dim;
use crate::linalg::{Cholesky, Matrix};
use crate::math;
use crate::{Error, Result, SeededRng};

/// Per-coordinate action bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionBox {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl ActionBox {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        check_dim(low.len(), high.len())?;
        if low.is_empty() || low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidArgument("action box needs low < high in every coordinate".into()));
        }
        Ok(Self { low, high })
    }

    pub fn symmetric(dim: usize, bound: f64) -> Self {
        Self::new(vec![-bound; dim], vec![bound; dim]).expect("positive symmetric bound")
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn half_range(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.dim() && a.iter().zip(&self.low).zip(&self.high).all(|((v, l), h)| *v >= *l && *v <= *h)
    }

    pub fn clip(&self, a: &mut [f64]) {
        for ((v, l), h) in a.iter_mut().zip(&self.low).zip(&self.high) {
            *v = v.max(*l).min(*h);
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| rng.gen_range(*l..*h)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_box: ActionBox,
    pub max_steps: usize,
    pub reward: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Set when the episode is over; every task here ends only at its horizon.
    pub terminal: bool,
}

pub trait Environment {
    fn spec(&self) -> &EnvSpec;
    /// Starts an episode from the task's initial distribution, seeded.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Advances one step. Callers keep `a` inside the action box.
    fn step(&mut self, a: &[f64]) -> Result<StepResult>;
}

pub const ENV_NAMES: [&str; 4] = ["lqr1d", "lqr2d", "pendulum", "reacher2d"];

pub fn make_env(name: &str) -> Result<Box<dyn Environment + Send>> {
    make_env_with_noise(name, 0.0)
}

pub fn make_env_with_noise(name: &str, noise_std: f64) -> Result<Box<dyn Environment + Send>> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidArgument("state noise must be finite and non-negative".into()));
    }
    let mut env: Box<dyn Environment + Send> = match name {
        "lqr1d" => Box::new(LinearQuadratic::scalar()),
        "lqr2d" => Box::new(LinearQuadratic::double_integrator()),
        "pendulum" => Box::new(Pendulum::new()),
        "reacher2d" => Box::new(Reacher::new()),
        other => return Err(Error::UnknownEnvironment(other.to_string())),
    };
    if noise_std > 0.0 {
        env = Box::new(Noisy { inner: env, std: noise_std, rng: crate::seeded_rng(0) });
    }
    Ok(env)
}

struct Noisy {
    inner: Box<dyn Environment + Send>,
    std: f64,
    rng: SeededRng,
}

impl Environment for Noisy {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = SeededRng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        self.inner.reset(seed)
    }

    fn step(&mut self, a: &[f64]) -> Result<StepResult> {
        let mut r = self.inner.step(a)?;
        for v in r.next_state.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *v += self.std * z;
        }
        Ok(r)
    }
}

fn finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState)
    }
}

/// Linear dynamics with quadratic cost.
#[derive(Clone, Debug)]
pub struct LinearQuadratic {
    spec: EnvSpec,
    a: Matrix,
    b: Matrix,
    q: Matrix,
    r: Matrix,
    state: Vec<f64>,
    t: usize,
}

impl LinearQuadratic {
    pub fn new(name: &str, a: Matrix, b: Matrix, q: Matrix, r: Matrix, action_bound: f64, horizon: usize) -> Result<Self> {
        let ds = a.rows();
        let da = b.cols();
        check_dim(ds, a.cols())?;
        check_dim(ds, b.rows())?;
        check_dim(ds, q.rows())?;
        check_dim(ds, q.cols())?;
        check_dim(da, r.rows())?;
        check_dim(da, r.cols())?;
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        let spec = EnvSpec {
            name: name.to_string(),
            state_dim: ds,
            action_dim: da,
            action_box: ActionBox::symmetric(da, action_bound),
            max_steps: horizon,
            reward: "-(s'Qs + a'Ra)",
        };
        Ok(Self { spec, a, b, q, r, state: vec![0.0; ds], t: 0 })
    }

    /// `lqr1d`
    pub fn scalar() -> Self {
        let one = || Matrix::identity(1);
        Self::new("lqr1d", one(), one(), one(), one(), 3.0, 50).expect("consistent shapes")
    }

    /// `lqr2d`
    pub fn double_integrator() -> Self {
        let a = Matrix::from_rows(&[[1.0, 0.1], [0.0, 1.0]]);
        Self::new("lqr2d", a, Matrix::identity(2), Matrix::identity(2), Matrix::identity(2), 3.0, 50).expect("consistent shapes")
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    /// Puts the system in a given state, e.g. to replay a rollout.
    pub fn set_state(&mut self, s: &[f64]) -> Result<()> {
        check_dim(self.spec.state_dim, s.len())?;
        self.state.copy_from_slice(s);
        self.t = 0;
        Ok(())
    }
}

impl Environment for LinearQuadratic {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = crate::seeded_rng(seed);
        self.state = (0..self.spec.state_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        self.t = 0;
        self.state.clone()
    }

    fn step(&mut self, act: &[f64]) -> Result<StepResult> {
        check_dim(self.spec.action_dim, act.len())?;
        let reward = -(self.q.quad_form(&self.state) + self.r.quad_form(act));
        let mut next = self.a.mul_vec(&self.state);
        for (n, v) in next.iter_mut().zip(self.b.mul_vec(act)) {
            *n += v;
        }
        finite(&next)?;
        self.state = next;
        self.t += 1;
        Ok(StepResult {
            next_state: self.state.clone(),
            reward,
            terminal: self.t >= self.spec.max_steps,
        })
    }
}

/// Gain `K` of the discounted infinite-horizon optimum `a = −K s`.
///
/// Iterates `P ← Q + γAᵀPA − γ²AᵀPB(R + γBᵀPB)⁻¹BᵀPA` from `P = Q` until the
/// largest change is below `1e-12` relative to `max(1, ‖P‖∞)`, then returns
/// `K = γ(R + γBᵀPB)⁻¹BᵀPA`.
pub fn lqr_optimal_gain(env: &LinearQuadratic, gamma: f64) -> Result<Matrix> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument("discount must lie in (0, 1)".into()));
    }
    const MAX_ITERS: usize = 100_000;
    let (a, b, q, r) = (&env.a, &env.b, &env.q, &env.r);
    let at = a.transpose();
    let bt = b.transpose();
    let gain = |p: &Matrix| -> Result<Matrix> {
        let s = r.add(&bt.matmul(p).matmul(b).scale(gamma));
        let chol = Cholesky::new(&s)?;
        let rhs = bt.matmul(p).matmul(a).scale(gamma);
        let mut k = Matrix::zeros(rhs.rows(), rhs.cols());
        for j in 0..rhs.cols() {
            let col: Vec<f64> = (0..rhs.rows()).map(|i| rhs[(i, j)]).collect();
            for (i, v) in chol.solve(&col).into_iter().enumerate() {
                k[(i, j)] = v;
            }
        }
        Ok(k)
    };
    let step = |p: &Matrix| -> Result<Matrix> {
        let k = gain(p)?;
        // γAᵀPB K equals the subtracted term.
        let mut next = q.add(&at.matmul(p).matmul(a).scale(gamma));
        next = next.sub(&at.matmul(p).matmul(b).matmul(&k).scale(gamma));
        next.symmetrize();
        Ok(next)
    };
    let mut p = q.clone();
    for _ in 0..MAX_ITERS {
        let next = step(&p)?;
        let delta = next.max_abs_diff(&p);
        p = next;
        if !p.is_finite() {
            return Err(Error::NoConvergence(MAX_ITERS));
        }
        if delta <= 1e-12 * p.norm_inf().max(1.0) {
            return gain(&p);
        }
    }
    Err(Error::NoConvergence(MAX_ITERS))
}

pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = math::TWO_PI;
    let mut x = (theta + core::f64::consts::PI) % two_pi;
    if x < 0.0 {
        x += two_pi;
    }
    x - core::f64::consts::PI
}

#[derive(Clone, Debug)]
pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    t: usize,
}

impl Pendulum {
    pub const GRAVITY: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum".to_string(),
                state_dim: 3,
                action_dim: 1,
                action_box: ActionBox::symmetric(1, Self::MAX_TORQUE),
                max_steps: 200,
                reward: "-(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 u^2)",
            },
            theta: 0.0,
            theta_dot: 0.0,
            t: 0,
        }
    }

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.t = 0;
    }

    pub fn angle(&self) -> f64 {
        self.theta
    }

    pub fn angular_velocity(&self) -> f64 {
        self.theta_dot
    }

    /// `½θ̇² + (g/ℓ) cos θ`, per unit `mℓ²`; conserved by the continuous
    /// dynamics without torque.
    pub fn energy(&self) -> f64 {
        0.5 * self.theta_dot * self.theta_dot + Self::GRAVITY / Self::LENGTH * math::cos(self.theta)
    }

    fn observe(&self) -> Vec<f64> {
        vec![math::cos(self.theta), math::sin(self.theta), self.theta_dot]
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = crate::seeded_rng(seed);
        let pi = core::f64::consts::PI;
        self.theta = rng.gen_range(-pi..pi);
        self.theta_dot = rng.gen_range(-1.0..1.0);
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, a: &[f64]) -> Result<StepResult> {
        check_dim(1, a.len())?;
        let u = a[0];
        let th = wrap_angle(self.theta);
        let reward = -(th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);
        let acc = Self::GRAVITY / Self::LENGTH * math::sin(self.theta) + u / (Self::MASS * Self::LENGTH * Self::LENGTH);
        self.theta_dot = (self.theta_dot + Self::DT * acc).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.theta += Self::DT * self.theta_dot;
        self.t += 1;
        let next = self.observe();
        finite(&next)?;
        Ok(StepResult { next_state: next, reward, terminal: self.t >= self.spec.max_steps })
    }
}

#[derive(Clone, Debug)]
pub struct Reacher {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    t: usize,
}

impl Reacher {
    pub const DT: f64 = 0.05;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "reacher2d".to_string(),
                state_dim: 6,
                action_dim: 2,
                action_box: ActionBox::symmetric(2, 1.0),
                max_steps: 200,
                reward: "-(|pos - goal|^2 + 0.01 |a|^2)",
            },
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal: [0.0; 2],
            t: 0,
        }
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2], goal: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
        self.goal = goal;
        self.t = 0;
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1], self.goal[0], self.goal[1]]
    }
}

impl Default for Reacher {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Reacher {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = crate::seeded_rng(seed);
        self.pos = [0.0; 2];
        self.vel = [0.0; 2];
        self.goal = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, a: &[f64]) -> Result<StepResult> {
        check_dim(2, a.len())?;
        let mut reward = 0.0;
        for i in 0..2 {
            let d = self.pos[i] - self.goal[i];
            reward -= d * d + 0.01 * a[i] * a[i];
        }
        for i in 0..2 {
            self.vel[i] += Self::DT * a[i];
            self.pos[i] += Self::DT * self.vel[i];
        }
        self.t += 1;
        let next = self.observe();
        finite(&next)?;
        Ok(StepResult { next_state: next, reward, terminal: self.t >= self.spec.max_steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lqr_step_arithmetic() {
        let mut env = LinearQuadratic::scalar();
        env.set_state(&[0.5]).unwrap();
        let r = env.step(&[-0.5]).unwrap();
        assert_eq!(r.next_state, vec![0.0]);
        assert_eq!(r.reward, -(0.25 + 0.25));
        assert!(!r.terminal);
    }

    #[test]
    fn resets_are_seeded_and_in_range() {
        for name in ENV_NAMES {
            let mut a = make_env(name).unwrap();
            let mut b = make_env(name).unwrap();
            assert_eq!(a.reset(17), b.reset(17));
        }
        let mut env = LinearQuadratic::double_integrator();
        for seed in 0..100 {
            assert!(env.reset(seed).iter().all(|v| (-1.0..1.0).contains(v)));
        }
        let mut p = Pendulum::new();
        for seed in 0..100 {
            p.reset(seed);
            assert!(p.angle().abs() <= core::f64::consts::PI && p.angular_velocity().abs() <= 1.0);
        }
        assert!(matches!(make_env("cartpole"), Err(Error::UnknownEnvironment(_))));
    }

    #[test]
    fn horizon_ends_episode() {
        let mut env = make_env("lqr1d").unwrap();
        env.reset(0);
        for t in 1..=50 {
            assert_eq!(env.step(&[0.0]).unwrap().terminal, t == 50);
        }
    }

    #[test]
    fn pendulum_upright_equilibrium() {
        let mut p = Pendulum::new();
        p.set_state(0.0, 0.0);
        let r = p.step(&[0.0]).unwrap();
        assert!(p.angle().abs() < 1e-9);
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.next_state, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn pendulum_energy_drift() {
        let mut p = Pendulum::new();
        // Semi-implicit Euler conserves E + (Δt/2)·θ̇·(g/ℓ)·sin θ up to O(Δt²); the
        // plain mechanical energy oscillates around it by O(Δt) without drifting.
        let shadow = |p: &Pendulum| p.energy() + 0.5 * Pendulum::DT * p.angular_velocity() * 10.0 * p.angle().sin();
        for seed in 0..50 {
            p.reset(seed);
            let e0 = shadow(&p);
            let mut worst = 0.0f64;
            let mut raw = 0.0f64;
            for _ in 0..200 {
                p.step(&[0.0]).unwrap();
                worst = worst.max((shadow(&p) - e0).abs());
                raw = raw.max((p.energy() - e0).abs());
            }
            assert!(worst / 200.0 < 1e-3, "seed {seed}: {worst}");
            assert!(raw < 2.0, "seed {seed}: {raw}");
        }
    }

    #[test]
    fn reacher_at_goal() {
        let mut r = Reacher::new();
        r.set_state([0.3, -0.2], [0.0, 0.0], [0.3, -0.2]);
        assert_eq!(r.step(&[0.0, 0.0]).unwrap().reward, 0.0);
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let x = k as f64 * 0.7;
            let w = wrap_angle(x);
            assert!((-core::f64::consts::PI..core::f64::consts::PI).contains(&w));
            assert!(((x - w) / math::TWO_PI - libm::round((x - w) / math::TWO_PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn riccati_gain() {
        let k = lqr_optimal_gain(&LinearQuadratic::scalar(), 0.99).unwrap();
        // Positive root of γP² + (1 − 2γ)P − 1 = 0, then K = γP / (1 + γP).
        let g: f64 = 0.99;
        let p = ((2.0 * g - 1.0) + ((1.0 - 2.0 * g).powi(2) + 4.0 * g).sqrt()) / (2.0 * g);
        assert!((k[(0, 0)] - g * p / (1.0 + g * p)).abs() < 1e-10);

        let zero_q = LinearQuadratic::new("z", Matrix::identity(1), Matrix::identity(1), Matrix::zeros(1, 1), Matrix::identity(1), 1.0, 10).unwrap();
        assert_eq!(lqr_optimal_gain(&zero_q, 0.9).unwrap()[(0, 0)], 0.0);
        assert!(lqr_optimal_gain(&zero_q, 1.0).is_err());
    }

    #[test]
    fn action_box_rules() {
        assert!(ActionBox::new(vec![1.0], vec![1.0]).is_err());
        let b = ActionBox::new(vec![-1.0, 0.0], vec![3.0, 2.0]).unwrap();
        assert_eq!(b.center(), vec![1.0, 1.0]);
        assert_eq!(b.half_range(), vec![2.0, 1.0]);
        let mut a = [5.0, -1.0];
        b.clip(&mut a);
        assert_eq!(a, [3.0, 0.0]);
    }
}
