//! Action-value critics.
//!
//! [`CriticNetwork`] is the learned `Q̂_ν(s, a)`; [`TargetCritic`] is its slowly
//! tracking copy used in Bellman targets. [`QuadraticCritic`] evaluates an exact
//! quadratic in the action and exposes its true Hessian, which is what the
//! closed-form identities are checked against.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::actor::GaussianPolicy;
use crate::error::check_dim;
use crate::linalg::{dot, Matrix};
use crate::nn::{Adam, Mlp, OutputMap};
use crate::replay::Transition;
use crate::{Error, Result};

/// Value and action-gradient interface shared by learned and analytic critics.
pub trait ActionValue {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn q_value(&self, s: &[f64], a: &[f64]) -> Result<f64>;
    fn q_grad_action(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>>;

    /// Values (`n`) and action-gradients (`n × action_dim`) for row-major
    /// batches of states and actions.
    fn q_value_grad_batch(&self, states: &[f64], actions: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let (ds, da) = (self.state_dim(), self.action_dim());
        check_dim(n * ds, states.len())?;
        check_dim(n * da, actions.len())?;
        let mut values = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n * da);
        for i in 0..n {
            let (s, a) = (&states[i * ds..(i + 1) * ds], &actions[i * da..(i + 1) * da]);
            values.push(self.q_value(s, a)?);
            grads.extend(self.q_grad_action(s, a)?);
        }
        Ok((values, grads))
    }

    /// The true action Hessian when it is available in closed form.
    fn exact_hessian(&self, _s: &[f64]) -> Option<Matrix> {
        None
    }
}

/// `−g gᵀ`
pub fn gauss_newton_hessian(g: &[f64]) -> Matrix {
    Matrix::outer(g, g).scale(-1.0)
}

/// `r + γ·mean(values)`, or `r` alone on terminal transitions.
pub fn bellman_target(reward: f64, terminal: bool, gamma: f64, values: &[f64]) -> f64 {
    if terminal || values.is_empty() {
        return reward;
    }
    reward + gamma * values.iter().sum::<f64>() / values.len() as f64
}

fn join_rows(states: &[f64], actions: &[f64], n: usize, ds: usize, da: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(n * (ds + da));
    for i in 0..n {
        x.extend_from_slice(&states[i * ds..(i + 1) * ds]);
        x.extend_from_slice(&actions[i * da..(i + 1) * da]);
    }
    x
}

// Shared by the learned critic and its target copy.
fn mlp_values(net: &Mlp, ds: usize, da: usize, states: &[f64], actions: &[f64], n: usize) -> Result<Vec<f64>> {
    check_dim(n * ds, states.len())?;
    check_dim(n * da, actions.len())?;
    net.forward(&join_rows(states, actions, n, ds, da), n)
}

fn mlp_value_grads(net: &Mlp, ds: usize, da: usize, states: &[f64], actions: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(n * ds, states.len())?;
    check_dim(n * da, actions.len())?;
    let cache = net.forward_cache(&join_rows(states, actions, n, ds, da), n)?;
    let ones = vec![1.0; n];
    let gx = net.backward(&cache, &ones, None, true).expect("input gradient requested");
    let width = ds + da;
    let mut grads = Vec::with_capacity(n * da);
    for row in gx.chunks(width) {
        grads.extend_from_slice(&row[ds..]);
    }
    Ok((cache.output().to_vec(), grads))
}

/// Feed-forward `Q̂_ν(s, a)` on the concatenated input `[s; a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticNetwork {
    state_dim: usize,
    action_dim: usize,
    net: Mlp,
    adam: Adam,
}

impl CriticNetwork {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let net = Mlp::init(&Self::sizes(state_dim, action_dim, hidden), OutputMap::Identity, rng);
        Self::from_mlp(state_dim, action_dim, net).expect("sizes built from the dimensions")
    }

    pub fn zeros(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Self {
        let net = Mlp::zeros(&Self::sizes(state_dim, action_dim, hidden), OutputMap::Identity);
        Self::from_mlp(state_dim, action_dim, net).expect("sizes built from the dimensions")
    }

    /// Wraps an existing network whose input is `state_dim + action_dim` wide
    /// with a scalar, unsquashed output.
    pub fn from_mlp(state_dim: usize, action_dim: usize, net: Mlp) -> Result<Self> {
        check_dim(state_dim + action_dim, net.input_dim())?;
        check_dim(1, net.output_dim())?;
        if *net.output_map() != OutputMap::Identity {
            return Err(Error::InvalidArgument("critic output must be linear".into()));
        }
        let adam = Adam::new(net.num_params());
        Ok(Self { state_dim, action_dim, net, adam })
    }

    fn sizes(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        sizes
    }

    pub fn mlp(&self) -> &Mlp {
        &self.net
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn q_values(&self, states: &[f64], actions: &[f64], n: usize) -> Result<Vec<f64>> {
        mlp_values(&self.net, self.state_dim, self.action_dim, states, actions, n)
    }

    /// One Adam step on `mean (Q̂(s_i, a_i) − y_i)²`; returns the loss before the step.
    pub fn regress(&mut self, states: &[f64], actions: &[f64], targets: &[f64], lr: f64) -> Result<f64> {
        let n = targets.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        check_dim(n * self.state_dim, states.len())?;
        check_dim(n * self.action_dim, actions.len())?;
        let x = join_rows(states, actions, n, self.state_dim, self.action_dim);
        let cache = self.net.forward_cache(&x, n)?;
        let mut loss = 0.0;
        let d_out: Vec<f64> = cache
            .output()
            .iter()
            .zip(targets)
            .map(|(q, y)| {
                let e = q - y;
                loss += e * e;
                2.0 * e / n as f64
            })
            .collect();
        let mut grads = vec![0.0; self.net.num_params()];
        self.net.backward(&cache, &d_out, Some(&mut grads), false);
        self.adam.step(self.net.params_mut(), &grads, lr);
        Ok(loss / n as f64)
    }
}

impl ActionValue for CriticNetwork {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn q_value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.q_values(s, a, 1)?[0])
    }

    fn q_grad_action(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        Ok(self.q_value_grad_batch(s, a, 1)?.1)
    }

    fn q_value_grad_batch(&self, states: &[f64], actions: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        mlp_value_grads(&self.net, self.state_dim, self.action_dim, states, actions, n)
    }
}

/// Parameters `ν̄` tracking a [`CriticNetwork`].
#[derive(Clone, Debug, PartialEq)]
pub struct TargetCritic {
    state_dim: usize,
    action_dim: usize,
    net: Mlp,
}

impl TargetCritic {
    pub fn from_network(source: &CriticNetwork) -> Self {
        Self {
            state_dim: source.state_dim,
            action_dim: source.action_dim,
            net: source.net.clone(),
        }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.net
    }

    pub fn q_values(&self, states: &[f64], actions: &[f64], n: usize) -> Result<Vec<f64>> {
        mlp_values(&self.net, self.state_dim, self.action_dim, states, actions, n)
    }
}

impl ActionValue for TargetCritic {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn q_value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.q_values(s, a, 1)?[0])
    }

    fn q_grad_action(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        Ok(self.q_value_grad_batch(s, a, 1)?.1)
    }

    fn q_value_grad_batch(&self, states: &[f64], actions: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        mlp_value_grads(&self.net, self.state_dim, self.action_dim, states, actions, n)
    }
}

/// `ν̄ ← τν + (1 − τ)ν̄`
pub fn target_sync(net: &CriticNetwork, target: &mut TargetCritic, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument("mixing rate must lie in (0, 1]".into()));
    }
    if net.net.sizes() != target.net.sizes() {
        return Err(Error::ShapeMismatch {
            expected: net.net.num_params(),
            found: target.net.num_params(),
        });
    }
    for (t, v) in target.net.params_mut().iter_mut().zip(net.net.params()) {
        *t = tau * v + (1.0 - tau) * *t;
    }
    Ok(())
}

/// One critic step on a mini-batch.
///
/// Targets are `y = r + γ·(1/M)·Σ_m Q̂_ν̄(s', a'_m)` with `a'_m` drawn from the
/// actor at `s'` and clipped to its action box; terminal transitions use
/// `y = r`. Returns the mean squared Bellman error before the step.
#[allow(clippy::too_many_arguments)]
pub fn critic_update<R: Rng + ?Sized>(
    net: &mut CriticNetwork,
    target: &TargetCritic,
    batch: &[&Transition],
    actor: &GaussianPolicy,
    samples: usize,
    gamma: f64,
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if samples == 0 || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument("critic update needs M >= 1 and 0 < gamma < 1".into()));
    }
    let (ds, da) = (net.state_dim, net.action_dim);
    let n = batch.len();
    let mut states = Vec::with_capacity(n * ds);
    let mut actions = Vec::with_capacity(n * da);
    let mut next = Vec::with_capacity(n * ds);
    for t in batch {
        check_dim(ds, t.state.len())?;
        check_dim(da, t.action.len())?;
        check_dim(ds, t.next_state.len())?;
        states.extend_from_slice(&t.state);
        actions.extend_from_slice(&t.action);
        next.extend_from_slice(&t.next_state);
    }

    let means = actor.policy_means_flat(&next, n)?;
    let chol = actor.cholesky();
    let bounds = actor.action_box();
    let mut next_rep = Vec::with_capacity(n * samples * ds);
    let mut next_actions = Vec::with_capacity(n * samples * da);
    let mut z = vec![0.0; da];
    for i in 0..n {
        let s = &next[i * ds..(i + 1) * ds];
        let mu = &means[i * da..(i + 1) * da];
        for _ in 0..samples {
            z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
            let mut a = chol.mul_lower(&z);
            for (ai, mi) in a.iter_mut().zip(mu) {
                *ai += mi;
            }
            bounds.clip(&mut a);
            next_rep.extend_from_slice(s);
            next_actions.extend_from_slice(&a);
        }
    }
    let values = target.q_values(&next_rep, &next_actions, n * samples)?;
    let targets: Vec<f64> = batch
        .iter()
        .zip(values.chunks(samples))
        .map(|(t, v)| bellman_target(t.reward, t.terminal, gamma, v))
        .collect();
    net.regress(&states, &actions, &targets, lr)
}

type MatrixFn = Box<dyn Fn(&[f64]) -> Matrix + Send + Sync>;
type VectorFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `Q(s, a) = ½aᵀH(s)a + aᵀψ(s) + ξ(s)`, exact value, gradient and Hessian.
pub struct QuadraticCritic {
    state_dim: usize,
    action_dim: usize,
    h: MatrixFn,
    psi: VectorFn,
    xi: ScalarFn,
}

impl core::fmt::Debug for QuadraticCritic {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("QuadraticCritic")
            .field("state_dim", &self.state_dim)
            .field("action_dim", &self.action_dim)
            .finish_non_exhaustive()
    }
}

impl QuadraticCritic {
    /// State-independent quadratic.
    pub fn fixed(state_dim: usize, h: Matrix, psi: Vec<f64>, xi: f64) -> Result<Self> {
        check_dim(h.rows(), psi.len())?;
        check_dim(h.rows(), h.cols())?;
        if !h.is_symmetric() {
            return Err(Error::InvalidArgument("quadratic critic curvature must be symmetric".into()));
        }
        let action_dim = psi.len();
        Ok(Self {
            state_dim,
            action_dim,
            h: Box::new(move |_| h.clone()),
            psi: Box::new(move |_| psi.clone()),
            xi: Box::new(move |_| xi),
        })
    }

    /// Coefficients computed from the state by callbacks. The curvature
    /// callback must return symmetric matrices.
    pub fn state_dependent(
        state_dim: usize,
        action_dim: usize,
        h: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static,
        psi: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        xi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            state_dim,
            action_dim,
            h: Box::new(h),
            psi: Box::new(psi),
            xi: Box::new(xi),
        }
    }

    /// Normalized-advantage form `Q = −½(a − b(s))ᵀW(s)(a − b(s)) + V(s)`,
    /// i.e. `H = −W`, `ψ = W b`, `ξ = V − ½ bᵀW b`.
    pub fn naf(
        state_dim: usize,
        action_dim: usize,
        w: impl Fn(&[f64]) -> Matrix + Send + Sync + Clone + 'static,
        b: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + Clone + 'static,
        v: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let (w1, w2, b1) = (w.clone(), w.clone(), b.clone());
        Self::state_dependent(
            state_dim,
            action_dim,
            move |s| w(s).scale(-1.0),
            move |s| w1(s).mul_vec(&b(s)),
            move |s| {
                let bs = b1(s);
                v(s) - 0.5 * w2(s).quad_form(&bs)
            },
        )
    }

    pub fn hessian(&self, s: &[f64]) -> Matrix {
        (self.h)(s)
    }

    pub fn psi(&self, s: &[f64]) -> Vec<f64> {
        (self.psi)(s)
    }

    pub fn xi(&self, s: &[f64]) -> f64 {
        (self.xi)(s)
    }

    fn check(&self, s: &[f64], a: &[f64]) -> Result<()> {
        check_dim(self.state_dim, s.len())?;
        check_dim(self.action_dim, a.len())
    }
}

impl ActionValue for QuadraticCritic {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn q_value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        self.check(s, a)?;
        Ok(0.5 * self.hessian(s).quad_form(a) + dot(a, &self.psi(s)) + self.xi(s))
    }

    fn q_grad_action(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check(s, a)?;
        let mut g = self.hessian(s).mul_vec(a);
        for (gi, p) in g.iter_mut().zip(self.psi(s)) {
            *gi += p;
        }
        Ok(g)
    }

    fn exact_hessian(&self, s: &[f64]) -> Option<Matrix> {
        Some(self.hessian(s))
    }
}

/// Convenience constructor for a state-independent quadratic critic.
pub fn quadratic_critic(state_dim: usize, h: Matrix, psi: Vec<f64>, xi: f64) -> Result<QuadraticCritic> {
    QuadraticCritic::fixed(state_dim, h, psi, xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::ActionBox;

    #[test]
    fn zero_and_affine_networks() {
        let net = CriticNetwork::zeros(2, 1, &[8, 8]);
        assert_eq!(net.q_value(&[0.3, -2.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(net.q_grad_action(&[0.3, -2.0], &[1.0]).unwrap(), vec![0.0]);

        let mut lin = CriticNetwork::zeros(2, 1, &[]);
        lin.mlp_mut().params_mut().copy_from_slice(&[0.5, -1.0, 2.0, 0.25]);
        let q = lin.q_value(&[1.0, 2.0], &[3.0]).unwrap();
        assert_eq!(q, 0.5 - 2.0 + 6.0 + 0.25);
        assert_eq!(lin.q_grad_action(&[1.0, 2.0], &[3.0]).unwrap(), vec![2.0]);
        assert!(matches!(lin.q_value(&[1.0], &[3.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn batch_gradients_match_single_calls() {
        let mut rng = crate::seeded_rng(2);
        let net = CriticNetwork::new(3, 2, &[16, 16], &mut rng);
        let s: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let a: Vec<f64> = (0..8).map(|i| (i as f64 * 0.91).cos()).collect();
        let (v, g) = net.q_value_grad_batch(&s, &a, 4).unwrap();
        for i in 0..4 {
            let (si, ai) = (&s[i * 3..i * 3 + 3], &a[i * 2..i * 2 + 2]);
            assert!((net.q_value(si, ai).unwrap() - v[i]).abs() < 1e-14);
            let gi = net.q_grad_action(si, ai).unwrap();
            assert!((gi[0] - g[2 * i]).abs() < 1e-14 && (gi[1] - g[2 * i + 1]).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_newton_examples() {
        assert_eq!(gauss_newton_hessian(&[0.0, 0.0]), Matrix::zeros(2, 2));
        assert_eq!(gauss_newton_hessian(&[1.0, 2.0]), Matrix::from_rows(&[[-1.0, -2.0], [-2.0, -4.0]]));
    }

    #[test]
    fn bellman_targets() {
        assert!((bellman_target(1.0, false, 0.99, &[0.5, 1.5]) - 1.99).abs() < 1e-15);
        assert_eq!(bellman_target(-1.0, true, 0.99, &[100.0, 7.0]), -1.0);
    }

    #[test]
    fn quadratic_adapter() {
        let q = quadratic_critic(0, Matrix::scaled_identity(2, -1.0), vec![0.0; 2], 0.0).unwrap();
        assert_eq!(q.q_value(&[], &[1.0, 1.0]).unwrap(), -1.0);
        assert_eq!(q.q_grad_action(&[], &[0.3, -0.7]).unwrap(), vec![-0.3, 0.7]);

        let naf = QuadraticCritic::naf(
            1,
            2,
            |s: &[f64]| Matrix::from_rows(&[[2.0 + s[0] * s[0], 0.3], [0.3, 1.0]]),
            |s: &[f64]| vec![s[0], -2.0 * s[0]],
            |s: &[f64]| s[0] + 1.0,
        );
        let s = [0.7];
        let g = naf.q_grad_action(&s, &[0.7, -1.4]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
        assert!((naf.q_value(&s, &[0.7, -1.4]).unwrap() - 1.7).abs() < 1e-14);
        assert!(QuadraticCritic::fixed(0, Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]), vec![0.0; 2], 0.0).is_err());
    }

    #[test]
    fn target_sync_rules() {
        let mut rng = crate::seeded_rng(4);
        let net = CriticNetwork::new(2, 1, &[4], &mut rng);
        let other = CriticNetwork::new(2, 1, &[4], &mut rng);
        let mut target = TargetCritic::from_network(&other);
        target_sync(&net, &mut target, 1.0).unwrap();
        assert_eq!(target.mlp().params(), net.mlp().params());
        target_sync(&net, &mut target, 0.5).unwrap();
        assert_eq!(target.mlp().params(), net.mlp().params());

        let mut target = TargetCritic::from_network(&other);
        let gap0: Vec<f64> = net.mlp().params().iter().zip(other.mlp().params()).map(|(a, b)| a - b).collect();
        let k = 300;
        for _ in 0..k {
            target_sync(&net, &mut target, 0.001).unwrap();
        }
        let decay = 0.999f64.powi(k);
        for ((v, t), g0) in net.mlp().params().iter().zip(target.mlp().params()).zip(&gap0) {
            assert!(((v - t) - decay * g0).abs() < 1e-12);
        }
        assert!(target_sync(&net, &mut target, 0.0).is_err());
        let wrong = CriticNetwork::new(2, 1, &[5], &mut rng);
        assert!(matches!(target_sync(&wrong, &mut target, 0.1), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn critic_update_targets_and_errors() {
        let mut rng = crate::seeded_rng(8);
        let bounds = ActionBox::new(vec![-1.0], vec![1.0]).unwrap();
        let actor = GaussianPolicy::new(1, &[], bounds, &mut rng);
        let mut net = CriticNetwork::zeros(1, 1, &[]);
        // Target critic constant 1.0 so y = r + γ.
        let mut tnet = CriticNetwork::zeros(1, 1, &[]);
        tnet.mlp_mut().params_mut()[2] = 1.0;
        let target = TargetCritic::from_network(&tnet);
        let t1 = Transition::new(vec![0.0], vec![0.0], 1.0, vec![0.5], false);
        let t2 = Transition::new(vec![0.0], vec![0.0], -1.0, vec![0.5], true);
        let loss = critic_update(&mut net, &target, &[&t1, &t2], &actor, 3, 0.99, 1e-3, &mut rng).unwrap();
        assert!((loss - (1.99f64.powi(2) + 1.0) / 2.0).abs() < 1e-12);
        assert_eq!(critic_update(&mut net, &target, &[], &actor, 3, 0.99, 1e-3, &mut rng), Err(Error::EmptyBatch));
    }

    #[test]
    fn regression_reduces_error() {
        let mut rng = crate::seeded_rng(12);
        let mut net = CriticNetwork::new(2, 1, &[32, 32], &mut rng);
        let n = 128;
        let s: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|i| s[2 * i] - 0.5 * s[2 * i + 1] * a[i] - a[i] * a[i]).collect();
        let first = net.regress(&s, &a, &y, 1e-3).unwrap();
        let mut last = first;
        for _ in 0..2000 {
            last = net.regress(&s, &a, &y, 1e-3).unwrap();
        }
        assert!(last * 10.0 <= first, "{first} -> {last}");
    }
}
