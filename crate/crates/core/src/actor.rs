//! Parameterized Gaussian actor `𝒩(a | φ_θ(s), Σ)` with a state-independent
//! covariance.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::envs::ActionBox;
use crate::error::check_dim;
use crate::gauss::Gaussian;
use crate::guide::{DualSolution, GuideEntry};
use crate::linalg::{Cholesky, Matrix};
use crate::nn::{Adam, Mlp, OutputMap};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    state_dim: usize,
    bounds: ActionBox,
    mean: Mlp,
    cov: Matrix,
    chol: Cholesky,
    adam: Adam,
}

/// Loss value and parameter gradient of a supervised actor loss.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

pub(crate) fn flatten<S: AsRef<[f64]>>(rows: &[S], dim: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        check_dim(dim, r.as_ref().len())?;
        out.extend_from_slice(r.as_ref());
    }
    Ok(out)
}

impl GaussianPolicy {
    /// Mean network `[state_dim, hidden.., action_dim]` with a `tanh` output
    /// scaled to the box; `Σ = I`. An empty `hidden` gives a linear map
    /// squashed by the output `tanh`.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: &[usize], bounds: ActionBox, rng: &mut R) -> Self {
        let sizes = Self::sizes(state_dim, hidden, bounds.dim());
        let mean = Mlp::init(&sizes, Self::output_map(&bounds), rng);
        Self::from_parts(state_dim, mean, Matrix::identity(bounds.dim()), bounds).expect("consistent construction")
    }

    pub fn from_parts(state_dim: usize, mean: Mlp, cov: Matrix, bounds: ActionBox) -> Result<Self> {
        check_dim(state_dim, mean.input_dim())?;
        check_dim(bounds.dim(), mean.output_dim())?;
        if *mean.output_map() != Self::output_map(&bounds) {
            return Err(Error::InvalidArgument("actor mean must end in a tanh scaled to the action box".into()));
        }
        check_dim(bounds.dim(), cov.rows())?;
        if !cov.is_symmetric() {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let (chol, cov) = Cholesky::with_jitter(&cov)?;
        let adam = Adam::new(mean.num_params());
        Ok(Self { state_dim, bounds, mean, cov, chol, adam })
    }

    fn sizes(state_dim: usize, hidden: &[usize], action_dim: usize) -> Vec<usize> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        sizes
    }

    pub fn output_map(bounds: &ActionBox) -> OutputMap {
        OutputMap::ScaledTanh { center: bounds.center(), half_range: bounds.half_range() }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn action_box(&self) -> &ActionBox {
        &self.bounds
    }

    pub fn mean_network(&self) -> &Mlp {
        &self.mean
    }

    pub fn mean_network_mut(&mut self) -> &mut Mlp {
        &mut self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.cov
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// Replaces `Σ`, with the usual single jitter retry.
    pub fn set_covariance(&mut self, cov: Matrix) -> Result<()> {
        check_dim(self.action_dim(), cov.rows())?;
        if !cov.is_symmetric() {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let (chol, cov) = Cholesky::with_jitter(&cov)?;
        self.chol = chol;
        self.cov = cov;
        Ok(())
    }

    pub fn entropy(&self) -> f64 {
        let d = self.action_dim() as f64;
        0.5 * (d * crate::math::ln(crate::math::TWO_PI * core::f64::consts::E) + self.chol.log_det())
    }

    pub fn policy_mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.state_dim, s.len())?;
        self.mean.forward(s, 1)
    }

    pub fn policy_means<S: AsRef<[f64]>>(&self, states: &[S]) -> Result<Vec<Vec<f64>>> {
        let flat = flatten(states, self.state_dim)?;
        let out = self.policy_means_flat(&flat, states.len())?;
        Ok(out.chunks(self.action_dim().max(1)).map(|c| c.to_vec()).collect())
    }

    /// Means for a row-major `n × state_dim` batch.
    pub fn policy_means_flat(&self, states: &[f64], n: usize) -> Result<Vec<f64>> {
        self.mean.forward(states, n)
    }

    /// The actor's action distribution at `s`.
    pub fn distribution(&self, s: &[f64]) -> Result<Gaussian> {
        Gaussian::new(self.policy_mean(s)?, self.cov.clone())
    }

    /// A sampled and clipped action when exploring, the mean otherwise.
    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R, explore: bool) -> Result<Vec<f64>> {
        let mut a = self.policy_mean(s)?;
        if explore {
            let z: Vec<f64> = (0..a.len()).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)).collect();
            for (ai, li) in a.iter_mut().zip(self.chol.mul_lower(&z)) {
                *ai += li;
            }
            self.bounds.clip(&mut a);
        }
        Ok(a)
    }

    /// `Σ_n J_nᵀ d_n`: vector-Jacobian product of the mean network over a
    /// batch, with `d` given per state (`n × action_dim`).
    pub fn mean_vjp(&self, states: &[f64], n: usize, d: &[f64]) -> Result<Vec<f64>> {
        check_dim(n * self.action_dim(), d.len())?;
        let cache = self.mean.forward_cache(states, n)?;
        let mut grad = vec![0.0; self.mean.num_params()];
        self.mean.backward(&cache, d, Some(&mut grad), false);
        Ok(grad)
    }

    /// `½ mean ‖φ_θ(s) − φ₊‖²` and its gradient, targets held constant.
    pub fn mse_gradient<S: AsRef<[f64]>, T: AsRef<[f64]>>(&self, states: &[S], targets: &[T]) -> Result<LossGradient> {
        let n = states.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        check_dim(n, targets.len())?;
        let da = self.action_dim();
        let x = flatten(states, self.state_dim)?;
        let y = flatten(targets, da)?;
        let cache = self.mean.forward_cache(&x, n)?;
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let d: Vec<f64> = cache
            .output()
            .iter()
            .zip(&y)
            .map(|(p, t)| {
                let e = p - t;
                loss += e * e;
                e * inv_n
            })
            .collect();
        let mut grad = vec![0.0; self.mean.num_params()];
        self.mean.backward(&cache, &d, Some(&mut grad), false);
        Ok(LossGradient { loss: 0.5 * loss * inv_n, grad })
    }

    /// One Adam step on the mean-squared error to the guide means; returns the
    /// loss before the step.
    pub fn fit_mse<S: AsRef<[f64]>, T: AsRef<[f64]>>(&mut self, states: &[S], targets: &[T], lr: f64) -> Result<f64> {
        let lg = self.mse_gradient(states, targets)?;
        self.adam.step(self.mean.params_mut(), &lg.grad, lr);
        Ok(lg.loss)
    }

    /// `mean (φ_θ(s) − φ₊)ᵀ F (φ_θ(s) − φ₊)` and its gradient for per-state
    /// symmetric weights `F`.
    pub fn wmse_gradient<S: AsRef<[f64]>, T: AsRef<[f64]>>(&self, states: &[S], targets: &[T], weights: &[Matrix]) -> Result<LossGradient> {
        let n = states.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        check_dim(n, targets.len())?;
        check_dim(n, weights.len())?;
        let da = self.action_dim();
        let x = flatten(states, self.state_dim)?;
        let y = flatten(targets, da)?;
        let cache = self.mean.forward_cache(&x, n)?;
        let out = cache.output();
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut d = Vec::with_capacity(n * da);
        for i in 0..n {
            check_dim(da, weights[i].rows())?;
            check_dim(da, weights[i].cols())?;
            let e: Vec<f64> = (0..da).map(|j| out[i * da + j] - y[i * da + j]).collect();
            let fe = weights[i].mul_vec(&e);
            loss += crate::linalg::dot(&e, &fe);
            d.extend(fe.iter().map(|v| 2.0 * v * inv_n));
        }
        let mut grad = vec![0.0; self.mean.num_params()];
        self.mean.backward(&cache, &d, Some(&mut grad), false);
        Ok(LossGradient { loss: loss * inv_n, grad })
    }

    /// One Adam step on the weighted error with `F = (η + ω)Σ₊⁻¹` rebuilt from
    /// each guide; returns the loss before the step.
    pub fn fit_wmse<S: AsRef<[f64]>>(&mut self, states: &[S], guides: &[GuideEntry], duals: &DualSolution, lr: f64) -> Result<f64> {
        let c = duals.eta + duals.omega;
        let weights = guides
            .iter()
            .map(|g| Cholesky::new(&g.cov).map(|ch| ch.inverse().scale(c)))
            .collect::<Result<Vec<_>>>()?;
        let targets: Vec<&[f64]> = guides.iter().map(|g| g.mean.as_slice()).collect();
        let lg = self.wmse_gradient(states, &targets, &weights)?;
        self.adam.step(self.mean.params_mut(), &lg.grad, lr);
        Ok(lg.loss)
    }

    /// `Σ ← mean Σ₊(s_n)`
    pub fn update_covariance(&mut self, guides: &[GuideEntry]) -> Result<()> {
        if guides.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let d = self.action_dim();
        let mut acc = Matrix::zeros(d, d);
        for g in guides {
            check_dim(d, g.cov.rows())?;
            acc = acc.add(&g.cov);
        }
        let mut mean = acc.scale(1.0 / guides.len() as f64);
        mean.symmetrize();
        self.set_covariance(mean)
    }
}
