//! Guide actors from quadratic models of the critic.
//!
//! For each state the critic is replaced by a quadratic model
//! `½aᵀH₀a + aᵀψ₀ + ξ₀`. Maximizing its expectation under a Gaussian subject to
//! a KL bound `ε` to the current actor and an entropy bound `κ` gives the guide
//!
//! ```text
//! F = ηΣ⁻¹ − H₀,  L = ηΣ⁻¹φ + ψ₀,  φ₊ = F⁻¹L,  Σ₊ = (η + ω)F⁻¹
//! ```
//!
//! where `(η, ω)` minimize a convex two-variable dual averaged over the batch.
//!
//! The dual is evaluated in whitened coordinates: with `Σ = LLᵀ` and the
//! eigen-decomposition `−LᵀH₀L = VΛVᵀ`, each state contributes through
//! `η + λᵢ` alone, so one evaluation costs `O(d)` per state after an `O(d³)`
//! setup. Its gradient is available in closed form,
//! `∂/∂η = ε − mean KL(π̃ ‖ π)` and `∂/∂ω = mean H(π̃) − κ`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::actor::{flatten, GaussianPolicy};
use crate::critic::{gauss_newton_hessian, ActionValue};
use crate::error::check_dim;
use crate::gauss::Gaussian;
use crate::linalg::{dot, symmetric_eigen, Cholesky, Matrix};
use crate::math;
use crate::{Error, Result};

/// Lower bound on the KL multiplier.
pub const ETA_MIN: f64 = 1e-10;
/// Lower bound on the entropy multiplier.
pub const OMEGA_MIN: f64 = 1e-10;
/// Starting value of both multipliers.
pub const DUAL_INIT: f64 = 0.05;
/// Stopping rule: the mean KL is within `DUAL_KL_RTOL·ε` of `ε` and the mean
/// entropy within `DUAL_ENTROPY_TOL` of `κ`, unless the multiplier sits at its
/// floor.
pub const DUAL_KL_RTOL: f64 = 1e-4;
pub const DUAL_ENTROPY_TOL: f64 = 1e-5;
/// A slack constraint is settled once `multiplier × slack` falls below this
/// fraction of the dual value.
pub const DUAL_SLACK_TOL: f64 = 1e-12;
pub const DUAL_MAX_ITERS: usize = 200;

/// Where the critic is expanded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expansion {
    /// At the actor mean (GAC-0).
    Mean,
    /// At one action sampled from the actor (GAC-1).
    Sample,
    /// Averaged over this many sampled actions (GAC-S).
    Averaged(usize),
}

/// Curvature used in the quadratic model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Curvature {
    /// `H₀ = −g gᵀ`
    GaussNewton,
    /// The critic's own Hessian; only critics reporting one qualify.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuideConfig {
    pub epsilon: f64,
    pub kappa: f64,
    pub expansion: Expansion,
    pub curvature: Curvature,
}

impl GuideConfig {
    pub fn new(epsilon: f64, kappa: f64, expansion: Expansion) -> Result<Self> {
        let cfg = Self { epsilon, kappa, expansion, curvature: Curvature::GaussNewton };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_curvature(mut self, curvature: Curvature) -> Self {
        self.curvature = curvature;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument("KL bound must be positive and finite".into()));
        }
        if self.kappa.is_nan() {
            return Err(Error::InvalidArgument("entropy bound is NaN".into()));
        }
        if self.expansion == Expansion::Averaged(0) {
            return Err(Error::InvalidArgument("averaged expansion needs at least one sample".into()));
        }
        Ok(())
    }
}

/// `½aᵀHa + aᵀψ + ξ`, anchored at the action(s) it was expanded around.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorModel {
    pub h: Matrix,
    pub psi: Vec<f64>,
    pub xi: f64,
    pub anchors: Vec<Vec<f64>>,
}

impl TaylorModel {
    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    pub fn value(&self, a: &[f64]) -> f64 {
        0.5 * self.h.quad_form(a) + dot(a, &self.psi) + self.xi
    }

    pub fn gradient(&self, a: &[f64]) -> Vec<f64> {
        let mut g = self.h.mul_vec(a);
        for (gi, p) in g.iter_mut().zip(&self.psi) {
            *gi += p;
        }
        g
    }

    /// Model built from the critic's value `q`, gradient `g` and curvature `h`
    /// at `a0`: `ψ = g − H a₀`, `ξ = ½a₀ᵀHa₀ − a₀ᵀg + q`.
    pub fn from_expansion(a0: &[f64], q: f64, g: &[f64], h: Matrix) -> Self {
        let ha = h.mul_vec(a0);
        let psi: Vec<f64> = g.iter().zip(&ha).map(|(gi, hi)| gi - hi).collect();
        let xi = 0.5 * dot(a0, &ha) - dot(a0, g) + q;
        Self { h, psi, xi, anchors: vec![a0.to_vec()] }
    }

    /// Componentwise average of models of equal dimension.
    pub fn average(models: &[TaylorModel]) -> Result<Self> {
        let first = models.first().ok_or(Error::EmptyBatch)?;
        let d = first.dim();
        let mut h = Matrix::zeros(d, d);
        let mut psi = vec![0.0; d];
        let mut xi = 0.0;
        let mut anchors = Vec::with_capacity(models.len());
        for m in models {
            check_dim(d, m.dim())?;
            h = h.add(&m.h);
            for (p, q) in psi.iter_mut().zip(&m.psi) {
                *p += q;
            }
            xi += m.xi;
            anchors.extend(m.anchors.iter().cloned());
        }
        let k = 1.0 / models.len() as f64;
        let mut h = h.scale(k);
        h.symmetrize();
        psi.iter_mut().for_each(|p| *p *= k);
        Ok(Self { h, psi, xi: xi * k, anchors })
    }
}

fn curvature_at<C: ActionValue + ?Sized>(critic: &C, s: &[f64], g: &[f64], curvature: Curvature) -> Result<Matrix> {
    match curvature {
        Curvature::GaussNewton => Ok(gauss_newton_hessian(g)),
        Curvature::Exact => critic
            .exact_hessian(s)
            .ok_or_else(|| Error::InvalidArgument("critic has no exact Hessian".into())),
    }
}

/// Gauss-Newton model of the critic around `a0`.
pub fn taylor_at<C: ActionValue + ?Sized>(critic: &C, s: &[f64], a0: &[f64]) -> Result<TaylorModel> {
    taylor_at_with(critic, s, a0, Curvature::GaussNewton)
}

pub fn taylor_at_with<C: ActionValue + ?Sized>(critic: &C, s: &[f64], a0: &[f64], curvature: Curvature) -> Result<TaylorModel> {
    let q = critic.q_value(s, a0)?;
    let g = critic.q_grad_action(s, a0)?;
    let h = curvature_at(critic, s, &g, curvature)?;
    Ok(TaylorModel::from_expansion(a0, q, &g, h))
}

/// Average of models expanded at `samples` draws from `policy_at_s`.
pub fn taylor_averaged<C: ActionValue + ?Sized, R: Rng + ?Sized>(
    critic: &C,
    s: &[f64],
    policy_at_s: &Gaussian,
    samples: usize,
    curvature: Curvature,
    rng: &mut R,
) -> Result<TaylorModel> {
    if samples == 0 {
        return Err(Error::InvalidArgument("averaged expansion needs at least one sample".into()));
    }
    let models = (0..samples)
        .map(|_| taylor_at_with(critic, s, &policy_at_s.sample(rng), curvature))
        .collect::<Result<Vec<_>>>()?;
    TaylorModel::average(&models)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuideEntry {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl GuideEntry {
    pub fn gaussian(&self) -> Result<Gaussian> {
        Gaussian::new(self.mean.clone(), self.cov.clone())
    }
}

/// Closed-form guide for one state given the multipliers.
pub fn guide_from_dual(tm: &TaylorModel, actor_at_s: &Gaussian, eta: f64, omega: f64) -> Result<GuideEntry> {
    check_dim(tm.dim(), actor_at_s.dim())?;
    let sigma_inv = actor_at_s.cholesky().inverse();
    guide_from_parts(tm, actor_at_s.mean(), &sigma_inv, eta, omega)
}

fn guide_from_parts(tm: &TaylorModel, phi: &[f64], sigma_inv: &Matrix, eta: f64, omega: f64) -> Result<GuideEntry> {
    if !(eta > 0.0 && omega > 0.0) {
        return Err(Error::InvalidArgument("multipliers must be positive".into()));
    }
    let mut f = sigma_inv.scale(eta).sub(&tm.h);
    f.symmetrize();
    let (chol, _) = Cholesky::with_jitter(&f)?;
    let mut l = sigma_inv.mul_vec(phi);
    for (li, p) in l.iter_mut().zip(&tm.psi) {
        *li = eta * *li + p;
    }
    Ok(GuideEntry {
        mean: chol.solve(&l),
        cov: chol.inverse().scale(eta + omega),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualSolution {
    pub eta: f64,
    pub omega: f64,
    pub dual_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Batch mean `KL(π̃ ‖ π_θ)` at the solution.
    pub kl: f64,
    /// Batch mean guide entropy at the solution.
    pub entropy: f64,
}

/// Dual value with its first and second derivatives in `(η, ω)`, and the
/// constraint quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualEval {
    pub value: f64,
    pub d_eta: f64,
    pub d_omega: f64,
    pub d2_eta: f64,
    pub d2_eta_omega: f64,
    pub d2_omega: f64,
    pub kl: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug)]
struct StateTerm {
    lambda: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

/// The batch dual for a shared actor covariance.
#[derive(Clone, Debug)]
pub struct DualProblem {
    dim: usize,
    epsilon: f64,
    kappa: f64,
    log_det_sigma: f64,
    terms: Vec<StateTerm>,
}

impl DualProblem {
    /// `means[n]` is the actor mean at the state of `models[n]`.
    pub fn new<T: AsRef<[f64]>>(models: &[TaylorModel], means: &[T], sigma: &Matrix, epsilon: f64, kappa: f64) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::EmptyBatch);
        }
        check_dim(models.len(), means.len())?;
        let d = sigma.rows();
        let chol = Cholesky::new(sigma)?;
        let l = chol.factor();
        let lt = l.transpose();
        let mut terms = Vec::with_capacity(models.len());
        for (tm, phi) in models.iter().zip(means) {
            let phi = phi.as_ref();
            check_dim(d, tm.dim())?;
            check_dim(d, phi.len())?;
            let mut m = lt.matmul(&tm.h).matmul(l).scale(-1.0);
            m.symmetrize();
            let (lambda, v) = symmetric_eigen(&m)?;
            let vt = v.transpose();
            let p = vt.mul_vec(&chol.solve_lower(phi));
            let q = vt.mul_vec(&lt.mul_vec(&tm.psi));
            terms.push(StateTerm { lambda, p, q });
        }
        Ok(Self { dim: d, epsilon, kappa, log_det_sigma: chol.log_det(), terms })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Dual value (without the multiplier-independent constant), gradient and
    /// batch-mean KL and entropy of the induced guides.
    pub fn evaluate(&self, eta: f64, omega: f64) -> Result<DualEval> {
        if !(eta > 0.0 && omega > 0.0) {
            return Err(Error::InvalidArgument("multipliers must be positive".into()));
        }
        let d = self.dim as f64;
        let c = eta + omega;
        let ln_2pi = math::ln(math::TWO_PI);
        let ln_c = math::ln(c);
        let (mut sum_term, mut sum_kl, mut sum_ent) = (0.0, 0.0, 0.0);
        let (mut sum_dkl_eta, mut sum_inv_den) = (0.0, 0.0);
        for t in &self.terms {
            let (mut sum_ln_den, mut quad, mut pp, mut ratio_sum, mut shift) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let (mut inv_den, mut dkl_eta) = (0.0, 0.0);
            for i in 0..self.dim {
                let den = eta + t.lambda[i];
                if !(den > 0.0) {
                    return Err(Error::NotPositiveDefinite);
                }
                let w = eta * t.p[i] + t.q[i];
                let m = w / den;
                sum_ln_den += math::ln(den);
                quad += w * m;
                pp += t.p[i] * t.p[i];
                ratio_sum += c / den;
                let r = (t.p[i] - m) * (t.p[i] - m);
                shift += r;
                inv_den += 1.0 / den;
                // ∂/∂η of c/den + ln den + (p − m)², with p − m = (λp − q)/den.
                dkl_eta += 2.0 / den - c / (den * den) - 2.0 * r / den;
            }
            let log_det_f = sum_ln_den - self.log_det_sigma;
            sum_term += 0.5 * c * (d * (ln_2pi + ln_c) - log_det_f) - 0.5 * eta * (d * ln_2pi + self.log_det_sigma) + 0.5 * (quad - eta * pp);
            // Whitened: KL = ½[Σ c/denᵢ − d − Σ ln(c/denᵢ) + ‖p − m‖²].
            sum_kl += 0.5 * (ratio_sum - d - (d * ln_c - sum_ln_den) + shift);
            sum_ent += 0.5 * (d * (ln_2pi + 1.0) + d * ln_c + self.log_det_sigma - sum_ln_den);
            sum_dkl_eta += 0.5 * (dkl_eta - d / c);
            sum_inv_den += inv_den;
        }
        let n = self.terms.len() as f64;
        let (kl, entropy) = (sum_kl / n, sum_ent / n);
        // ∂KL/∂ω = ½(Σ 1/denᵢ − d/c) = −∂H/∂η and ∂H/∂ω = ½ d/c.
        let dkl_omega = 0.5 * (sum_inv_den / n - d / c);
        Ok(DualEval {
            value: eta * self.epsilon - omega * self.kappa + sum_term / n,
            d_eta: self.epsilon - kl,
            d_omega: entropy - self.kappa,
            d2_eta: -sum_dkl_eta / n,
            d2_eta_omega: -dkl_omega,
            d2_omega: 0.5 * d / c,
            kl,
            entropy,
        })
    }

    pub fn value(&self, eta: f64, omega: f64) -> Result<f64> {
        Ok(self.evaluate(eta, omega)?.value)
    }

    /// Minimizes the dual over `η ≥ η_min`, `ω ≥ ω_min` by projected Newton
    /// steps with Armijo backtracking in `(ln η, ln ω)`, starting from
    /// `η = ω = 0.05`.
    pub fn solve(&self) -> Result<DualSolution> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("KL bound must be positive".into()));
        }
        let lb = [math::ln(ETA_MIN), math::ln(OMEGA_MIN)];
        let eval = |x: [f64; 2]| -> Option<DualEval> {
            let e = self.evaluate(math::exp(x[0]), math::exp(x[1])).ok()?;
            let ok = [e.value, e.d_eta, e.d_omega, e.d2_eta, e.d2_eta_omega, e.d2_omega].iter().all(|v| v.is_finite());
            ok.then_some(e)
        };
        let mut x = [math::ln(DUAL_INIT); 2];
        let mut e = eval(x).ok_or(Error::SolverDiverged("dual is not finite at the initial point"))?;
        let mut converged = false;
        let mut iterations = 0;

        loop {
            let mult = [math::exp(x[0]), math::exp(x[1])];
            let raw = [e.d_eta, e.d_omega];
            let tol = [DUAL_KL_RTOL * self.epsilon, DUAL_ENTROPY_TOL];
            let g = [mult[0] * raw[0], mult[1] * raw[1]];
            let at_floor = [x[0] <= lb[0] && g[0] > 0.0, x[1] <= lb[1] && g[1] > 0.0];
            // A slack constraint whose multiplier no longer moves the dual value
            // counts as settled.
            let negligible = DUAL_SLACK_TOL * math::abs(e.value).max(1.0);
            let settled = |i: usize| at_floor[i] || math::abs(raw[i]) <= tol[i] || (raw[i] > 0.0 && g[i] <= negligible);
            if settled(0) && settled(1) {
                converged = true;
                break;
            }
            if iterations == DUAL_MAX_ITERS {
                break;
            }
            iterations += 1;

            // Hessian in log coordinates, restricted to the free variables.
            let mut h = [
                [mult[0] * mult[0] * e.d2_eta + g[0], mult[0] * mult[1] * e.d2_eta_omega],
                [mult[0] * mult[1] * e.d2_eta_omega, mult[1] * mult[1] * e.d2_omega + g[1]],
            ];
            let mut gf = g;
            for i in 0..2 {
                if at_floor[i] {
                    gf[i] = 0.0;
                    h[i] = [0.0; 2];
                    h[0][i] = 0.0;
                    h[1][i] = 0.0;
                    h[i][i] = 1.0;
                }
            }
            let mut dir = newton_direction(h, gf);
            let longest = math::abs(dir[0]).max(math::abs(dir[1]));
            if longest > MAX_LOG_STEP {
                dir = [dir[0] * MAX_LOG_STEP / longest, dir[1] * MAX_LOG_STEP / longest];
            }

            let slack = 4.0 * f64::EPSILON * math::abs(e.value).max(1.0);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let xn = [(x[0] + alpha * dir[0]).max(lb[0]), (x[1] + alpha * dir[1]).max(lb[1])];
                if xn == x {
                    break;
                }
                if let Some(en) = eval(xn) {
                    let decrease = g[0] * (xn[0] - x[0]) + g[1] * (xn[1] - x[1]);
                    if en.value <= e.value + 1e-4 * decrease + slack {
                        accepted = Some((xn, en));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((xn, en)) = accepted else {
                break;
            };
            x = xn;
            e = en;
        }

        Ok(DualSolution {
            eta: math::exp(x[0]),
            omega: math::exp(x[1]),
            dual_value: e.value,
            iterations,
            converged,
            kl: e.kl,
            entropy: e.entropy,
        })
    }
}

/// Longest step, per coordinate, of the log-multipliers in one iteration.
const MAX_LOG_STEP: f64 = 5.0;

// −|H|⁻¹ g for a symmetric 2×2 `H`, with eigenvalues replaced by their
// magnitudes and floored relative to the largest so the step always descends.
fn newton_direction(h: [[f64; 2]; 2], g: [f64; 2]) -> [f64; 2] {
    let (a, b, d) = (h[0][0], h[0][1], h[1][1]);
    let mean = 0.5 * (a + d);
    let radius = math::sqrt(0.25 * (a - d) * (a - d) + b * b);
    let (l1, l2) = (mean + radius, mean - radius);
    // Unit eigenvector of l1.
    let (v1, v2) = if radius == 0.0 {
        (1.0, 0.0)
    } else if a >= d {
        let (u, w) = (l1 - d, b);
        let n = math::sqrt(u * u + w * w);
        (u / n, w / n)
    } else {
        let (u, w) = (b, l1 - a);
        let n = math::sqrt(u * u + w * w);
        (u / n, w / n)
    };
    let floor = (1e-10 * math::abs(l1).max(math::abs(l2))).max(1e-200);
    let (m1, m2) = (math::abs(l1).max(floor), math::abs(l2).max(floor));
    // Components of g along (v1, v2) and its orthogonal (−v2, v1).
    let c1 = v1 * g[0] + v2 * g[1];
    let c2 = -v2 * g[0] + v1 * g[1];
    let (s1, s2) = (c1 / m1, c2 / m2);
    [-(s1 * v1 - s2 * v2), -(s1 * v2 + s2 * v1)]
}

fn problem_for<S: AsRef<[f64]>>(states: &[S], tms: &[TaylorModel], actor: &GaussianPolicy, epsilon: f64, kappa: f64) -> Result<DualProblem> {
    let means = actor.policy_means(states)?;
    DualProblem::new(tms, &means, actor.covariance(), epsilon, kappa)
}

/// Batch dual at `(η, ω)` for the actor's means at `states`.
pub fn dual_value<S: AsRef<[f64]>>(states: &[S], tms: &[TaylorModel], actor: &GaussianPolicy, eta: f64, omega: f64, epsilon: f64, kappa: f64) -> Result<f64> {
    problem_for(states, tms, actor, epsilon, kappa)?.value(eta, omega)
}

/// `(∂/∂η, ∂/∂ω)` of [`dual_value`].
pub fn dual_gradient<S: AsRef<[f64]>>(states: &[S], tms: &[TaylorModel], actor: &GaussianPolicy, eta: f64, omega: f64, epsilon: f64, kappa: f64) -> Result<[f64; 2]> {
    let e = problem_for(states, tms, actor, epsilon, kappa)?.evaluate(eta, omega)?;
    Ok([e.d_eta, e.d_omega])
}

pub fn solve_dual<S: AsRef<[f64]>>(states: &[S], tms: &[TaylorModel], actor: &GaussianPolicy, epsilon: f64, kappa: f64) -> Result<DualSolution> {
    problem_for(states, tms, actor, epsilon, kappa)?.solve()
}

/// Guides for a batch together with the shared multipliers.
#[derive(Clone, Debug)]
pub struct GuideBatch {
    pub guides: Vec<GuideEntry>,
    pub dual: DualSolution,
    pub models: Vec<TaylorModel>,
    /// Actor means at the batch states.
    pub means: Vec<Vec<f64>>,
}

/// Builds one model per state as configured, solves the shared dual and
/// returns one guide per state.
pub fn compute_guides<C, S, R>(critic: &C, actor: &GaussianPolicy, states: &[S], cfg: &GuideConfig, rng: &mut R) -> Result<GuideBatch>
where
    C: ActionValue + ?Sized,
    S: AsRef<[f64]>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let n = states.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let (ds, da) = (actor.state_dim(), actor.action_dim());
    check_dim(ds, critic.state_dim())?;
    check_dim(da, critic.action_dim())?;
    let flat = flatten(states, ds)?;
    let means_flat = actor.policy_means_flat(&flat, n)?;

    let per_state = match cfg.expansion {
        Expansion::Mean | Expansion::Sample => 1,
        Expansion::Averaged(k) => k,
    };
    let (anchor_states, anchors) = if cfg.expansion == Expansion::Mean {
        (flat.clone(), means_flat.clone())
    } else {
        let chol = actor.cholesky();
        let mut st = Vec::with_capacity(n * per_state * ds);
        let mut an = Vec::with_capacity(n * per_state * da);
        let mut z = vec![0.0; da];
        for i in 0..n {
            for _ in 0..per_state {
                z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                st.extend_from_slice(&flat[i * ds..(i + 1) * ds]);
                an.extend(chol.mul_lower(&z).iter().zip(&means_flat[i * da..(i + 1) * da]).map(|(l, m)| l + m));
            }
        }
        (st, an)
    };
    let rows = n * per_state;
    let (values, grads) = critic.q_value_grad_batch(&anchor_states, &anchors, rows)?;
    let mut models = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(per_state);
    for i in 0..n {
        let s = &flat[i * ds..(i + 1) * ds];
        group.clear();
        for k in i * per_state..(i + 1) * per_state {
            let g = &grads[k * da..(k + 1) * da];
            let h = curvature_at(critic, s, g, cfg.curvature)?;
            group.push(TaylorModel::from_expansion(&anchors[k * da..(k + 1) * da], values[k], g, h));
        }
        models.push(if per_state == 1 { group.pop().expect("one model") } else { TaylorModel::average(&group)? });
    }

    let means: Vec<Vec<f64>> = means_flat.chunks(da).map(|c| c.to_vec()).collect();
    let problem = DualProblem::new(&models, &means, actor.covariance(), cfg.epsilon, cfg.kappa)?;
    let dual = problem.solve()?;
    let sigma_inv = actor.cholesky().inverse();
    let guides = models
        .iter()
        .zip(&means)
        .map(|(tm, phi)| guide_from_parts(tm, phi, &sigma_inv, dual.eta, dual.omega))
        .collect::<Result<Vec<_>>>()?;
    Ok(GuideBatch { guides, dual, models, means })
}
