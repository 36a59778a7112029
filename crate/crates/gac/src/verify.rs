//! Checks of the core numerics against the brute-force references in
//! [`gac_oracle`].
//!
//! Each `measure_*` function draws its own random instances from a seed and
//! returns the worst discrepancies it saw; [`run_suite`] compares those with
//! fixed tolerances.

use gac_core::actor::GaussianPolicy;
use gac_core::baselines::dpg_direction;
use gac_core::critic::{gauss_newton_hessian, ActionValue, CriticNetwork, QuadraticCritic};
use gac_core::envs::{lqr_optimal_gain, make_env, ActionBox, LinearQuadratic};
use gac_core::gauss::{gauss_entropy, gauss_kl, Gaussian};
use gac_core::guide::{guide_from_dual, taylor_at_with, Curvature, DualProblem, TaylorModel};
use gac_core::linalg::Matrix;
use gac_core::nn::Mlp;
use gac_core::trainer::evaluate;
use gac_core::{seeded_rng, SeededRng};
use gac_oracle::{
    constrained_guide_reference, dual_quadrature, entropy_quadrature, fd_gradient, fd_hessian, fd_jacobian, kl_quadrature, lqr_gain_policy_iteration, reference_forward,
    scalar_lqr, ActionGrid,
};
use rand::Rng;

use crate::{GacError, Result};

pub const SUITES: [&str; 8] = ["gauss", "critic-grad", "gauss-newton", "dual", "guide", "dpg-limit", "naf", "lqr"];

/// Optimal scalar LQR feedback for `a = b = q = r = 1`, `γ = 0.99`: the root
/// of `0.99P² − 0.98P − 1 = 0` gives `P = 1.6152512456630115`, `K = P − 1`.
pub const LQR1D_GAIN: f64 = 0.615_251_245_663_011_5;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: &str, measured: f64, tolerance: f64) -> Self {
        Self { name: name.into(), measured, tolerance }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn uniform_vec(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| uniform(rng, lo, hi)).collect()
}

/// `AAᵀ + floor·I` for a random `A` with entries in `[−scale, scale]`.
fn random_spd(rng: &mut SeededRng, d: usize, scale: f64, floor: f64) -> Matrix {
    let a = Matrix::from_row_major(d, d, uniform_vec(rng, d * d, -scale, scale)).expect("square");
    let mut m = a.matmul(&a.transpose());
    m.add_diagonal(floor);
    m.symmetrize();
    m
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Actor whose mean is constant at `phi` (zero weights, biases through the
/// output `tanh`), with covariance `cov`.
fn constant_actor(state_dim: usize, phi: &[f64], cov: Matrix, bound: f64) -> GaussianPolicy {
    let bounds = ActionBox::symmetric(phi.len(), bound);
    let mut net = Mlp::zeros(&[state_dim, phi.len()], GaussianPolicy::output_map(&bounds));
    for (b, p) in net.layer_mut(0).1.iter_mut().zip(phi) {
        *b = (p / bound).atanh();
    }
    GaussianPolicy::from_parts(state_dim, net, cov, bounds).expect("consistent actor")
}

fn random_actor(rng: &mut SeededRng, state_dim: usize, action_dim: usize, hidden: &[usize]) -> GaussianPolicy {
    let mut actor = GaussianPolicy::new(state_dim, hidden, ActionBox::symmetric(action_dim, 2.0), rng);
    actor.set_covariance(random_spd(rng, action_dim, 0.6, 0.2)).expect("positive definite");
    actor
}

// Random critic whose output layer is redrawn at the scale of the hidden
// layers; the small default output initialization would leave gradients near
// the level of finite-difference noise.
fn random_critic(rng: &mut SeededRng, state_dim: usize, action_dim: usize, hidden: &[usize]) -> CriticNetwork {
    let mut critic = CriticNetwork::new(state_dim, action_dim, hidden, rng);
    let net = critic.mlp_mut();
    let last = net.num_layers() - 1;
    let fan_in = net.sizes()[last];
    let bound = (3.0 / fan_in as f64).sqrt();
    for w in net.layer_mut(last).0.iter_mut() {
        *w = rng.gen_range(-bound..bound);
    }
    critic
}

// Reference value of a critic network at one state-action pair, with the
// smallest hidden pre-activation magnitude.
fn reference_q(critic: &CriticNetwork, s: &[f64], a: &[f64]) -> (f64, f64) {
    let x: Vec<f64> = s.iter().chain(a).copied().collect();
    let r = reference_forward(critic.mlp(), &x);
    (r.output[0], r.min_abs_preactivation)
}

// Draws points until every hidden pre-activation is at least `margin` away
// from its kink.
fn point_away_from_kinks(rng: &mut SeededRng, critic: &CriticNetwork, margin: f64) -> (Vec<f64>, Vec<f64>) {
    loop {
        let s = uniform_vec(rng, critic.state_dim(), -1.0, 1.0);
        let a = uniform_vec(rng, critic.action_dim(), -1.0, 1.0);
        if reference_q(critic, &s, &a).1 >= margin {
            return (s, a);
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GaussMeasure {
    pub kl_error: f64,
    pub entropy_error: f64,
    pub entropy_grad_error: f64,
}

/// Closed-form KL and entropy against quadrature for random 1-D and 2-D
/// Gaussians, and the variance derivative of the entropy against differences.
pub fn measure_gauss(instances: usize, seed: u64) -> Result<GaussMeasure> {
    let mut rng = seeded_rng(seed);
    let mut m = GaussMeasure::default();
    for i in 0..instances {
        let d = 1 + i % 2;
        let p = Gaussian::new(uniform_vec(&mut rng, d, -1.0, 1.0), random_spd(&mut rng, d, 0.8, 0.2))?;
        let q = Gaussian::new(uniform_vec(&mut rng, d, -1.0, 1.0), random_spd(&mut rng, d, 0.8, 0.5))?;
        let grid = ActionGrid::covering(&p, 10.0, if d == 1 { 401 } else { 161 })?;
        m.kl_error = m.kl_error.max((gauss_kl(&p, &q)? - kl_quadrature(&p, &q, &grid)?).abs());
        m.entropy_error = m.entropy_error.max((gauss_entropy(&p) - entropy_quadrature(&p, &grid)?).abs());
        let var = uniform(&mut rng, 0.1, 3.0);
        let h = |v: &[f64]| gauss_entropy(&Gaussian::new(vec![0.0], Matrix::from_rows(&[[v[0]]])).expect("positive variance"));
        let fd = fd_gradient(h, &[var], 1e-6 * var)[0];
        m.entropy_grad_error = m.entropy_grad_error.max((fd - 0.5 / var).abs());
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CriticGradMeasure {
    /// `max ‖∇ₐQ − fd‖ / ‖fd‖` over all networks.
    pub gradient_rel_error: f64,
    /// Largest `|Q − Q_ref| / (1 + |Q_ref|)` against the loop-based forward pass.
    pub forward_error: f64,
    pub action_dims: [usize; 3],
}

/// Action gradients of random critic networks against central differences of
/// an independent forward pass. Action widths cycle through 1, 2 and 4.
pub fn measure_critic_grad(nets: usize, seed: u64) -> Result<CriticGradMeasure> {
    const DIMS: [usize; 3] = [1, 2, 4];
    let mut rng = seeded_rng(seed);
    let mut m = CriticGradMeasure::default();
    for i in 0..nets {
        let (ds, da) = (1 + i % 3, DIMS[i % 3]);
        let hidden = [rng.gen_range(4..33), rng.gen_range(4..33)];
        let critic = random_critic(&mut rng, ds, da, &hidden);
        let (s, a) = point_away_from_kinks(&mut rng, &critic, 1e-3);
        let g = critic.q_grad_action(&s, &a)?;
        let fd = fd_gradient(|x| reference_q(&critic, &s, x).0, &a, 1e-6);
        m.gradient_rel_error = m.gradient_rel_error.max(norm(&diff(&g, &fd)) / norm(&fd).max(1e-12));
        let q_ref = reference_q(&critic, &s, &a).0;
        m.forward_error = m.forward_error.max((critic.q_value(&s, &a)? - q_ref).abs() / (1.0 + q_ref.abs()));
        m.action_dims[i % 3] += 1;
    }
    Ok(m)
}

/// `∇²Q = −∇Q∇Qᵀ + e^{−Q}∇²e^{Q}` with both Hessians by differences and
/// `−∇Q∇Qᵀ` from the core. Returns the worst error relative to the larger of
/// `‖∇Q∇Qᵀ‖` and `‖∇²Q‖` (max-entry norms).
pub fn measure_gauss_newton(nets: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded_rng(seed);
    let mut worst = 0.0f64;
    for i in 0..nets {
        let (ds, da) = (2, 1 + i % 2);
        let critic = random_critic(&mut rng, ds, da, &[8, 8]);
        // Second differences of exp(Q) balance truncation (h‖g‖)² against
        // rounding 1/(h‖g‖)², so the step follows the gradient size. Points
        // whose stencil leaves the linear piece around them are redrawn.
        let (s, a, g, h) = loop {
            let (s, a) = point_away_from_kinks(&mut rng, &critic, 1e-2);
            let g = critic.q_grad_action(&s, &a)?;
            let h = GN_STEP_TIMES_GRAD / norm(&g).max(1e-12);
            if stencil_is_linear(&critic, &s, &a, &g, h) {
                break (s, a, g, h);
            }
        };
        let q0 = reference_q(&critic, &s, &a).0;
        let exact = fd_jacobian(|x| critic.q_grad_action(&s, x).expect("action width"), &a, 1e-5);
        let exp_term = fd_hessian(|x| (reference_q(&critic, &s, x).0 - q0).exp(), &a, h);
        let gn = gauss_newton_hessian(&g);
        let mut err = 0.0f64;
        for r in 0..da {
            for c in 0..da {
                err = err.max((gn.row(r)[c] + exp_term[r][c] - exact[r][c]).abs());
            }
        }
        let scale = max_abs(gn.as_slice().iter().copied()).max(max_abs(exact.iter().flatten().copied())).max(1e-8);
        worst = worst.max(err / scale);
    }
    Ok(worst)
}

const GN_STEP_TIMES_GRAD: f64 = 3e-4;

// True when Q matches its tangent plane at every second-difference stencil
// point, i.e. no hidden unit switches on the stencil.
fn stencil_is_linear(critic: &CriticNetwork, s: &[f64], a: &[f64], g: &[f64], h: f64) -> bool {
    let q0 = reference_q(critic, s, a).0;
    let d = a.len();
    let tol = 1e-10 * (1.0 + q0.abs());
    let mut offsets = Vec::new();
    for i in 0..d {
        for si in [-1.0, 1.0] {
            let mut o = vec![0.0; d];
            o[i] = si * h;
            offsets.push(o.clone());
            for j in 0..i {
                for sj in [-1.0, 1.0] {
                    let mut p = o.clone();
                    p[j] = sj * h;
                    offsets.push(p);
                }
            }
        }
    }
    offsets.iter().all(|o| {
        let x: Vec<f64> = a.iter().zip(o).map(|(ai, oi)| ai + oi).collect();
        let lin = q0 + g.iter().zip(o).map(|(gi, oi)| gi * oi).sum::<f64>();
        (reference_q(critic, s, &x).0 - lin).abs() <= tol
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DualMeasure {
    /// Worst mismatch of `g(η, ω) − g(η₀, ω₀)` between the closed form and
    /// quadrature.
    pub difference_error: f64,
    /// Worst `‖∇g − fd‖ / ‖fd‖`.
    pub gradient_rel_error: f64,
    pub points: usize,
}

pub const DUAL_ETAS: [f64; 5] = [0.2, 0.5, 1.0, 2.0, 5.0];
pub const DUAL_OMEGAS: [f64; 5] = [0.05, 0.15, 0.4, 1.0, 2.0];

/// Single-state duals of quadratic critics over the `(η, ω)` grid
/// `DUAL_ETAS × DUAL_OMEGAS`: differences against quadrature and gradients
/// against differences.
pub fn measure_dual(instances: usize, seed: u64) -> Result<DualMeasure> {
    let mut rng = seeded_rng(seed);
    let mut m = DualMeasure::default();
    let (eps, kappa) = (0.05, -0.5);
    for i in 0..instances {
        let d = 1 + i % 2;
        let phi = uniform_vec(&mut rng, d, -0.5, 0.5);
        let actor = constant_actor(1, &phi, random_spd(&mut rng, d, 0.6, 0.3), 2.0);
        let h = random_spd(&mut rng, d, 0.8, 0.5).scale(-1.0);
        let psi = uniform_vec(&mut rng, d, -0.5, 0.5);
        let critic = QuadraticCritic::fixed(1, h.clone(), psi.clone(), 0.0)?;
        let s = [uniform(&mut rng, -1.0, 1.0)];
        let policy = actor.distribution(&s)?;
        let tm = TaylorModel { h, psi, xi: 0.0, anchors: vec![vec![0.0; d]] };
        let closed = |eta: f64, omega: f64| gac_core::guide::dual_value(&[s], std::slice::from_ref(&tm), &actor, eta, omega, eps, kappa);
        let grid = ActionGrid::covering(&policy, 12.0, if d == 1 { 801 } else { 201 })?;
        let quad = |eta: f64, omega: f64| dual_quadrature(&policy, &critic, &s, eta, omega, eps, kappa, &grid);
        let (c0, q0) = (closed(DUAL_ETAS[0], DUAL_OMEGAS[0])?, quad(DUAL_ETAS[0], DUAL_OMEGAS[0])?);
        for &eta in &DUAL_ETAS {
            for &omega in &DUAL_OMEGAS {
                let (c, q) = (closed(eta, omega)?, quad(eta, omega)?);
                m.difference_error = m.difference_error.max(((c - c0) - (q - q0)).abs());
                let grad = gac_core::guide::dual_gradient(&[s], std::slice::from_ref(&tm), &actor, eta, omega, eps, kappa)?;
                let step = 1e-6 * eta.min(omega);
                let fd = fd_gradient(|x| closed(x[0], x[1]).expect("positive multipliers"), &[eta, omega], step);
                m.gradient_rel_error = m.gradient_rel_error.max(norm(&diff(&grad, &fd)) / norm(&fd).max(1e-12));
                m.points += 1;
            }
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GuideMeasure {
    pub mean_error: f64,
    pub cov_error: f64,
    /// Largest `KL/ε − 1` of the closed-form guides.
    pub kl_excess: f64,
    /// Largest `κ − entropy` of the closed-form guides.
    pub entropy_shortfall: f64,
    /// Instances where neither constraint is active within tolerance.
    pub inactive: usize,
    pub unconverged: usize,
    pub instances: usize,
}

/// Relative KL and absolute entropy tolerance for calling a constraint active.
pub const ACTIVE_TOL: f64 = 1e-3;

/// Closed-form guides (dual solve, then the guide formula) against the
/// direct primal search on random exact-quadratic problems.
pub fn measure_guide(one_dim: usize, two_dim: usize, seed: u64) -> Result<GuideMeasure> {
    let mut rng = seeded_rng(seed);
    let mut m = GuideMeasure::default();
    for i in 0..one_dim + two_dim {
        let d = if i < one_dim { 1 } else { 2 };
        let policy = Gaussian::new(uniform_vec(&mut rng, d, -1.0, 1.0), random_spd(&mut rng, d, 0.8, 0.2))?;
        let h = random_spd(&mut rng, d, 1.0, 0.3).scale(-1.0);
        let psi = uniform_vec(&mut rng, d, -1.5, 1.5);
        let eps = uniform(&mut rng, 0.005, 0.1);
        // Alternate between a loose and a possibly binding entropy bound.
        let kappa = if i % 2 == 0 { policy.entropy() - 10.0 } else { policy.entropy() - uniform(&mut rng, 0.0, 0.3) };
        let tm = TaylorModel { h: h.clone(), psi: psi.clone(), xi: 0.0, anchors: vec![vec![0.0; d]] };
        let sol = DualProblem::new(std::slice::from_ref(&tm), &[policy.mean()], policy.cov(), eps, kappa)?.solve()?;
        if !sol.converged {
            m.unconverged += 1;
        }
        let guide = guide_from_dual(&tm, &policy, sol.eta, sol.omega)?.gaussian()?;
        let reference = constrained_guide_reference(&policy, &h, &psi, eps, kappa)?;
        m.mean_error = m.mean_error.max(max_abs(diff(guide.mean(), reference.guide.mean())));
        m.cov_error = m.cov_error.max(guide.cov().max_abs_diff(reference.guide.cov()));
        let kl = gauss_kl(&guide, &policy)?;
        let entropy = gauss_entropy(&guide);
        m.kl_excess = m.kl_excess.max(kl / eps - 1.0);
        m.entropy_shortfall = m.entropy_shortfall.max(kappa - entropy);
        if (kl - eps).abs() > ACTIVE_TOL * eps && (entropy - kappa).abs() > ACTIVE_TOL {
            m.inactive += 1;
        }
        m.instances += 1;
    }
    Ok(m)
}

/// Largest entry of `F⁻¹L − (φ + F⁻¹(g₀ + H₀(φ − a₀)))` over random
/// expansions, with the second form solved by the oracle's dense solver.
pub fn measure_second_order(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded_rng(seed);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let d = 1 + i % 4;
        let policy = Gaussian::new(uniform_vec(&mut rng, d, -1.0, 1.0), random_spd(&mut rng, d, 0.8, 0.3))?;
        let a0 = uniform_vec(&mut rng, d, -1.0, 1.0);
        let g0 = uniform_vec(&mut rng, d, -2.0, 2.0);
        let h0 = if i % 2 == 0 { gauss_newton_hessian(&g0) } else { random_spd(&mut rng, d, 1.0, 0.1).scale(-1.0) };
        let tm = TaylorModel::from_expansion(&a0, uniform(&mut rng, -1.0, 1.0), &g0, h0.clone());
        let (eta, omega) = (uniform(&mut rng, 0.1, 10.0), uniform(&mut rng, 0.1, 10.0));
        let mean_form = guide_from_dual(&tm, &policy, eta, omega)?.mean;
        let phi = policy.mean();
        let sigma_inv = invert(policy.cov());
        let f = sigma_inv.scale(eta).sub(&h0);
        let step: Vec<f64> = g0.iter().zip(h0.mul_vec(&diff(phi, &a0))).map(|(g, v)| g + v).collect();
        let delta = dense_solve(&f, &step);
        let update_form: Vec<f64> = phi.iter().zip(&delta).map(|(p, s)| p + s).collect();
        worst = worst.max(max_abs(diff(&mean_form, &update_form)));
    }
    Ok(worst)
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

// Gaussian elimination with partial pivoting; the reference side of the
// algebraic identities does not go through the core's factorizations.
fn dense_solve(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m = to_rows(a);
    let mut x = b.to_vec();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).expect("nonempty");
        m.swap(c, p);
        x.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            x[r] -= f * x[c];
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| m[c][k] * x[k]).sum();
        x[c] = (x[c] - s) / m[c][c];
    }
    x
}

fn invert(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut out = Matrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = dense_solve(a, &e);
        for r in 0..n {
            out.as_mut_slice()[r * n + c] = col[r];
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DpgMeasure {
    /// MSE gradient towards `φ + ∇ₐQ̂` against the negated DPG direction.
    pub dpg_error: f64,
    /// Weighted-error gradient against its expansion in critic gradients.
    pub wmse_identity_error: f64,
    /// Plain-error gradient against `J H⁻¹(∇Q(φ) − ∇Q(φ₊))`.
    pub mse_identity_error: f64,
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    max_abs(diff(a, b)) / max_abs(b.iter().copied()).max(1.0)
}

/// DPG as the first-order limit of the guide update, and the two actor
/// gradient identities on exact-quadratic critics.
pub fn measure_dpg_limit(instances: usize, seed: u64) -> Result<DpgMeasure> {
    let mut rng = seeded_rng(seed);
    let mut m = DpgMeasure::default();
    let batch = 5;
    for i in 0..instances {
        let (ds, da) = (1 + i % 3, 1 + i % 2);
        let actor = random_actor(&mut rng, ds, da, &[8]);
        let states: Vec<Vec<f64>> = (0..batch).map(|_| uniform_vec(&mut rng, ds, -1.0, 1.0)).collect();

        // A learned critic, the identity curvature and a vanishing KL weight:
        // the guide mean is one gradient-ascent step from the actor mean.
        let critic = random_critic(&mut rng, ds, da, &[16, 16]);
        let mut targets = Vec::with_capacity(batch);
        for s in &states {
            let phi = actor.policy_mean(s)?;
            let g = critic.q_grad_action(s, &phi)?;
            let tm = TaylorModel::from_expansion(&phi, critic.q_value(s, &phi)?, &g, Matrix::scaled_identity(da, -1.0));
            targets.push(guide_from_dual(&tm, &actor.distribution(s)?, f64::MIN_POSITIVE, 1.0)?.mean);
        }
        let mse = actor.mse_gradient(&states, &targets)?.grad;
        let dpg: Vec<f64> = dpg_direction(&actor, &critic, &states)?.0.iter().map(|v| -v).collect();
        m.dpg_error = m.dpg_error.max(max_abs(diff(&mse, &dpg)));

        // Exact quadratic critic with a real KL weight.
        let h = random_spd(&mut rng, da, 1.0, 0.3).scale(-1.0);
        let quad = QuadraticCritic::fixed(ds, h.clone(), uniform_vec(&mut rng, da, -1.0, 1.0), 0.0)?;
        let (eta, omega) = (uniform(&mut rng, 0.1, 5.0), uniform(&mut rng, 0.1, 5.0));
        let sigma_inv = invert(actor.covariance());
        let h_inv = invert(&h);
        let f = sigma_inv.scale(eta).sub(&h);
        let flat: Vec<f64> = states.iter().flatten().copied().collect();
        let (mut plus, mut d_w, mut d_m) = (Vec::new(), Vec::new(), Vec::new());
        for s in &states {
            let phi = actor.policy_mean(s)?;
            let tm = taylor_at_with(&quad, s, &phi, Curvature::Exact)?;
            let target = guide_from_dual(&tm, &actor.distribution(s)?, eta, omega)?.mean;
            let g_phi = quad.q_grad_action(s, &phi)?;
            let g_plus = quad.q_grad_action(s, &target)?;
            let corr_phi = sigma_inv.mul_vec(&h_inv.mul_vec(&g_phi));
            let corr_plus = sigma_inv.mul_vec(&h_inv.mul_vec(&g_plus));
            for j in 0..da {
                d_w.push((-g_phi[j] + g_plus[j] + eta * corr_phi[j] - eta * corr_plus[j]) / batch as f64);
            }
            d_m.extend(h_inv.mul_vec(&diff(&g_phi, &g_plus)).iter().map(|v| v / batch as f64));
            plus.push(target);
        }
        let weights = vec![f.clone(); batch];
        let half_wmse: Vec<f64> = actor.wmse_gradient(&states, &plus, &weights)?.grad.iter().map(|v| 0.5 * v).collect();
        m.wmse_identity_error = m.wmse_identity_error.max(relative(&half_wmse, &actor.mean_vjp(&flat, batch, &d_w)?));
        let mse = actor.mse_gradient(&states, &plus)?.grad;
        m.mse_identity_error = m.mse_identity_error.max(relative(&mse, &actor.mean_vjp(&flat, batch, &d_m)?));
    }
    Ok(m)
}

/// KL multiplier used for the normalized-advantage limit.
pub const NAF_ETA: f64 = 1e-10;

/// With `Q = −½(a − b(s))ᵀW(a − b(s)) + V(s)` and `η` pinned near zero, the
/// guide mean is `b(s)`. Returns the worst `‖mean − b‖∞`.
pub fn measure_naf(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded_rng(seed);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let (ds, da) = (2, 1 + i % 3);
        let w = random_spd(&mut rng, da, 1.0, 0.2);
        let lin = Matrix::from_row_major(da, ds, uniform_vec(&mut rng, da * ds, -1.0, 1.0))?;
        let b = move |s: &[f64]| lin.mul_vec(s).iter().map(|v| v.tanh()).collect::<Vec<f64>>();
        let critic = QuadraticCritic::naf(ds, da, move |_| w.clone(), b.clone(), |s| s[0] - s[1]);
        let actor = random_actor(&mut rng, ds, da, &[8]);
        let s = uniform_vec(&mut rng, ds, -1.0, 1.0);
        let phi = actor.policy_mean(&s)?;
        let tm = taylor_at_with(&critic, &s, &phi, Curvature::Exact)?;
        let mean = guide_from_dual(&tm, &actor.distribution(&s)?, NAF_ETA, uniform(&mut rng, 0.1, 2.0))?.mean;
        worst = worst.max(max_abs(diff(&mean, &b(&s))));
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LqrMeasure {
    /// Core Riccati gains against policy iteration (both tasks) and the
    /// scalar closed form.
    pub gain_error: f64,
    /// Evaluation of the optimal linear actor against a direct rollout,
    /// relative to the return.
    pub rollout_error: f64,
}

pub fn measure_lqr(seed: u64) -> Result<LqrMeasure> {
    let mut m = LqrMeasure::default();
    for env in [LinearQuadratic::scalar(), LinearQuadratic::double_integrator()] {
        let core = lqr_optimal_gain(&env, 0.99)?;
        let oracle = lqr_gain_policy_iteration(env.a(), env.b(), env.q(), env.r(), 0.99)?;
        m.gain_error = m.gain_error.max(core.max_abs_diff(&oracle));
    }
    let (_, k) = scalar_lqr(1.0, 1.0, 1.0, 1.0, 0.99)?;
    let core = lqr_optimal_gain(&LinearQuadratic::scalar(), 0.99)?.row(0)[0];
    m.gain_error = m.gain_error.max((k - LQR1D_GAIN).abs()).max((core - LQR1D_GAIN).abs());

    // A linear actor in a box wide enough for the output tanh to be linear.
    let bound = 1e6;
    let bounds = ActionBox::symmetric(1, bound);
    let mut net = Mlp::zeros(&[1, 1], GaussianPolicy::output_map(&bounds));
    net.layer_mut(0).0[0] = -LQR1D_GAIN / bound;
    let actor = GaussianPolicy::from_parts(1, net, Matrix::identity(1), bounds)?;
    let mut env = make_env("lqr1d")?;
    let episodes = 5;
    let ev = evaluate(&actor, env.as_mut(), episodes, seed)?;
    let mut seeds = seeded_rng(seed);
    for ret in ev.returns {
        let mut s = env.reset(seeds.gen());
        let mut total = 0.0;
        for _ in 0..env.spec().max_steps {
            let a = [(-LQR1D_GAIN * s[0]).clamp(-1.0, 1.0)];
            let r = env.step(&a)?;
            total += r.reward;
            s = r.next_state;
        }
        m.rollout_error = m.rollout_error.max((ret - total).abs() / total.abs().max(1.0));
    }
    Ok(m)
}

/// Runs one named suite with the default instance counts.
pub fn run_suite(name: &str) -> Result<SuiteReport> {
    const SEED: u64 = 20_170_519;
    let checks = match name {
        "gauss" => {
            let m = measure_gauss(20, SEED)?;
            vec![
                Check::new("KL against quadrature", m.kl_error, 1e-6),
                Check::new("entropy against quadrature", m.entropy_error, 1e-6),
                Check::new("entropy variance derivative", m.entropy_grad_error, 1e-6),
            ]
        }
        "critic-grad" => {
            let m = measure_critic_grad(60, SEED)?;
            vec![
                Check::new("action gradient relative error", m.gradient_rel_error, 1e-5),
                Check::new("forward pass against loop reference", m.forward_error, 1e-12),
            ]
        }
        "gauss-newton" => vec![Check::new("Hessian reconstruction relative error", measure_gauss_newton(30, SEED)?, 1e-4)],
        "dual" => {
            let m = measure_dual(4, SEED)?;
            vec![
                Check::new("dual differences against quadrature", m.difference_error, 1e-4),
                Check::new("dual gradient relative error", m.gradient_rel_error, 1e-5),
            ]
        }
        "guide" => {
            let m = measure_guide(25, 10, SEED)?;
            vec![
                Check::new("guide mean against primal search", m.mean_error, 2e-3),
                Check::new("guide covariance against primal search", m.cov_error, 2e-3),
                Check::new("relative KL excess", m.kl_excess, ACTIVE_TOL),
                Check::new("entropy shortfall", m.entropy_shortfall, 1e-3),
                Check::new("instances with no active constraint", m.inactive as f64, 0.0),
                Check::new("unconverged dual solves", m.unconverged as f64, 0.0),
                Check::new("mean form against update form", measure_second_order(200, SEED)?, 1e-10),
            ]
        }
        "dpg-limit" => {
            let m = measure_dpg_limit(50, SEED)?;
            vec![
                Check::new("first-order limit against DPG", m.dpg_error, 1e-10),
                Check::new("weighted-error gradient identity", m.wmse_identity_error, 1e-8),
                Check::new("plain-error gradient identity", m.mse_identity_error, 1e-8),
            ]
        }
        "naf" => vec![Check::new("guide mean against advantage center", measure_naf(20, SEED)?, 1e-6)],
        "lqr" => {
            let m = measure_lqr(SEED)?;
            vec![Check::new("Riccati gain agreement", m.gain_error, 1e-10), Check::new("evaluation against direct rollout", m.rollout_error, 1e-6)]
        }
        other => return Err(GacError::InvalidConfig(format!("unknown suite `{other}`; choose from {}", SUITES.join(", ")))),
    };
    Ok(SuiteReport { suite: name.to_string(), checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_helpers() {
        let a = Matrix::from_rows(&[[0.0, 2.0], [3.0, 1.0]]);
        let x = dense_solve(&a, &[4.0, 5.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        let inv = invert(&a);
        assert!(inv.matmul(&a).max_abs_diff(&Matrix::identity(2)) < 1e-15);
    }

    #[test]
    fn constant_actor_has_requested_mean() {
        let actor = constant_actor(3, &[0.3, -0.4], Matrix::identity(2), 2.0);
        let m = actor.policy_mean(&[1.0, 2.0, 3.0]).unwrap();
        assert!((m[0] - 0.3).abs() < 1e-15 && (m[1] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert_eq!(run_suite("nope").unwrap_err().exit_code(), 2);
    }
}
