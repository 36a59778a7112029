//! Integrals over actions by trapezoidal quadrature with a refinement check.

use gac_core::critic::ActionValue;
use gac_core::gauss::Gaussian;

use crate::dense::{self, Mat};
use crate::grid::ActionGrid;
use crate::{OracleError, Result};

/// Largest change under grid refinement that is still accepted.
pub const REFINEMENT_TOL: f64 = 1e-5;
/// Standard deviations of the policy the grid must cover.
pub const COVERAGE_STDS: f64 = 6.0;

struct Density {
    mean: Vec<f64>,
    precision: Mat,
    log_norm: f64,
}

impl Density {
    fn new(g: &Gaussian) -> Result<Self> {
        let cov = dense::from_matrix(g.cov());
        let det = dense::det(&cov);
        let precision = dense::inverse(&cov).filter(|_| det > 0.0).ok_or(OracleError::InvalidArgument("singular covariance".into()))?;
        let d = g.dim() as f64;
        Ok(Self { mean: g.mean().to_vec(), precision, log_norm: -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + det.ln()) })
    }

    fn ln_pdf(&self, a: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        self.log_norm - 0.5 * dense::dot(&diff, &dense::mat_vec(&self.precision, &diff))
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn check_shapes(policy: &Gaussian, action_dim: usize, grid: &ActionGrid) -> Result<()> {
    if policy.dim() != grid.dim() || action_dim != grid.dim() {
        return Err(gac_core::Error::DimensionMismatch { expected: grid.dim(), found: policy.dim().max(action_dim) }.into());
    }
    if !grid.covers(policy, COVERAGE_STDS) {
        return Err(OracleError::GridTooNarrow { required: COVERAGE_STDS });
    }
    Ok(())
}

// Runs `f` on the grid and on its refinement, failing when they disagree.
fn with_refinement<T>(grid: &ActionGrid, f: impl Fn(&ActionGrid) -> Result<T>, change: impl Fn(&T, &T) -> f64) -> Result<T> {
    let coarse = f(grid)?;
    let fine = f(&grid.refined())?;
    let delta = change(&coarse, &fine);
    if !(delta <= REFINEMENT_TOL) {
        return Err(OracleError::GridTooCoarse { change: delta });
    }
    Ok(fine)
}

// ln w_i + (η/(η+ω)) ln π(a_i) + Q(s, a_i)/(η+ω) at every node.
fn log_weights<C: ActionValue + ?Sized>(policy: &Density, critic: &C, state: &[f64], eta: f64, omega: f64, grid: &ActionGrid) -> Result<Vec<f64>> {
    let c = eta + omega;
    grid.iter()
        .map(|(a, w)| Ok(w.ln() + eta / c * policy.ln_pdf(a) + critic.q_value(state, a)? / c))
        .collect()
}

fn check_multipliers(eta: f64, omega: f64) -> Result<()> {
    if !(eta > 0.0 && omega >= 0.0 && (eta + omega).is_finite()) {
        return Err(OracleError::InvalidArgument("need η > 0 and ω ≥ 0".into()));
    }
    Ok(())
}

/// `ηε − ωκ + (η+ω) ln ∫ π(a)^{η/(η+ω)} exp(Q(s,a)/(η+ω)) da` for one state.
#[allow(clippy::too_many_arguments)]
pub fn dual_quadrature<C: ActionValue + ?Sized>(
    policy: &Gaussian,
    critic: &C,
    state: &[f64],
    eta: f64,
    omega: f64,
    epsilon: f64,
    kappa: f64,
    grid: &ActionGrid,
) -> Result<f64> {
    check_multipliers(eta, omega)?;
    check_shapes(policy, critic.action_dim(), grid)?;
    let density = Density::new(policy)?;
    with_refinement(
        grid,
        |g| {
            let lw = log_weights(&density, critic, state, eta, omega, g)?;
            Ok(eta * epsilon - omega * kappa + (eta + omega) * log_sum_exp(&lw))
        },
        |a: &f64, b: &f64| (a - b).abs(),
    )
}

/// Normalizes `π(a)^{η/(η+ω)} exp(Q(s,a)/(η+ω))` on the grid and returns its
/// mean and covariance.
pub fn guide_grid_search<C: ActionValue + ?Sized>(policy: &Gaussian, critic: &C, state: &[f64], eta: f64, omega: f64, grid: &ActionGrid) -> Result<Gaussian> {
    check_multipliers(eta, omega)?;
    check_shapes(policy, critic.action_dim(), grid)?;
    let density = Density::new(policy)?;
    let d = grid.dim();
    let (mean, cov) = with_refinement(
        grid,
        |g| {
            let lw = log_weights(&density, critic, state, eta, omega, g)?;
            let norm = log_sum_exp(&lw);
            let p: Vec<f64> = lw.iter().map(|l| (l - norm).exp()).collect();
            let mut mean = vec![0.0; d];
            for (i, pi) in p.iter().enumerate() {
                for (m, a) in mean.iter_mut().zip(g.node(i)) {
                    *m += pi * a;
                }
            }
            let mut cov = vec![vec![0.0; d]; d];
            for (i, pi) in p.iter().enumerate() {
                let a = g.node(i);
                for r in 0..d {
                    for c in 0..d {
                        cov[r][c] += pi * (a[r] - mean[r]) * (a[c] - mean[c]);
                    }
                }
            }
            Ok((mean, cov))
        },
        |(m0, c0), (m1, c1)| {
            let dm = m0.iter().zip(m1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let dc = c0.iter().flatten().zip(c1.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            dm.max(dc)
        },
    )?;
    Ok(Gaussian::new(mean, dense::to_matrix(&cov))?)
}

/// `∫ p ln(p/q)` over the grid.
pub fn kl_quadrature(p: &Gaussian, q: &Gaussian, grid: &ActionGrid) -> Result<f64> {
    check_shapes(p, q.dim(), grid)?;
    let (dp, dq) = (Density::new(p)?, Density::new(q)?);
    with_refinement(
        grid,
        |g| {
            Ok(g.iter()
                .map(|(a, w)| {
                    let lp = dp.ln_pdf(a);
                    w * lp.exp() * (lp - dq.ln_pdf(a))
                })
                .sum())
        },
        |a: &f64, b: &f64| (a - b).abs(),
    )
}

/// `−∫ p ln p` over the grid.
pub fn entropy_quadrature(p: &Gaussian, grid: &ActionGrid) -> Result<f64> {
    check_shapes(p, p.dim(), grid)?;
    let dp = Density::new(p)?;
    with_refinement(
        grid,
        |g| {
            Ok(-g
                .iter()
                .map(|(a, w)| {
                    let lp = dp.ln_pdf(a);
                    w * lp.exp() * lp
                })
                .sum::<f64>())
        },
        |a: &f64, b: &f64| (a - b).abs(),
    )
}
