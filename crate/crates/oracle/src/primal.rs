//! Direct solution of the constrained guide problem for a quadratic critic:
//!
//! ```text
//! maximize    E_{𝒩(μ, Σ)}[½aᵀHa + ψᵀa]
//! subject to  KL(𝒩(μ, Σ) ‖ π) ≤ ε,   entropy(𝒩(μ, Σ)) ≥ κ
//! ```
//!
//! With `π = 𝒩(φ, S)` and `S = L Lᵀ`, the covariance is written
//! `Σ = L C Cᵀ Lᵀ` for lower-triangular `C` with log-diagonal `x₁ (, x₂)` and
//! off-diagonal `x₃`. For fixed `Σ` the best mean solves a trust-region
//! problem in the whitened mean offset, done here by bisection on its
//! multiplier. The covariance parameters are searched on a lattice that is
//! refined repeatedly around the best point.

use gac_core::gauss::Gaussian;
use gac_core::linalg::Matrix;

use crate::dense::{self, Mat};
use crate::{OracleError, Result};

/// Lattice points per covariance parameter.
const LATTICE_1D: usize = 4001;
const LATTICE_2D: usize = 61;
/// Half-width of a refined lattice, in spacings of the previous one.
const REFINE_SPAN: f64 = 2.0;
const REFINEMENTS: usize = 4;
/// Relative tolerance on KL and absolute tolerance on entropy for calling a
/// constraint active.
pub const ACTIVE_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedGuide {
    pub guide: Gaussian,
    /// `E[½aᵀHa + ψᵀa]` at the optimum.
    pub objective: f64,
    pub kl: f64,
    pub entropy: f64,
    pub kl_active: bool,
    pub entropy_active: bool,
}

struct Problem {
    d: usize,
    l: Mat,
    m: Mat,
    /// `−M = V diag(μ) Vᵀ`
    mu: Vec<f64>,
    vecs: Mat,
    gt: Vec<f64>,
    base: f64,
    base_entropy: f64,
    epsilon: f64,
    kappa: f64,
}

struct Candidate {
    objective: f64,
    u: Vec<f64>,
    cct: Mat,
    kl: f64,
    entropy: f64,
}

impl Problem {
    fn lower(&self, x: &[f64]) -> Mat {
        if self.d == 1 {
            vec![vec![x[0].exp()]]
        } else {
            vec![vec![x[0].exp(), 0.0], vec![x[2], x[1].exp()]]
        }
    }

    fn candidate(&self, x: &[f64]) -> Option<Candidate> {
        let c = self.lower(x);
        let cct = dense::matmul(&c, &dense::transpose(&c));
        let log_diag: f64 = x[..self.d].iter().sum();
        let trace: f64 = (0..self.d).map(|i| cct[i][i]).sum();
        let cov_kl = 0.5 * (trace - self.d as f64 - 2.0 * log_diag);
        let entropy = self.base_entropy + log_diag;
        let rho = self.epsilon - cov_kl;
        if rho < 0.0 || entropy < self.kappa {
            return None;
        }
        let (ut, mean_value) = trust_region_max(&self.mu, &self.gt, 2.0 * rho);
        let u = dense::mat_vec(&self.vecs, &ut);
        let spread: f64 = (0..self.d).map(|i| (0..self.d).map(|j| self.m[i][j] * cct[j][i]).sum::<f64>()).sum();
        Some(Candidate {
            objective: self.base + mean_value + 0.5 * spread,
            kl: cov_kl + 0.5 * dense::dot(&u, &u),
            u,
            cct,
            entropy,
        })
    }

    // Best feasible lattice point in the box `center ± half`.
    fn search(&self, center: &[f64], half: &[f64], n: usize) -> Option<(Vec<f64>, Candidate)> {
        let axes: Vec<Vec<f64>> = center
            .iter()
            .zip(half)
            .map(|(c, h)| (0..n).map(|i| c - h + 2.0 * h * i as f64 / (n - 1) as f64).collect())
            .collect();
        let mut best: Option<(Vec<f64>, Candidate)> = None;
        let mut consider = |x: Vec<f64>| {
            if let Some(cand) = self.candidate(&x) {
                if best.as_ref().is_none_or(|(_, b)| cand.objective > b.objective) {
                    best = Some((x, cand));
                }
            }
        };
        if self.d == 1 {
            for &a in &axes[0] {
                consider(vec![a]);
            }
        } else {
            for &a in &axes[0] {
                for &b in &axes[1] {
                    for &c in &axes[2] {
                        consider(vec![a, b, c]);
                    }
                }
            }
        }
        best
    }
}

/// `max gᵀu + ½uᵀMu` over `‖u‖² ≤ r2` for negative definite `M = −V diag(μ) Vᵀ`,
/// with `g̃ = Vᵀg`. Returns `u` in eigen coordinates and the maximum.
fn trust_region_max(mu: &[f64], gt: &[f64], r2: f64) -> (Vec<f64>, f64) {
    let at = |lambda: f64| -> Vec<f64> { gt.iter().zip(mu).map(|(g, m)| g / (lambda + m)).collect() };
    let value = |u: &[f64]| u.iter().zip(gt).zip(mu).map(|((u, g), m)| g * u - 0.5 * m * u * u).sum::<f64>();
    let norm2 = |lambda: f64| gt.iter().zip(mu).map(|(g, m)| (g / (lambda + m)).powi(2)).sum::<f64>();
    if norm2(0.0) <= r2 {
        let u = at(0.0);
        let v = value(&u);
        return (u, v);
    }
    if r2 <= 0.0 {
        return (vec![0.0; gt.len()], 0.0);
    }
    // ‖(λI − M)⁻¹g‖ decreases in λ and is at most ‖g‖/λ.
    let (mut lo, mut hi) = (0.0, gt.iter().map(|g| g * g).sum::<f64>().sqrt() / r2.sqrt());
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm2(mid) > r2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = at(hi);
    let v = value(&u);
    (u, v)
}

/// Eigenvalues and eigenvectors (columns) of a symmetric 1×1 or 2×2 matrix.
fn symmetric_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    if m.len() == 1 {
        return (vec![m[0][0]], vec![vec![1.0]]);
    }
    let (a, b, c) = (m[0][0], m[0][1], m[1][1]);
    if b == 0.0 {
        return (vec![a, c], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }
    let angle = 0.5 * (2.0 * b).atan2(a - c);
    let (sn, cs) = angle.sin_cos();
    let l0 = a * cs * cs + 2.0 * b * sn * cs + c * sn * sn;
    let l1 = a * sn * sn - 2.0 * b * sn * cs + c * cs * cs;
    (vec![l0, l1], vec![vec![cs, -sn], vec![sn, cs]])
}

// Root of ½(e^{2x} − 1 − 2x) = ε on the side given by `sign`.
fn log_scale_bound(epsilon: f64, sign: f64) -> f64 {
    let f = |x: f64| 0.5 * ((2.0 * x).exp() - 1.0 - 2.0 * x) - epsilon;
    let (mut lo, mut hi) = (0.0, sign * (epsilon + 10.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Solves the constrained guide problem for `Q(a) = ½aᵀHa + ψᵀa` (+ const)
/// with `H ≺ 0`.
pub fn constrained_guide_reference(policy: &Gaussian, h: &Matrix, psi: &[f64], epsilon: f64, kappa: f64) -> Result<ConstrainedGuide> {
    let d = policy.dim();
    if d != 1 && d != 2 {
        return Err(OracleError::UnsupportedDimension(d));
    }
    if h.rows() != d || h.cols() != d || psi.len() != d {
        return Err(gac_core::Error::DimensionMismatch { expected: d, found: psi.len() }.into());
    }
    if !(epsilon > 0.0) {
        return Err(OracleError::InvalidArgument("KL bound must be positive".into()));
    }
    let hd = dense::from_matrix(h);
    let neg_h: Mat = hd.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    if dense::cholesky(&neg_h).is_none() {
        return Err(OracleError::InvalidArgument("critic curvature must be negative definite".into()));
    }
    let s = dense::from_matrix(policy.cov());
    let l = dense::cholesky(&s).ok_or(OracleError::InvalidArgument("policy covariance is not positive definite".into()))?;
    let lt = dense::transpose(&l);
    let phi = policy.mean();
    let m = dense::matmul(&lt, &dense::matmul(&hd, &l));
    let grad_at_phi: Vec<f64> = psi.iter().zip(dense::mat_vec(&hd, phi)).map(|(p, v)| p + v).collect();
    let g = dense::mat_vec(&lt, &grad_at_phi);
    let base = dense::dot(psi, phi) + 0.5 * dense::dot(phi, &dense::mat_vec(&hd, phi));
    let base_entropy = 0.5 * (d as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln()) + dense::det(&s).ln());

    let upper = log_scale_bound(epsilon, 1.0);
    if kappa > base_entropy + d as f64 * upper {
        return Err(OracleError::InfeasibleBounds);
    }
    let neg_m: Mat = m.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let (mu, vecs) = symmetric_eigen(&neg_m);
    let gt = dense::mat_vec(&dense::transpose(&vecs), &g);
    let problem = Problem { d, l, m, mu, vecs, gt, base, base_entropy, epsilon, kappa };
    let wide = (-log_scale_bound(epsilon, -1.0)).max(upper);
    let (n, mut half) = if d == 1 { (LATTICE_1D, vec![wide]) } else { (LATTICE_2D, vec![wide, wide, (2.0 * epsilon).sqrt()]) };
    let mut center = vec![0.0; half.len()];
    let (mut x, mut best) = problem.search(&center, &half, n).ok_or(OracleError::InfeasibleBounds)?;
    for _ in 0..REFINEMENTS {
        half = half.iter().map(|h| REFINE_SPAN * 2.0 * h / (n - 1) as f64).collect();
        center = x.clone();
        if let Some((xr, cand)) = problem.search(&center, &half, n) {
            if cand.objective >= best.objective {
                x = xr;
                best = cand;
            }
        }
    }

    let mean: Vec<f64> = phi.iter().zip(dense::mat_vec(&problem.l, &best.u)).map(|(p, v)| p + v).collect();
    let sigma = dense::matmul(&problem.l, &dense::matmul(&best.cct, &dense::transpose(&problem.l)));
    let mut cov = dense::to_matrix(&sigma);
    cov.symmetrize();
    Ok(ConstrainedGuide {
        guide: Gaussian::new(mean, cov)?,
        objective: best.objective,
        kl: best.kl,
        entropy: best.entropy,
        kl_active: best.kl >= epsilon * (1.0 - ACTIVE_TOL),
        entropy_active: best.entropy <= kappa + ACTIVE_TOL,
    })
}
