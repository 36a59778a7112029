//! Discounted LQR optima for `s' = A s + B a`, reward `−(sᵀQs + aᵀRa)`.

use gac_core::linalg::Matrix;

use crate::dense::{self, Mat};
use crate::{OracleError, Result};

/// Scalar case in closed form. Returns `(P, K)` with value `−P s²` and
/// optimal action `−K s`.
///
/// `P` is the positive root of `γb²P² + (r − γ(qb² + a²r))P − qr = 0`.
pub fn scalar_lqr(a: f64, b: f64, q: f64, r: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0 && gamma < 1.0) || !(r > 0.0) || q < 0.0 {
        return Err(OracleError::InvalidArgument("need 0 < γ < 1, r > 0, q ≥ 0".into()));
    }
    let p = if b == 0.0 {
        if gamma * a * a >= 1.0 {
            return Err(OracleError::InvalidArgument("uncontrollable unstable system".into()));
        }
        q / (1.0 - gamma * a * a)
    } else {
        let qa = gamma * b * b;
        let qb = r - gamma * (q * b * b + a * a * r);
        let qc = -q * r;
        let disc = (qb * qb - 4.0 * qa * qc).sqrt();
        // Stable form of the larger root.
        if qb >= 0.0 {
            -2.0 * qc / (qb + disc)
        } else {
            (disc - qb) / (2.0 * qa)
        }
    };
    let k = gamma * a * b * p / (r + gamma * b * b * p);
    Ok((p, k))
}

/// Policy iteration from the zero gain: evaluate the gain exactly by solving
/// the discounted Lyapunov equation as a linear system, then improve it. The
/// zero gain has to be stabilizing in the discounted sense, `γ ρ(A)² < 1`.
pub fn lqr_gain_policy_iteration(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, gamma: f64) -> Result<Matrix> {
    let (a, b, q, r) = (dense::from_matrix(a), dense::from_matrix(b), dense::from_matrix(q), dense::from_matrix(r));
    let n = a.len();
    let m = r.len();
    if b.len() != n || b[0].len() != m || q.len() != n || !(gamma > 0.0 && gamma < 1.0) {
        return Err(OracleError::InvalidArgument("inconsistent LQR shapes".into()));
    }
    let mut k: Mat = vec![vec![0.0; n]; m];
    for _ in 0..200 {
        // P = Q + KᵀRK + γ (A − BK)ᵀ P (A − BK), solved for vec(P).
        let closed = dense::add(&a, &dense::matmul(&b, &k), -1.0);
        let cost = dense::add(&q, &dense::matmul(&dense::transpose(&k), &dense::matmul(&r, &k)), 1.0);
        let mut sys = vec![vec![0.0; n * n]; n * n];
        let mut rhs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let row = i * n + j;
                sys[row][row] += 1.0;
                for u in 0..n {
                    for v in 0..n {
                        sys[row][u * n + v] -= gamma * closed[u][i] * closed[v][j];
                    }
                }
                rhs[row] = cost[i][j];
            }
        }
        let p_vec = dense::solve(&sys, &rhs).ok_or(OracleError::NoConvergence)?;
        let p: Mat = p_vec.chunks(n).map(<[f64]>::to_vec).collect();
        // K = γ (R + γ BᵀPB)⁻¹ BᵀPA
        let bt = dense::transpose(&b);
        let btp = dense::matmul(&bt, &p);
        let lhs = dense::add(&r, &dense::matmul(&btp, &b), gamma);
        let btpa = dense::matmul(&btp, &a);
        let inv = dense::inverse(&lhs).ok_or(OracleError::NoConvergence)?;
        let next: Mat = dense::matmul(&inv, &btpa).into_iter().map(|row| row.into_iter().map(|v| gamma * v).collect()).collect();
        let change = next.iter().flatten().zip(k.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        k = next;
        if change <= 1e-14 * (1.0 + k.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max)) {
            return Ok(dense::to_matrix(&k));
        }
    }
    Err(OracleError::NoConvergence)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_scalar_system() {
        let (p, k) = scalar_lqr(1.0, 1.0, 1.0, 1.0, 0.99).unwrap();
        // 0.99 P² − 0.98 P − 1 = 0
        assert!((0.99 * p * p - 0.98 * p - 1.0).abs() < 1e-12);
        assert!((p - 1.615_251_245_663_011_5).abs() < 1e-12);
        assert!((k - 0.615_251_245_663_011_5).abs() < 1e-12);
        assert_eq!(scalar_lqr(1.0, 1.0, 0.0, 1.0, 0.9).unwrap().1, 0.0);
    }

    #[test]
    fn policy_iteration_matches_closed_form() {
        let one = |v: f64| Matrix::from_rows(&[[v]]);
        for (a, b, q, r) in [(1.0, 1.0, 1.0, 1.0), (0.9, 0.5, 2.0, 0.3), (1.02, 2.0, 0.5, 1.5)] {
            let k = lqr_gain_policy_iteration(&one(a), &one(b), &one(q), &one(r), 0.95).unwrap();
            let (_, kc) = scalar_lqr(a, b, q, r, 0.95).unwrap();
            assert!((k.row(0)[0] - kc).abs() < 1e-10, "{a} {b} {q} {r}");
        }
    }
}
