//! Multivariate Gaussian primitives.
//!
//! Everything is in nats. Constructing a [`Gaussian`] factors its covariance
//! once (with a single jitter retry), so the density-related quantities below
//! cannot fail on a value that already exists.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::check_dim;
use crate::linalg::{dot, Cholesky, Matrix};
use crate::math;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: Matrix,
    chol: Cholesky,
}

impl Gaussian {
    /// Validates symmetry and positive definiteness. A covariance that fails to
    /// factor is retried once with `1e-8·I` added; the jittered matrix is kept.
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        check_dim(mean.len(), cov.rows())?;
        check_dim(mean.len(), cov.cols())?;
        if !cov.is_symmetric() {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let chol = Cholesky::new(&cov)?;
        Ok(Self { mean, cov, chol })
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, Matrix::scaled_identity(d, variance))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// `½ ln |2πe Σ|`
    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        0.5 * (d * math::ln(math::TWO_PI * core::f64::consts::E) + self.chol.log_det())
    }

    /// `KL(self ‖ other)` in closed form.
    pub fn kl(&self, other: &Gaussian) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        let d = self.dim();
        // tr(Σq⁻¹ Σp) = ‖Lq⁻¹ Lp‖²_F, column by column.
        let lp = self.chol.factor();
        let mut trace = 0.0;
        let mut col = alloc::vec![0.0; d];
        for j in 0..d {
            for i in 0..d {
                col[i] = lp[(i, j)];
            }
            let z = other.chol.solve_lower(&col);
            trace += dot(&z, &z);
        }
        let diff: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let maha = other.chol.inv_quad_form(&diff);
        let kl = 0.5 * (trace + maha - d as f64 + other.chol.log_det() - self.chol.log_det());
        Ok(kl.max(0.0))
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let d = self.dim() as f64;
        Ok(-0.5 * (self.chol.inv_quad_form(&diff) + d * math::ln(math::TWO_PI) + self.chol.log_det()))
    }

    /// `mean + L z` with `z` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect();
        let mut x = self.chol.mul_lower(&z);
        for (xi, mi) in x.iter_mut().zip(&self.mean) {
            *xi += mi;
        }
        x
    }
}

pub fn gauss_kl(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    p.kl(q)
}

pub fn gauss_entropy(p: &Gaussian) -> f64 {
    p.entropy()
}

pub fn gauss_sample<R: Rng + ?Sized>(p: &Gaussian, rng: &mut R) -> Vec<f64> {
    p.sample(rng)
}

/// Entropy of `𝒩(·, variance·I)` in `dim` dimensions.
pub fn isotropic_entropy(dim: usize, variance: f64) -> f64 {
    0.5 * dim as f64 * math::ln(math::TWO_PI * core::f64::consts::E * variance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn g1(mean: f64, var: f64) -> Gaussian {
        Gaussian::isotropic(vec![mean], var).unwrap()
    }

    // Trapezoidal quadrature over a wide interval; independent of the closed forms.
    fn quad1(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / (n - 1) as f64;
        let mut s = 0.0;
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            s += w * f(lo + h * i as f64);
        }
        s * h
    }

    fn normal_pdf(x: f64, m: f64, v: f64) -> f64 {
        (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * core::f64::consts::PI * v).sqrt()
    }

    fn kl_quadrature(mp: f64, vp: f64, mq: f64, vq: f64) -> f64 {
        quad1(
            |x| {
                let p = normal_pdf(x, mp, vp);
                if p == 0.0 {
                    0.0
                } else {
                    p * (p.ln() - normal_pdf(x, mq, vq).ln())
                }
            },
            -30.0,
            30.0,
            20001,
        )
    }

    #[test]
    fn kl_of_identical_is_zero() {
        let p = Gaussian::new(vec![0.3, -1.0], Matrix::from_rows(&[[2.0, 0.3], [0.3, 0.5]])).unwrap();
        assert!(p.kl(&p).unwrap() < 1e-12);
    }

    #[test]
    fn kl_matches_quadrature_1d() {
        let a = kl_quadrature(0.0, 1.0, 1.0, 1.0);
        assert!((a - 0.5).abs() < 1e-9);
        assert!((g1(0.0, 1.0).kl(&g1(1.0, 1.0)).unwrap() - a).abs() < 1e-6);

        let b = kl_quadrature(0.0, 2.0, 0.0, 1.0);
        let closed = 0.5 * (2.0 - 1.0 - 2.0f64.ln());
        assert!((b - closed).abs() < 1e-9);
        assert!((g1(0.0, 2.0).kl(&g1(0.0, 1.0)).unwrap() - 0.153_426_409_720_027_3).abs() < 1e-12);
    }

    #[test]
    fn kl_and_entropy_match_quadrature_2d() {
        let p = Gaussian::new(vec![0.2, -0.4], Matrix::from_rows(&[[0.8, 0.3], [0.3, 0.6]])).unwrap();
        let q = Gaussian::new(vec![-0.1, 0.3], Matrix::from_rows(&[[1.2, -0.2], [-0.2, 0.9]])).unwrap();
        let n = 601;
        let (lo, hi) = (-9.0, 9.0);
        let h = (hi - lo) / (n - 1) as f64;
        let (mut kl, mut ent) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let x = [lo + h * i as f64, lo + h * j as f64];
                let lp = p.log_density(&x).unwrap();
                let lq = q.log_density(&x).unwrap();
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                let pd = lp.exp();
                kl += w * pd * (lp - lq);
                ent -= w * pd * lp;
            }
        }
        kl *= h * h;
        ent *= h * h;
        assert!((p.kl(&q).unwrap() - kl).abs() < 1e-6, "{} vs {}", p.kl(&q).unwrap(), kl);
        assert!((p.entropy() - ent).abs() < 1e-6);
    }

    #[test]
    fn entropy_values() {
        let e = g1(0.0, 1.0).entropy();
        let quad = quad1(|x| -normal_pdf(x, 0.0, 1.0) * normal_pdf(x, 0.0, 1.0).ln(), -30.0, 30.0, 20001);
        assert!((e - quad).abs() < 1e-6);
        assert!((e - 1.418_938_533_204_672_7).abs() < 1e-12);

        for d in 1..5 {
            let base = Gaussian::isotropic(vec![0.0; d], 0.01).unwrap();
            let closed = d as f64 * 0.5 * (2.0 * core::f64::consts::PI * core::f64::consts::E * 0.01).ln();
            assert!((base.entropy() - closed).abs() < 1e-12);
            assert!((isotropic_entropy(d, 0.01) - closed).abs() < 1e-12);
        }

        // Σ -> c²Σ adds d ln c
        let cov = Matrix::from_rows(&[[1.0, 0.2, 0.0], [0.2, 0.7, 0.1], [0.0, 0.1, 0.4]]);
        let p = Gaussian::new(vec![0.0; 3], cov.clone()).unwrap();
        let q = Gaussian::new(vec![0.0; 3], cov.scale(9.0)).unwrap();
        assert!((q.entropy() - p.entropy() - 3.0 * 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_covariance_rejected() {
        let r = Gaussian::new(vec![0.0, 0.0], Matrix::zeros(2, 2));
        assert_eq!(r, Err(Error::NotPositiveDefinite));
        let r = Gaussian::new(vec![0.0], Matrix::identity(2));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
        let asym = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]);
        assert!(matches!(Gaussian::new(vec![0.0; 2], asym), Err(Error::InvalidArgument(_))));
        assert!(matches!(g1(0.0, 1.0).kl(&Gaussian::isotropic(vec![0.0; 2], 1.0).unwrap()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sampling_statistics_and_determinism() {
        let p = Gaussian::isotropic(vec![0.0, 0.0], 1.0).unwrap();
        let mut rng = crate::seeded_rng(7);
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let x = p.sample(&mut rng);
            sum[0] += x[0];
            sum[1] += x[1];
        }
        for s in sum {
            assert!((s / n as f64).abs() < 0.02);
        }
        let mut a = crate::seeded_rng(11);
        let mut b = crate::seeded_rng(11);
        for _ in 0..10 {
            assert_eq!(gauss_sample(&p, &mut a), gauss_sample(&p, &mut b));
        }
    }

    fn gaussian2() -> impl Strategy<Value = Gaussian> {
        (prop::collection::vec(-2.0f64..2.0, 2), prop::collection::vec(-1.5f64..1.5, 4), 0.05f64..1.0).prop_map(|(m, a, s)| {
            let a = Matrix::from_row_major(2, 2, a).unwrap();
            let mut c = a.matmul(&a.transpose());
            c.add_diagonal(s);
            Gaussian::new(m, c).unwrap()
        })
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(p in gaussian2(), q in gaussian2()) {
            let kl = gauss_kl(&p, &q).unwrap();
            prop_assert!(kl >= 0.0);
            prop_assert!(gauss_kl(&p, &p).unwrap() < 1e-10);
        }
    }
}
