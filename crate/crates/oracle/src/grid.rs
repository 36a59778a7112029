//! Tensor-product trapezoidal grids over an action box.

use gac_core::gauss::Gaussian;

use crate::{OracleError, Result};

/// Smallest resolution accepted for one-dimensional grids.
pub const MIN_RESOLUTION_1D: usize = 64;
/// Smallest per-axis resolution accepted for two-dimensional grids.
pub const MIN_RESOLUTION_2D: usize = 48;

#[derive(Clone, Debug, PartialEq)]
pub struct ActionGrid {
    low: Vec<f64>,
    high: Vec<f64>,
    resolution: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ActionGrid {
    /// `resolution` nodes per axis, end points included.
    pub fn new(low: Vec<f64>, high: Vec<f64>, resolution: usize) -> Result<Self> {
        let d = low.len();
        if d != high.len() {
            return Err(OracleError::InvalidArgument("low and high differ in length".into()));
        }
        let min = match d {
            1 => MIN_RESOLUTION_1D,
            2 => MIN_RESOLUTION_2D,
            _ => return Err(OracleError::UnsupportedDimension(d)),
        };
        if resolution < min {
            return Err(OracleError::InvalidArgument(format!("resolution {resolution} is below {min}")));
        }
        if low.iter().zip(&high).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(OracleError::InvalidArgument("empty or unbounded range".into()));
        }
        let axes: Vec<Vec<(f64, f64)>> = low
            .iter()
            .zip(&high)
            .map(|(l, h)| {
                let step = (h - l) / (resolution - 1) as f64;
                (0..resolution)
                    .map(|i| {
                        let w = if i == 0 || i + 1 == resolution { 0.5 * step } else { step };
                        (l + step * i as f64, w)
                    })
                    .collect()
            })
            .collect();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        if d == 1 {
            for &(x, w) in &axes[0] {
                nodes.push(x);
                weights.push(w);
            }
        } else {
            for &(x, wx) in &axes[0] {
                for &(y, wy) in &axes[1] {
                    nodes.extend_from_slice(&[x, y]);
                    weights.push(wx * wy);
                }
            }
        }
        Ok(Self { low, high, resolution, nodes, weights })
    }

    /// Box of `n_std` marginal standard deviations around the mean of `g`.
    pub fn covering(g: &Gaussian, n_std: f64, resolution: usize) -> Result<Self> {
        let half: Vec<f64> = g.cov().diag().iter().map(|v| n_std * v.sqrt()).collect();
        let low = g.mean().iter().zip(&half).map(|(m, h)| m - h).collect();
        let high = g.mean().iter().zip(&half).map(|(m, h)| m + h).collect();
        Self::new(low, high, resolution)
    }

    /// Same box with the spacing halved; every old node is kept.
    pub fn refined(&self) -> Self {
        Self::new(self.low.clone(), self.high.clone(), 2 * self.resolution - 1).expect("refinement of a valid grid")
    }

    /// Whether the box contains `n_std` marginal standard deviations of `g`
    /// on each side of its mean.
    pub fn covers(&self, g: &Gaussian, n_std: f64) -> bool {
        let diag = g.cov().diag();
        g.mean().iter().zip(&diag).zip(self.low.iter().zip(&self.high)).all(|((m, v), (l, h))| {
            let r = n_std * v.sqrt();
            *l <= m - r && m + r <= *h
        })
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(node, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.nodes.chunks(self.dim()).zip(self.weights.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gac_core::linalg::Matrix;

    #[test]
    fn weights_integrate_polynomials() {
        let g = ActionGrid::new(vec![-1.0], vec![2.0], 64).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert!((total - 3.0).abs() < 1e-13);
        let lin: f64 = g.iter().map(|(x, w)| w * x[0]).sum();
        assert!((lin - 1.5).abs() < 1e-13);
        let g2 = ActionGrid::new(vec![0.0, -1.0], vec![1.0, 1.0], 48).unwrap();
        assert_eq!(g2.len(), 48 * 48);
        assert!((g2.weights().iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn resolution_floors_and_dimensions() {
        assert!(ActionGrid::new(vec![0.0], vec![1.0], 63).is_err());
        assert!(ActionGrid::new(vec![0.0; 2], vec![1.0; 2], 47).is_err());
        assert_eq!(ActionGrid::new(vec![0.0; 3], vec![1.0; 3], 64), Err(OracleError::UnsupportedDimension(3)));
        assert!(ActionGrid::new(vec![1.0], vec![1.0], 64).is_err());
    }

    #[test]
    fn refinement_keeps_nodes() {
        let g = ActionGrid::new(vec![-1.0], vec![1.0], 65).unwrap();
        let r = g.refined();
        assert_eq!(r.resolution(), 129);
        for i in 0..g.len() {
            assert!((g.node(i)[0] - r.node(2 * i)[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn covering_box() {
        let p = Gaussian::new(vec![1.0, -2.0], Matrix::from_rows(&[[4.0, 0.5], [0.5, 0.25]])).unwrap();
        let g = ActionGrid::covering(&p, 6.0, 48).unwrap();
        assert!((g.low()[0] - (1.0 - 12.0)).abs() < 1e-12);
        assert!((g.high()[1] - (-2.0 + 3.0)).abs() < 1e-12);
        assert!(g.covers(&p, 6.0));
        assert!(!g.covers(&p, 6.5));
    }
}
