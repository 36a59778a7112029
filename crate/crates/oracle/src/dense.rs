// Plain row-of-rows matrices with textbook algorithms. Kept separate from
// `gac_core::linalg` so the references do not share its factorizations.

use gac_core::linalg::Matrix;

pub(crate) type Mat = Vec<Vec<f64>>;

pub(crate) fn from_matrix(m: &Matrix) -> Mat {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub(crate) fn to_matrix(m: &Mat) -> Matrix {
    Matrix::from_rows(m)
}

pub(crate) fn identity(n: usize) -> Mat {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub(crate) fn transpose(a: &Mat) -> Mat {
    let (r, c) = (a.len(), a.first().map_or(0, Vec::len));
    (0..c).map(|j| (0..r).map(|i| a[i][j]).collect()).collect()
}

pub(crate) fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter().map(|row| (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect()).collect()
}

pub(crate) fn mat_vec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}

pub(crate) fn add(a: &Mat, b: &Mat, scale_b: f64) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(u, v)| u + scale_b * v).collect()).collect()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(u, v)| u * v).sum()
}

/// Gaussian elimination with partial pivoting; `None` for a singular system.
pub(crate) fn solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut m: Mat = a.iter().zip(b).map(|(row, bi)| row.iter().copied().chain(std::iter::once(*bi)).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col] == 0.0 {
            return None;
        }
        m.swap(col, pivot);
        for i in col + 1..n {
            let f = m[i][col] / m[col][col];
            for j in col..=n {
                m[i][j] -= f * m[col][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    Some(x)
}

pub(crate) fn inverse(a: &Mat) -> Option<Mat> {
    let n = a.len();
    let cols: Option<Vec<Vec<f64>>> = identity(n).iter().map(|e| solve(a, e)).collect();
    Some(transpose(&cols?))
}

pub(crate) fn det(a: &Mat) -> f64 {
    let n = a.len();
    let mut m = a.clone();
    let mut d = 1.0;
    for col in 0..n {
        let Some(pivot) = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())) else {
            return 0.0;
        };
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(col, pivot);
            d = -d;
        }
        d *= m[col][col];
        for i in col + 1..n {
            let f = m[i][col] / m[col][col];
            for j in col..n {
                m[i][j] -= f * m[col][j];
            }
        }
    }
    d
}

/// Lower-triangular `L` with `L Lᵀ = a`.
pub(crate) fn cholesky(a: &Mat) -> Option<Mat> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if !(v > 0.0) {
                    return None;
                }
                l[i][i] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}
