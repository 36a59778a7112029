//! Central finite differences.

/// `∂f/∂x_i ≈ (f(x + h e_i) − f(x − h e_i)) / 2h`
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Jacobian of a vector function, one row per output.
pub fn fd_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    assert!(h > 0.0, "step must be positive");
    let mut probe = x.to_vec();
    let mut columns = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        columns.push(up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect::<Vec<_>>());
    }
    let rows = columns.first().map_or(0, Vec::len);
    (0..rows).map(|r| columns.iter().map(|c| c[r]).collect()).collect()
}

/// Hessian from second differences of function values.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    assert!(h > 0.0, "step must be positive");
    let d = x.len();
    let mut probe = x.to_vec();
    let f0 = f(x);
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        out[i][i] = (up - 2.0 * f0 + down) / (h * h);
        for j in 0..i {
            let mut at = |si: f64, sj: f64| {
                probe[i] = x[i] + si * h;
                probe[j] = x[j] + sj * h;
                let v = f(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let v = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}
