//! Feed-forward networks with hand-written reverse mode.
//!
//! Hidden layers are affine maps followed by rectified-linear units; the output
//! layer is affine, optionally squashed by a scaled `tanh` so actor means stay
//! inside the action box. All parameters live in one flat vector, layer by
//! layer, each layer storing its `out × in` weight (row-major) followed by its
//! bias. Batches are row-major `n × dim` slices.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::{Error, Result};

/// Map applied to the final affine layer.
#[derive(Clone, Debug, PartialEq)]
pub enum OutputMap {
    Identity,
    /// `center + half_range ⊙ tanh(z)`
    ScaledTanh { center: Vec<f64>, half_range: Vec<f64> },
}

impl OutputMap {
    fn apply(&self, z: &mut [f64], out_dim: usize) {
        if let OutputMap::ScaledTanh { center, half_range } = self {
            for row in z.chunks_mut(out_dim) {
                for ((v, c), h) in row.iter_mut().zip(center).zip(half_range) {
                    *v = c + h * math::tanh(*v);
                }
            }
        }
    }

    // `outputs` are post-map values; the derivative is recovered from them.
    fn backprop(&self, outputs: &[f64], d_out: &mut [f64], out_dim: usize) {
        if let OutputMap::ScaledTanh { center, half_range } = self {
            for (y_row, d_row) in outputs.chunks(out_dim).zip(d_out.chunks_mut(out_dim)) {
                for (((y, d), c), h) in y_row.iter().zip(d_row.iter_mut()).zip(center).zip(half_range) {
                    let t = if *h == 0.0 { 0.0 } else { (y - c) / h };
                    *d *= h * (1.0 - t * t);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    output: OutputMap,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    n: usize,
    /// `acts[0]` is the input; `acts[l]` the output of layer `l - 1`
    /// (post-activation). The last entry is the network output.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds at least the input")
    }

    pub fn batch_size(&self) -> usize {
        self.n
    }

    /// Hidden-layer pre-activations are not stored; for rectified units the
    /// post-activation is zero exactly when the pre-activation is `<= 0`.
    pub fn hidden_activations(&self) -> &[Vec<f64>] {
        &self.acts[1..self.acts.len() - 1]
    }
}

fn layer_len(out: usize, inp: usize) -> usize {
    out * inp + out
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`; all parameters zero.
    pub fn zeros(sizes: &[usize], output: OutputMap) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs input and output sizes");
        if let OutputMap::ScaledTanh { center, half_range } = &output {
            assert_eq!(center.len(), sizes[sizes.len() - 1]);
            assert_eq!(half_range.len(), sizes[sizes.len() - 1]);
        }
        let n: usize = sizes.windows(2).map(|w| layer_len(w[1], w[0])).sum();
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
            output,
        }
    }

    /// Hidden weights use Glorot-uniform limits `√(6 / (fan_in + fan_out))`
    /// with zero biases; the output layer's weights and biases are drawn from
    /// `U(-0.003, 0.003)`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], output: OutputMap, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes, output);
        let layers = net.num_layers();
        let mut offset = 0;
        for l in 0..layers {
            let (inp, out) = (net.sizes[l], net.sizes[l + 1]);
            let w = &mut net.params[offset..offset + out * inp];
            if l + 1 == layers {
                w.iter_mut().for_each(|v| *v = rng.gen_range(-0.003..0.003));
                let b = &mut net.params[offset + out * inp..offset + layer_len(out, inp)];
                b.iter_mut().for_each(|v| *v = rng.gen_range(-0.003..0.003));
            } else {
                let limit = math::sqrt(6.0 / (inp + out) as f64);
                w.iter_mut().for_each(|v| *v = rng.gen_range(-limit..limit));
            }
            offset += layer_len(out, inp);
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn output_map(&self) -> &OutputMap {
        &self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                found: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.sizes[..=layer]
            .windows(2)
            .map(|w| layer_len(w[1], w[0]))
            .sum()
    }

    /// Weight (`out × in`, row-major) and bias of one layer.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (inp, out) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = if layer == 0 { 0 } else { self.layer_offset(layer) };
        let w = &self.params[off..off + out * inp];
        let b = &self.params[off + out * inp..off + layer_len(out, inp)];
        (w, b)
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (inp, out) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = if layer == 0 { 0 } else { self.layer_offset(layer) };
        let (w, b) = self.params[off..off + layer_len(out, inp)].split_at_mut(out * inp);
        (w, b)
    }

    /// Named tensors in storage order: `(name, shape)`.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::with_capacity(2 * self.num_layers());
        for l in 0..self.num_layers() {
            let (inp, o) = (self.sizes[l], self.sizes[l + 1]);
            out.push((format!("layer{l}.weight"), vec![o, inp]));
            out.push((format!("layer{l}.bias"), vec![o]));
        }
        out
    }

    fn check_batch(&self, inputs: &[f64], n: usize) -> Result<()> {
        if inputs.len() != n * self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: n * self.input_dim(),
                found: inputs.len(),
            });
        }
        Ok(())
    }

    /// Forward pass over `n` rows.
    pub fn forward(&self, inputs: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_batch(inputs, n)?;
        let mut x = inputs.to_vec();
        for l in 0..self.num_layers() {
            x = self.affine(l, &x, n);
            if l + 1 < self.num_layers() {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        self.output.apply(&mut x, self.output_dim());
        Ok(x)
    }

    pub fn forward_cache(&self, inputs: &[f64], n: usize) -> Result<ForwardCache> {
        self.check_batch(inputs, n)?;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(inputs.to_vec());
        for l in 0..self.num_layers() {
            let mut z = self.affine(l, &acts[l], n);
            if l + 1 < self.num_layers() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            } else {
                self.output.apply(&mut z, self.output_dim());
            }
            acts.push(z);
        }
        Ok(ForwardCache { n, acts })
    }

    // z = x Wᵀ + b
    fn affine(&self, layer: usize, x: &[f64], n: usize) -> Vec<f64> {
        let (inp, out) = (self.sizes[layer], self.sizes[layer + 1]);
        let (w, b) = self.layer(layer);
        let mut z = Vec::with_capacity(n * out);
        for _ in 0..n {
            z.extend_from_slice(b);
        }
        gemm(n, inp, out, x, inp, 1, w, 1, inp, 1.0, &mut z, out);
        z
    }

    /// Reverse pass for upstream gradient `d_out` (`n × out`).
    ///
    /// Parameter gradients are accumulated into `grad_params` when given; the
    /// gradient with respect to the inputs (`n × in`) is returned when
    /// `want_input_grad` is set.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_out: &[f64],
        mut grad_params: Option<&mut [f64]>,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let n = cache.n;
        assert_eq!(d_out.len(), n * self.output_dim());
        if let Some(g) = grad_params.as_deref() {
            assert_eq!(g.len(), self.params.len());
        }
        let mut delta = d_out.to_vec();
        self.output.backprop(cache.output(), &mut delta, self.output_dim());

        let layers = self.num_layers();
        let mut offset = self.params.len();
        for l in (0..layers).rev() {
            let (inp, out) = (self.sizes[l], self.sizes[l + 1]);
            offset -= layer_len(out, inp);
            let x = &cache.acts[l];
            if let Some(g) = grad_params.as_deref_mut() {
                let (gw, gb) = g[offset..offset + layer_len(out, inp)].split_at_mut(out * inp);
                // dW += deltaᵀ x
                gemm(out, n, inp, &delta, 1, out, x, inp, 1, 1.0, gw, inp);
                for row in delta.chunks(out) {
                    for (b, d) in gb.iter_mut().zip(row) {
                        *b += d;
                    }
                }
            }
            if l == 0 && !want_input_grad {
                return None;
            }
            // dx = delta W
            let (w, _) = self.layer(l);
            let mut dx = vec![0.0; n * inp];
            gemm(n, out, inp, &delta, out, 1, w, inp, 1, 0.0, &mut dx, inp);
            if l == 0 {
                return Some(dx);
            }
            // Subgradient 0 at the kink.
            for (d, a) in dx.iter_mut().zip(x) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = dx;
        }
        None
    }

    /// Gradient of the outputs' weighted sum with respect to the inputs.
    pub fn input_gradient(&self, inputs: &[f64], n: usize, d_out: &[f64]) -> Result<Vec<f64>> {
        let cache = self.forward_cache(inputs, n)?;
        Ok(self.backward(&cache, d_out, None, true).expect("input gradient requested"))
    }
}

/// `C = alpha·A B + beta·C` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * rsc + (n - 1));
    if k <= 8 || n <= 4 {
        gemm_thin(m, k, n, a, rsa, csa, b, rsb, csb, beta, c, rsc);
        return;
    }
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

// Shapes with a short inner or output dimension, where the packed kernel
// spends most of its time packing.
#[allow(clippy::too_many_arguments)]
fn gemm_thin(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if n == 1 {
        let bcol: Vec<f64> = (0..k).map(|p| b[p * rsb]).collect();
        for i in 0..m {
            let acc = if csa == 1 {
                dot(&a[i * rsa..i * rsa + k], &bcol)
            } else {
                (0..k).map(|p| a[i * rsa + p * csa] * bcol[p]).sum()
            };
            let ci = &mut c[i * rsc];
            *ci = if beta == 0.0 { acc } else { beta * *ci + acc };
        }
        return;
    }
    let packed;
    let b_rows: &[f64] = if csb == 1 && rsb == n {
        &b[..k * n]
    } else {
        packed = (0..k).flat_map(|p| (0..n).map(move |j| b[p * rsb + j * csb])).collect::<Vec<_>>();
        &packed
    };
    for i in 0..m {
        let row = &mut c[i * rsc..i * rsc + n];
        if beta == 0.0 {
            row.iter_mut().for_each(|v| *v = 0.0);
        } else if beta != 1.0 {
            row.iter_mut().for_each(|v| *v *= beta);
        }
        for p in 0..k {
            let aip = a[i * rsa + p * csa];
            if aip == 0.0 {
                continue;
            }
            for (cv, bv) in row.iter_mut().zip(&b_rows[p * n..(p + 1) * n]) {
                *cv += aip * bv;
            }
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (u, v) in xc.zip(yc) {
        for t in 0..4 {
            acc[t] += u[t] * v[t];
        }
    }
    let tail: f64 = xr.iter().zip(yr).map(|(u, v)| u * v).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Adaptive moment estimation over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    beta1_t: f64,
    beta2_t: f64,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            beta1_t: 1.0,
            beta2_t: 1.0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.beta1_t *= self.beta1;
        self.beta2_t *= self.beta2;
        let c1 = 1.0 - self.beta1_t;
        let c2 = 1.0 - self.beta2_t;
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (math::sqrt(v_hat) + self.eps);
        }
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|v| *v = 0.0);
        self.v.iter_mut().for_each(|v| *v = 0.0);
        self.beta1_t = 1.0;
        self.beta2_t = 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Straightforward per-sample forward pass used as an oracle.
    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in 0..net.num_layers() {
            let (w, b) = net.layer(l);
            let (inp, out) = (net.sizes()[l], net.sizes()[l + 1]);
            let mut z = vec![0.0; out];
            for o in 0..out {
                z[o] = b[o];
                for i in 0..inp {
                    z[o] += w[o * inp + i] * h[i];
                }
                if l + 1 < net.num_layers() {
                    z[o] = z[o].max(0.0);
                }
            }
            h = z;
        }
        if let OutputMap::ScaledTanh { center, half_range } = net.output_map() {
            for i in 0..h.len() {
                h[i] = center[i] + half_range[i] * h[i].tanh();
            }
        }
        h
    }

    fn random_inputs(rng: &mut crate::SeededRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
    }

    #[test]
    fn batch_forward_matches_naive() {
        let mut rng = crate::seeded_rng(3);
        let out = OutputMap::ScaledTanh { center: vec![0.5, -1.0], half_range: vec![2.0, 1.0] };
        let mut net = Mlp::init(&[3, 7, 5, 2], out, &mut rng);
        // Bigger output weights so tanh is exercised away from its linear part.
        net.params_mut().iter_mut().for_each(|p| *p *= 3.0);
        let n = 9;
        let x = random_inputs(&mut rng, n * 3);
        let y = net.forward(&x, n).unwrap();
        for i in 0..n {
            let yi = naive_forward(&net, &x[i * 3..(i + 1) * 3]);
            for j in 0..2 {
                assert!((y[i * 2 + j] - yi[j]).abs() < 1e-13);
            }
        }
        assert!(net.forward(&x[..5], 2).is_err());
    }

    #[test]
    fn parameter_and_input_gradients_match_finite_differences() {
        let mut rng = crate::seeded_rng(5);
        let out = OutputMap::ScaledTanh { center: vec![0.0], half_range: vec![1.5] };
        let mut net = Mlp::init(&[2, 6, 4, 1], out, &mut rng);
        net.params_mut().iter_mut().for_each(|p| *p *= 4.0);
        let n = 3;
        let x = random_inputs(&mut rng, n * 2);
        let w = [0.7, -1.1, 0.4];
        let f = |net: &Mlp, x: &[f64]| -> f64 {
            net.forward(x, n).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let cache = net.forward_cache(&x, n).unwrap();
        let mut grad = vec![0.0; net.num_params()];
        let gx = net.backward(&cache, &w, Some(&mut grad), true).unwrap();
        let h = 1e-6;
        for p in 0..net.num_params() {
            let mut a = net.clone();
            a.params_mut()[p] += h;
            let mut b = net.clone();
            b.params_mut()[p] -= h;
            let fd = (f(&a, &x) - f(&b, &x)) / (2.0 * h);
            assert!((fd - grad[p]).abs() < 1e-6 * (1.0 + fd.abs()), "param {p}: {fd} vs {}", grad[p]);
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (f(&net, &xp) - f(&net, &xm)) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn zero_network_outputs_center() {
        let out = OutputMap::ScaledTanh { center: vec![0.25], half_range: vec![2.0] };
        let net = Mlp::zeros(&[4, 8, 1], out);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5], 1).unwrap(), vec![0.25]);
    }

    #[test]
    fn layout_and_init_ranges() {
        let mut rng = crate::seeded_rng(1);
        let net = Mlp::init(&[3, 10, 1], OutputMap::Identity, &mut rng);
        assert_eq!(net.num_params(), 3 * 10 + 10 + 10 + 1);
        let (w0, b0) = net.layer(0);
        let lim = (6.0f64 / 13.0).sqrt();
        assert!(w0.iter().all(|v| v.abs() <= lim));
        assert!(b0.iter().all(|v| *v == 0.0));
        let (w1, b1) = net.layer(1);
        assert!(w1.iter().chain(b1).all(|v| v.abs() <= 0.003));
        let layout = net.tensor_layout();
        assert_eq!(layout[0], (String::from("layer0.weight"), vec![10, 3]));
        assert_eq!(layout[3], (String::from("layer1.bias"), vec![1]));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(2);
        let mut p = [1.0, -1.0];
        adam.step(&mut p, &[0.5, -2.0], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }
}
