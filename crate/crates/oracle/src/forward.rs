//! Loop-based network evaluation, one unit at a time.

use gac_core::nn::{Mlp, OutputMap};

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceForward {
    pub output: Vec<f64>,
    /// Smallest `|z|` over all hidden pre-activations; small values mean a
    /// finite-difference probe may cross a rectifier kink.
    pub min_abs_preactivation: f64,
}

/// Evaluates `net` at a single input without using its batched kernels.
pub fn reference_forward(net: &Mlp, x: &[f64]) -> ReferenceForward {
    assert_eq!(x.len(), net.input_dim(), "input width");
    let sizes = net.sizes();
    let layers = net.num_layers();
    let mut act = x.to_vec();
    let mut min_abs = f64::INFINITY;
    for l in 0..layers {
        let (w, b) = net.layer(l);
        let (inp, out) = (sizes[l], sizes[l + 1]);
        let mut next = Vec::with_capacity(out);
        for j in 0..out {
            let mut z = b[j];
            for k in 0..inp {
                z += w[j * inp + k] * act[k];
            }
            if l + 1 < layers {
                min_abs = min_abs.min(z.abs());
                z = if z > 0.0 { z } else { 0.0 };
            }
            next.push(z);
        }
        act = next;
    }
    if let OutputMap::ScaledTanh { center, half_range } = net.output_map() {
        for (j, v) in act.iter_mut().enumerate() {
            *v = center[j] + half_range[j] * v.tanh();
        }
    }
    ReferenceForward { output: act, min_abs_preactivation: min_abs }
}
