//! Plain-text tensor files.
//!
//! ```text
//! tensor layer0.weight 64 3
//! 1.2345678901234567e-1 -4.0000000000000000e0 ...
//! tensor layer0.bias 64
//! ...
//! ```
//!
//! A header line names the tensor and lists its shape (no dimensions for a
//! scalar). The values follow in row-major order, one row of the last
//! dimension per line, each printed with 17 significant digits so that every
//! `f64` reads back bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use gac_core::actor::GaussianPolicy;
use gac_core::critic::{ActionValue, CriticNetwork};
use gac_core::envs::ActionBox;
use gac_core::linalg::Matrix;
use gac_core::nn::{Mlp, OutputMap};

use crate::{GacError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape and data length");
        Self { name: name.into(), shape, data }
    }

    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, vec![], vec![value])
    }
}

/// Formats one value with 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_tensors<W: Write>(out: &mut W, tensors: &[Tensor]) -> std::io::Result<()> {
    for t in tensors {
        write!(out, "tensor {}", t.name)?;
        for d in &t.shape {
            write!(out, " {d}")?;
        }
        writeln!(out)?;
        let row = t.shape.last().copied().unwrap_or(1).max(1);
        for chunk in t.data.chunks(row) {
            let line: Vec<String> = chunk.iter().map(|v| format_value(*v)).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

pub fn tensors_to_string(tensors: &[Tensor]) -> String {
    let mut buf = Vec::new();
    write_tensors(&mut buf, tensors).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Parses a tensor file. `path` is only used in error messages.
pub fn parse_tensors(text: &str, path: &Path) -> Result<Vec<Tensor>> {
    let err = |line: usize, message: String| GacError::Format { path: path.to_path_buf(), line, message };
    let mut out: Vec<Tensor> = Vec::new();
    let mut expected = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("tensor ") {
            if let Some(t) = out.last() {
                if t.data.len() != expected {
                    return Err(err(i + 1, format!("tensor `{}` has {} values, expected {expected}", t.name, t.data.len())));
                }
            }
            let mut parts = rest.split_whitespace();
            let name = parts.next().ok_or_else(|| err(i + 1, "missing tensor name".into()))?;
            if out.iter().any(|t| t.name == name) {
                return Err(err(i + 1, format!("duplicate tensor `{name}`")));
            }
            let shape = parts.map(|p| p.parse::<usize>().map_err(|e| err(i + 1, format!("bad dimension `{p}`: {e}")))).collect::<Result<Vec<_>>>()?;
            expected = shape.iter().product();
            out.push(Tensor { name: name.to_string(), shape, data: Vec::with_capacity(expected) });
            continue;
        }
        let t = out.last_mut().ok_or_else(|| err(i + 1, "values before the first tensor header".into()))?;
        for tok in line.split_whitespace() {
            t.data.push(tok.parse::<f64>().map_err(|e| err(i + 1, format!("bad value `{tok}`: {e}")))?);
        }
    }
    if let Some(t) = out.last() {
        if t.data.len() != expected {
            return Err(err(text.lines().count(), format!("tensor `{}` has {} values, expected {expected}", t.name, t.data.len())));
        }
    }
    Ok(out)
}

pub fn save_tensors(path: &Path, tensors: &[Tensor]) -> Result<()> {
    fs::write(path, tensors_to_string(tensors)).map_err(|e| GacError::io(path, e))
}

pub fn load_tensors(path: &Path) -> Result<Vec<Tensor>> {
    let text = fs::read_to_string(path).map_err(|e| GacError::io(path, e))?;
    parse_tensors(&text, path)
}

fn mlp_tensors(prefix: &str, net: &Mlp) -> Vec<Tensor> {
    let mut out = Vec::new();
    for l in 0..net.num_layers() {
        let (w, b) = net.layer(l);
        let (inp, o) = (net.sizes()[l], net.sizes()[l + 1]);
        out.push(Tensor::new(format!("{prefix}layer{l}.weight"), vec![o, inp], w.to_vec()));
        out.push(Tensor::new(format!("{prefix}layer{l}.bias"), vec![o], b.to_vec()));
    }
    out
}

struct Lookup<'a> {
    tensors: &'a [Tensor],
    path: &'a Path,
}

impl<'a> Lookup<'a> {
    fn get(&self, name: &str) -> Result<&'a Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| GacError::Format { path: self.path.to_path_buf(), line: 0, message: format!("missing tensor `{name}`") })
    }

    fn bad(&self, message: String) -> GacError {
        GacError::Format { path: self.path.to_path_buf(), line: 0, message }
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        let t = self.get(name)?;
        if !t.shape.is_empty() {
            return Err(self.bad(format!("`{name}` must be a scalar")));
        }
        Ok(t.data[0])
    }

    fn count(&self, name: &str) -> Result<usize> {
        let v = self.scalar(name)?;
        if !(v >= 0.0 && v.fract() == 0.0 && v < 1e9) {
            return Err(self.bad(format!("`{name}` must be a non-negative integer")));
        }
        Ok(v as usize)
    }

    fn mlp(&self, prefix: &str, output: OutputMap) -> Result<Mlp> {
        let mut sizes = Vec::new();
        let mut layers = Vec::new();
        while let Ok(w) = self.get(&format!("{prefix}layer{}.weight", layers.len())) {
            let b = self.get(&format!("{prefix}layer{}.bias", layers.len()))?;
            if w.shape.len() != 2 || b.shape != [w.shape[0]] {
                return Err(self.bad(format!("layer {} has inconsistent shapes", layers.len())));
            }
            if sizes.is_empty() {
                sizes.push(w.shape[1]);
            } else if *sizes.last().expect("nonempty") != w.shape[1] {
                return Err(self.bad(format!("layer {} input width does not match the previous layer", layers.len())));
            }
            sizes.push(w.shape[0]);
            layers.push((w, b));
        }
        if layers.is_empty() {
            return Err(self.bad(format!("no layers under `{prefix}`")));
        }
        let mut net = Mlp::zeros(&sizes, output);
        for (l, (w, b)) in layers.into_iter().enumerate() {
            let (wd, bd) = net.layer_mut(l);
            wd.copy_from_slice(&w.data);
            bd.copy_from_slice(&b.data);
        }
        Ok(net)
    }
}

/// Mean network under `mean.`, the action box and the covariance `sigma`.
pub fn actor_tensors(actor: &GaussianPolicy) -> Vec<Tensor> {
    let d = actor.action_dim();
    let bounds = actor.action_box();
    let mut out = vec![
        Tensor::new("action.low", vec![d], bounds.low().to_vec()),
        Tensor::new("action.high", vec![d], bounds.high().to_vec()),
        Tensor::new("sigma", vec![d, d], actor.covariance().as_slice().to_vec()),
    ];
    out.extend(mlp_tensors("mean.", actor.mean_network()));
    out
}

pub fn actor_from_tensors(tensors: &[Tensor], path: &Path) -> Result<GaussianPolicy> {
    let look = Lookup { tensors, path };
    let low = look.get("action.low")?.data.clone();
    let high = look.get("action.high")?.data.clone();
    let bounds = ActionBox::new(low, high)?;
    let d = bounds.dim();
    let sigma = look.get("sigma")?;
    if sigma.shape != [d, d] {
        return Err(look.bad("`sigma` must be square in the action dimension".into()));
    }
    let cov = Matrix::from_row_major(d, d, sigma.data.clone())?;
    let mean = look.mlp("mean.", GaussianPolicy::output_map(&bounds))?;
    Ok(GaussianPolicy::from_parts(mean.input_dim(), mean, cov, bounds)?)
}

/// Network under `q.` and the action width `action_dim`.
pub fn critic_tensors(critic: &CriticNetwork) -> Vec<Tensor> {
    let mut out = vec![Tensor::scalar("action_dim", critic.action_dim() as f64)];
    out.extend(mlp_tensors("q.", critic.mlp()));
    out
}

pub fn critic_from_tensors(tensors: &[Tensor], path: &Path) -> Result<CriticNetwork> {
    let look = Lookup { tensors, path };
    let da = look.count("action_dim")?;
    let net = look.mlp("q.", OutputMap::Identity)?;
    let ds = net.input_dim().checked_sub(da).ok_or_else(|| look.bad("action width exceeds the network input".into()))?;
    Ok(CriticNetwork::from_mlp(ds, da, net)?)
}

pub fn save_actor(path: &Path, actor: &GaussianPolicy) -> Result<()> {
    save_tensors(path, &actor_tensors(actor))
}

pub fn load_actor(path: &Path) -> Result<GaussianPolicy> {
    actor_from_tensors(&load_tensors(path)?, path)
}

pub fn save_critic(path: &Path, critic: &CriticNetwork) -> Result<()> {
    save_tensors(path, &critic_tensors(critic))
}

pub fn load_critic(path: &Path) -> Result<CriticNetwork> {
    critic_from_tensors(&load_tensors(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn awkward_values_round_trip_exactly() {
        let vals = vec![0.1, -1.0 / 3.0, f64::MIN_POSITIVE, 5e-324, f64::MAX, -0.0, 1e300, 123456789.12345679, f64::EPSILON];
        let t = vec![Tensor::new("x", vec![3, 3], vals.clone()), Tensor::scalar("s", std::f64::consts::PI)];
        let back = parse_tensors(&tensors_to_string(&t), Path::new("mem")).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back[0].data.iter().zip(&vals) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back[1].shape, Vec::<usize>::new());
        assert_eq!(back[1].data[0], std::f64::consts::PI);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let p = Path::new("mem");
        assert!(parse_tensors("1.0\n", p).is_err());
        assert!(parse_tensors("tensor a 2\n1.0\n", p).is_err());
        assert!(parse_tensors("tensor a 1\n1.0\ntensor a 1\n2.0\n", p).is_err());
        assert!(parse_tensors("tensor a 1\nabc\n", p).is_err());
        assert!(parse_tensors("tensor a x\n", p).is_err());
    }

    #[test]
    fn value_format_has_seventeen_digits() {
        assert_eq!(format_value(0.1), "1.0000000000000001e-1");
        assert_eq!(format_value(-2.0), "-2.0000000000000000e0");
    }
}
