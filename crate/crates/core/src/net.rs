//! Fully connected tanh network t ↦ (ŝ, ê, î, r̂, d̂) with a hand-written
//! reverse sweep.
//!
//! All weights and biases live in one flat vector, layer by layer, each
//! layer storing its row-major `(out, in)` weight block followed by its
//! bias. Optimizers work directly on that vector.

use std::io::{BufRead, Write};
use std::ops::Range;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::Vec5;
use crate::model::{sigmoid, softplus, RawParams};

pub const CHECKPOINT_MAGIC: &str = "FRACPINN-CKPT-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputHead {
    /// Positive outputs summing to one.
    #[default]
    Softmax,
    /// Positive outputs, sum unconstrained.
    Softplus,
}

impl OutputHead {
    fn name(self) -> &'static str {
        match self {
            OutputHead::Softmax => "softmax",
            OutputHead::Softplus => "softplus",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    dims: Vec<usize>,
    head: OutputHead,
    params: Vec<f64>,
    /// Start of each layer's weight block; its bias follows at `start + out * in`.
    offsets: Vec<usize>,
}

/// Forward values of one evaluation, enough for one reverse sweep.
#[derive(Debug, Clone)]
pub struct Tape {
    dims: Vec<usize>,
    /// Layer inputs: `acts[0] = [t]`, `acts[l]` is the tanh output of hidden layer l.
    acts: Vec<Vec<f64>>,
    logits: Vec5,
    output: Vec5,
}

impl Tape {
    pub fn output(&self) -> Vec5 {
        self.output
    }

    pub fn logits(&self) -> Vec5 {
        self.logits
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims[0] != 1 || dims[dims.len() - 1] != 5 || dims.contains(&0) {
        return Err(Error::Config(format!(
            "layer dims must start at 1, end at 5 and contain no zero width, got {dims:?}"
        )));
    }
    Ok(())
}

fn layout(dims: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(dims.len() - 1);
    let mut at = 0;
    for w in dims.windows(2) {
        offsets.push(at);
        at += w[0] * w[1] + w[1];
    }
    (offsets, at)
}

/// Xavier-uniform weights, zero biases, deterministic in `seed`.
pub fn init_xavier(dims: &[usize], head: OutputHead, seed: u64) -> Result<Network> {
    let mut net = Network::zeros(dims, head)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in 0..net.n_layers() {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let w = net.weight_range(l);
        for v in &mut net.params[w] {
            *v = dist.sample(&mut rng);
        }
    }
    Ok(net)
}

impl Network {
    pub fn zeros(dims: &[usize], head: OutputHead) -> Result<Self> {
        validate_dims(dims)?;
        let (offsets, n) = layout(dims);
        Ok(Network { dims: dims.to_vec(), head, params: vec![0.0; n], offsets })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(Error::Mismatch(format!("expected {} parameters, got {}", self.params.len(), p.len())));
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    pub fn weight_range(&self, layer: usize) -> Range<usize> {
        let start = self.offsets[layer];
        start..start + self.dims[layer] * self.dims[layer + 1]
    }

    pub fn bias_range(&self, layer: usize) -> Range<usize> {
        let start = self.weight_range(layer).end;
        start..start + self.dims[layer + 1]
    }

    /// Squared Euclidean norm of the weights (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        (0..self.n_layers()).flat_map(|l| self.params[self.weight_range(l)].iter()).map(|w| w * w).sum()
    }

    /// Evaluates the network at scaled time `t` and records a tape.
    pub fn forward(&self, t: f64) -> (Vec5, Tape) {
        let last = self.n_layers() - 1;
        let mut acts = Vec::with_capacity(self.n_layers());
        acts.push(vec![t]);
        let mut logits = [0.0; 5];
        for l in 0..=last {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[self.weight_range(l)];
            let b = &self.params[self.bias_range(l)];
            let input = &acts[l];
            let mut z: Vec<f64> = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *zo += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if l == last {
                logits.copy_from_slice(&z[..n_out]);
            } else {
                for v in &mut z {
                    *v = v.tanh();
                }
                acts.push(z);
            }
        }
        let output = self.apply_head(&logits);
        let tape = Tape { dims: self.dims.clone(), acts, logits, output };
        (output, tape)
    }

    pub fn eval(&self, t: f64) -> Vec5 {
        self.forward(t).0
    }

    fn apply_head(&self, z: &Vec5) -> Vec5 {
        match self.head {
            OutputHead::Softmax => {
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e = z.map(|v| (v - m).exp());
                let s: f64 = e.iter().sum();
                e.map(|v| v / s)
            }
            OutputHead::Softplus => z.map(softplus),
        }
    }

    /// Reverse sweep: accumulates parameter gradients into `grads` and
    /// returns d(output · cotangent)/dt.
    pub fn backward(&self, tape: &Tape, cotangent: &Vec5, grads: &mut [f64]) -> Result<f64> {
        if tape.dims != self.dims {
            return Err(Error::TapeMismatch { tape: tape.dims.clone(), net: self.dims.clone() });
        }
        if grads.len() != self.params.len() {
            return Err(Error::Mismatch(format!(
                "gradient buffer has {} entries, network has {}",
                grads.len(),
                self.params.len()
            )));
        }
        let mut delta: Vec<f64> = match self.head {
            OutputHead::Softmax => {
                let y = &tape.output;
                let dot: f64 = (0..5).map(|k| y[k] * cotangent[k]).sum();
                (0..5).map(|k| y[k] * (cotangent[k] - dot)).collect()
            }
            OutputHead::Softplus => (0..5).map(|k| cotangent[k] * sigmoid(tape.logits[k])).collect(),
        };
        for l in (0..self.n_layers()).rev() {
            let n_in = self.dims[l];
            let input = &tape.acts[l];
            let wr = self.weight_range(l);
            let br = self.bias_range(l);
            for (o, d) in delta.iter().enumerate() {
                grads[br.start + o] += d;
                let g = &mut grads[wr.start + o * n_in..wr.start + (o + 1) * n_in];
                for (gi, a) in g.iter_mut().zip(input) {
                    *gi += d * a;
                }
            }
            let w = &self.params[wr];
            let mut back = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                for (b, wv) in back.iter_mut().zip(row) {
                    *b += d * wv;
                }
            }
            if l > 0 {
                for (b, a) in back.iter_mut().zip(input) {
                    *b *= 1.0 - a * a;
                }
            }
            delta = back;
        }
        Ok(delta[0])
    }

    /// Writes a versioned text checkpoint of the network and the raw parameters.
    pub fn write_checkpoint<W: Write>(&self, raw: &RawParams, mut out: W) -> Result<()> {
        writeln!(out, "{CHECKPOINT_MAGIC}")?;
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        writeln!(out, "dims {}", dims.join(" "))?;
        writeln!(out, "head {}", self.head.name())?;
        writeln!(out, "raw {}", join_floats(&raw.to_array()))?;
        for l in 0..self.n_layers() {
            writeln!(out, "w{l} {}", join_floats(&self.params[self.weight_range(l)]))?;
            writeln!(out, "b{l} {}", join_floats(&self.params[self.bias_range(l)]))?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<(Network, RawParams)> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut lines = input.lines();
        let mut next = |tag: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing `{tag}` line")))??;
            match line.split_once(' ') {
                Some((t, rest)) if t == tag => Ok(rest.to_string()),
                _ if tag.is_empty() => Ok(line),
                _ => Err(bad(&format!("expected `{tag}` line"))),
            }
        };
        if next("")? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let dims: Vec<usize> =
            next("dims")?.split_whitespace().map(|s| s.parse().map_err(|_| bad("bad dims"))).collect::<Result<_>>()?;
        let head = match next("head")?.as_str() {
            "softmax" => OutputHead::Softmax,
            "softplus" => OutputHead::Softplus,
            other => return Err(bad(&format!("unknown head `{other}`"))),
        };
        let raw = parse_floats(&next("raw")?)?;
        let raw: [f64; 5] = raw.try_into().map_err(|_| bad("raw needs 5 values"))?;
        let mut net = Network::zeros(&dims, head)?;
        for l in 0..net.n_layers() {
            for (tag, range) in [(format!("w{l}"), net.weight_range(l)), (format!("b{l}"), net.bias_range(l))] {
                let vals = parse_floats(&next(&tag)?)?;
                if vals.len() != range.len() {
                    return Err(bad(&format!("{tag} has {} values, expected {}", vals.len(), range.len())));
                }
                net.params[range].copy_from_slice(&vals);
            }
        }
        Ok((net, RawParams::from_array(raw)))
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| Error::Checkpoint(format!("bad float `{t}`")))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn xavier_is_deterministic_and_bounded() {
        let dims = [1, 32, 16, 5];
        let a = init_xavier(&dims, OutputHead::Softmax, 7).unwrap();
        let b = init_xavier(&dims, OutputHead::Softmax, 7).unwrap();
        assert_eq!(a, b);
        let c = init_xavier(&dims, OutputHead::Softmax, 8).unwrap();
        assert_ne!(a, c);
        let bound = (6.0f64 / 33.0).sqrt();
        assert!((bound - 0.4264).abs() < 1e-4);
        assert!(a.params()[a.weight_range(0)].iter().all(|w| w.abs() <= bound));
        for l in 0..a.n_layers() {
            assert!(a.params()[a.bias_range(l)].iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn dims_are_validated() {
        assert!(Network::zeros(&[2, 4, 5], OutputHead::Softmax).is_err());
        assert!(Network::zeros(&[1, 4, 4], OutputHead::Softmax).is_err());
        assert!(Network::zeros(&[1, 0, 5], OutputHead::Softmax).is_err());
        assert!(Network::zeros(&[1], OutputHead::Softmax).is_err());
    }

    #[test]
    fn zero_network_gives_uniform_softmax() {
        let net = Network::zeros(&[1, 8, 5], OutputHead::Softmax).unwrap();
        assert_eq!(net.eval(0.3), [0.2; 5]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let net = init_xavier(&[1, 16, 16, 5], OutputHead::Softmax, 3).unwrap();
        for k in 0..50 {
            let y = net.eval(k as f64 / 49.0);
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(y.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn single_tanh_unit_logit() {
        let mut net = Network::zeros(&[1, 1, 5], OutputHead::Softplus).unwrap();
        let w0 = net.weight_range(0).start;
        net.params_mut()[w0] = 1.0;
        let w1 = net.weight_range(1).start;
        net.params_mut()[w1] = 1.0;
        let (_, tape) = net.forward(0.0);
        assert_eq!(tape.logits()[0], 0.0);
        let (_, tape) = net.forward(0.5);
        assert!((tape.logits()[0] - 0.5f64.tanh()).abs() < 1e-16);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let net = init_xavier(&[1, 8, 8, 5], OutputHead::Softmax, 1).unwrap();
        let (_, tape) = net.forward(0.4);
        let mut g = vec![0.0; net.num_params()];
        let dt = net.backward(&tape, &[0.0; 5], &mut g).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert_eq!(dt, 0.0);
    }

    #[test]
    fn tape_mismatch_is_reported() {
        let a = init_xavier(&[1, 8, 5], OutputHead::Softmax, 1).unwrap();
        let b = init_xavier(&[1, 4, 5], OutputHead::Softmax, 1).unwrap();
        let (_, tape) = a.forward(0.1);
        let mut g = vec![0.0; b.num_params()];
        assert!(matches!(b.backward(&tape, &[1.0; 5], &mut g), Err(Error::TapeMismatch { .. })));
    }

    #[test]
    fn softmax_jacobian_rows_sum_to_zero() {
        // cotangent of ones differentiates the (constant) output sum
        let net = init_xavier(&[1, 8, 8, 5], OutputHead::Softmax, 2).unwrap();
        let (_, tape) = net.forward(0.7);
        let mut g = vec![0.0; net.num_params()];
        let dt = net.backward(&tape, &[1.0; 5], &mut g).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        assert!(dt.abs() < 1e-15);
    }

    fn objective(net: &Network, t: f64, cot: &Vec5) -> f64 {
        let y = net.eval(t);
        (0..5).map(|k| y[k] * cot[k]).sum()
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for trial in 0..120 {
            let head = if trial % 2 == 0 { OutputHead::Softmax } else { OutputHead::Softplus };
            let mut net = init_xavier(&[1, 8, 8, 5], head, trial).unwrap();
            for p in net.params_mut() {
                *p += rng.random_range(-0.3..0.3);
            }
            let t: f64 = rng.random_range(0.0..1.0);
            let cot: Vec5 = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let (_, tape) = net.forward(t);
            let mut g = vec![0.0; net.num_params()];
            let dt = net.backward(&tape, &cot, &mut g).unwrap();
            let h = 1e-6;
            for j in 0..net.num_params() {
                let orig = net.params()[j];
                net.params_mut()[j] = orig + h;
                let up = objective(&net, t, &cot);
                net.params_mut()[j] = orig - h;
                let dn = objective(&net, t, &cot);
                net.params_mut()[j] = orig;
                let fd = (up - dn) / (2.0 * h);
                let err = (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-4);
                worst = worst.max(err);
            }
            let fd_t = (objective(&net, t + 1e-6, &cot) - objective(&net, t - 1e-6, &cot)) / 2e-6;
            assert!((dt - fd_t).abs() / dt.abs().max(1e-4) < 1e-5);
        }
        assert!(worst < 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn gradients_accumulate() {
        let net = init_xavier(&[1, 4, 5], OutputHead::Softplus, 5).unwrap();
        let (_, tape) = net.forward(0.2);
        let cot = [0.3, -0.1, 0.5, 0.2, -0.7];
        let mut once = vec![0.0; net.num_params()];
        net.backward(&tape, &cot, &mut once).unwrap();
        let mut twice = vec![0.0; net.num_params()];
        net.backward(&tape, &cot, &mut twice).unwrap();
        net.backward(&tape, &cot, &mut twice).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = init_xavier(&[1, 6, 3, 5], OutputHead::Softplus, 9).unwrap();
        let raw = RawParams::from_array([0.1, -2.0, 1.0 / 3.0, 5e-300, 7.0]);
        let mut buf = Vec::new();
        net.write_checkpoint(&raw, &mut buf).unwrap();
        assert!(buf.starts_with(CHECKPOINT_MAGIC.as_bytes()));
        let (back, raw2) = Network::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, net);
        assert_eq!(raw2, raw);
        let mut broken = buf.clone();
        broken[0] = b'X';
        assert!(Network::read_checkpoint(&broken[..]).is_err());
    }
}
