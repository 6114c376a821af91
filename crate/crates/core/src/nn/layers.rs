//! Layer descriptors. A layer only stores indices into the [`Params`] of the network that owns
//! it, so cloning a network (for a target copy) clones its weights and nothing else.

use rand::Rng;

use super::params::Params;
use super::tape::{Tape, Var};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    w: usize,
    b: usize,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(params: &mut Params, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let w = params.add_glorot(&format!("{name}.w"), input, output, rng);
        let b = params.add_const(&format!("{name}.b"), 1, output, 0.0);
        Self { w, b, input, output }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Params, x: Var) -> Var {
        let w = tape.param(params, self.w);
        let b = tape.param(params, self.b);
        let y = tape.matmul(x, w);
        tape.add(y, b)
    }

    pub fn weight_index(&self) -> usize {
        self.w
    }

    pub fn bias_index(&self) -> usize {
        self.b
    }
}

/// Stack of linear layers with a shared hidden activation and a separate output activation.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
    hidden_act: Activation,
    out_act: Activation,
}

impl Mlp {
    pub fn new(
        params: &mut Params,
        name: &str,
        sizes: &[usize],
        hidden_act: Activation,
        out_act: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs an input and an output size");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers, hidden_act, out_act }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Params, mut x: Var) -> Var {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, params, x);
            x = if i == last { self.out_act.apply(tape, x) } else { self.hidden_act.apply(tape, x) };
        }
        x
    }

    pub fn output(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }
}

/// Single-layer LSTM with fused gate weights `[x, h] -> [i, f, g, o]`.
#[derive(Clone, Debug)]
pub struct Lstm {
    w: usize,
    b: usize,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(params: &mut Params, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let w = params.add_glorot(&format!("{name}.w"), input + hidden, 4 * hidden, rng);
        let mut bias = Tensor::zeros(1, 4 * hidden);
        // forget gate starts open
        for j in hidden..2 * hidden {
            bias.data[j] = 1.0;
        }
        let b = params.add(format!("{name}.b"), bias);
        Self { w, b, input, hidden }
    }

    /// Runs the sequence from a zero state and returns the hidden state after every step.
    pub fn forward(&self, tape: &mut Tape, params: &Params, xs: &[Var]) -> Vec<Var> {
        let batch = tape.shape(xs[0]).0;
        let w = tape.param(params, self.w);
        let b = tape.param(params, self.b);
        let h0 = tape.constant(Tensor::zeros(batch, self.hidden));
        let (mut h, mut c) = (h0, h0);
        let hd = self.hidden;
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            let xh = tape.concat_cols(&[x, h]);
            let z = tape.matmul(xh, w);
            let z = tape.add(z, b);
            let zi = tape.slice_cols(z, 0, hd);
            let zf = tape.slice_cols(z, hd, hd);
            let zg = tape.slice_cols(z, 2 * hd, hd);
            let zo = tape.slice_cols(z, 3 * hd, hd);
            let i = tape.sigmoid(zi);
            let f = tape.sigmoid(zf);
            let g = tape.tanh(zg);
            let o = tape.sigmoid(zo);
            let fc = tape.mul(f, c);
            let ig = tape.mul(i, g);
            c = tape.add(fc, ig);
            let tc = tape.tanh(c);
            h = tape.mul(o, tc);
            out.push(h);
        }
        out
    }
}

/// Per-row normalisation with learned gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    gain: usize,
    bias: usize,
    dim: usize,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(params: &mut Params, name: &str, dim: usize) -> Self {
        let gain = params.add_const(&format!("{name}.gain"), 1, dim, 1.0);
        let bias = params.add_const(&format!("{name}.bias"), 1, dim, 0.0);
        Self { gain, bias, dim }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Params, x: Var) -> Var {
        let inv = 1.0 / self.dim as f64;
        let s = tape.sum_cols(x);
        let mean = tape.scale(s, inv);
        let centered = tape.sub(x, mean);
        let sq = tape.square(centered);
        let vs = tape.sum_cols(sq);
        let var = tape.scale(vs, inv);
        let var = tape.add_scalar(var, Self::EPS);
        let sd = tape.sqrt(var);
        let normed = tape.div(centered, sd);
        let g = tape.param(params, self.gain);
        let b = tape.param(params, self.bias);
        let y = tape.mul(normed, g);
        tape.add(y, b)
    }
}
