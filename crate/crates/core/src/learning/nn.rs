//! Dense tanh networks with hand-written backpropagation over a flat
//! parameter vector.

use nalgebra::DMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Softsign,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => fast_tanh(x),
            Activation::Softsign => x / (1.0 + x.abs()),
        }
    }

    /// Derivative written in terms of the activation's output.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Softsign => {
                let r = 1.0 - y.abs();
                r * r
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Softsign => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Softsign),
            _ => None,
        }
    }
}

/// Fully connected network. Hidden layers use `activation`; the output layer
/// is linear. Each layer stores its `in x out` weight matrix row-major,
/// followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Per-layer activations from a forward pass: `acts[0]` is the input and
/// `acts[k + 1]` the output of layer `k`.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("cache holds at least the input")
    }
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        Self {
            sizes: sizes.to_vec(),
            activation,
            params: vec![0.0; Self::param_count(sizes)],
        }
    }

    /// Orthogonal weights scaled by `hidden_gain`, except the last layer which
    /// uses `output_gain`. Biases start at zero.
    pub fn orthogonal<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(sizes, activation);
        let layers = net.num_layers();
        for l in 0..layers {
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            let (rows, cols) = (sizes[l], sizes[l + 1]);
            let q = orthogonal_matrix(rows, cols, rng);
            let off = net.layer_offset(l);
            for r in 0..rows {
                for c in 0..cols {
                    net.params[off + r * cols + c] = gain * q[(r, c)];
                }
            }
        }
        net
    }

    pub fn from_params(sizes: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let expected = Self::param_count(sizes);
        if params.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
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

    fn layer_offset(&self, layer: usize) -> usize {
        Self::param_count(&self.sizes[..=layer])
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.layer_offset(l);
        let w = ArrayView2::from_shape((i, o), &self.params[off..off + i * o]).unwrap();
        let b = ArrayView1::from(&self.params[off + i * o..off + (i + 1) * o]);
        (w, b)
    }

    fn layer_apply(&self, l: usize, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        let (w, b) = self.layer(l);
        let mut h = x.dot(&w);
        h += &b;
        if l + 1 < self.num_layers() {
            let act = self.activation;
            h.mapv_inplace(|v| act.apply(v));
        }
        h
    }

    /// Batched forward pass, one sample per row.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.input_dim(), "input width");
        let mut h = self.layer_apply(0, &x);
        for l in 1..self.num_layers() {
            h = self.layer_apply(l, &h.view());
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> ForwardCache {
        assert_eq!(x.ncols(), self.input_dim(), "input width");
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_owned());
        for l in 0..self.num_layers() {
            let h = self.layer_apply(l, &acts[l].view());
            acts.push(h);
        }
        ForwardCache { acts }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<'_, f64>, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len(), "gradient length");
        let mut dz = d_out.to_owned();
        for l in (0..self.num_layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let a = &cache.acts[l];
            {
                let (gw, gb) = grad[off..off + (i + 1) * o].split_at_mut(i * o);
                let mut gw = ArrayViewMut2::from_shape((i, o), gw).unwrap();
                general_mat_mul(1.0, &a.t(), &dz, 1.0, &mut gw);
                let mut gb = ArrayViewMut1::from(gb);
                gb += &dz.sum_axis(Axis(0));
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut da = dz.dot(&w.t());
                let act = self.activation;
                da.zip_mut_with(a, |d, &y| *d *= act.derivative_from_output(y));
                dz = da;
            }
        }
    }
}

fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let tall = rows >= cols;
    let (m, n) = if tall { (rows, cols) } else { (cols, rows) };
    let g = DMatrix::<f64>::from_fn(m, n, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    if tall {
        q
    } else {
        q.transpose()
    }
}

/// Adam over one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// `tanh` through one `exp`; several times cheaper than the libm routine and
/// accurate to a few ulps in absolute terms.
#[inline]
fn fast_tanh(x: f64) -> f64 {
    if x.abs() > 20.0 {
        return x.signum();
    }
    let e = (2.0 * x).exp();
    1.0 - 2.0 / (e + 1.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
