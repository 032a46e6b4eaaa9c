//! Dense feed-forward network with truncated Taylor propagation of input
//! derivatives.
//!
//! Every hidden layer computes `a = f(W a_prev + b)`; the output layer is
//! affine. Alongside the value, each evaluation carries the first derivative
//! along `t`, the first derivative along `x` and the second derivative along
//! `x`, all with respect to the *raw* (unscaled) inputs:
//!
//! ```text
//! a_t  = f'(z) z_t
//! a_x  = f'(z) z_x
//! a_xx = f''(z) z_x^2 + f'(z) z_xx
//! ```
//!
//! The batched path stacks the four channels of `N` points column-wise into a
//! `width x 4N` matrix, so one matrix product per layer moves all of them. The
//! reverse pass differentiates that extended computation with respect to every
//! weight and bias.

use std::io::{Read, Write};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"PINN";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    /// Linear hidden units. Only useful for analytic probes in tests.
    Identity,
}

impl Activation {
    /// Returns `(f, f', f'', f''')` at `z`.
    #[inline]
    fn derivatives(self, z: f64) -> (f64, f64, f64, f64) {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(z);
                let d1 = s * (1.0 - s);
                let m = 1.0 - 2.0 * s;
                let d2 = d1 * m;
                let d3 = d1 * m * m - 2.0 * d1 * d1;
                (s, d1, d2, d3)
            }
            Activation::Tanh => {
                let y = z.tanh();
                let d1 = 1.0 - y * y;
                let d2 = -2.0 * y * d1;
                let d3 = -2.0 * d1 * d1 + 4.0 * y * y * d1;
                (y, d1, d2, d3)
            }
            Activation::Identity => (z, 1.0, 0.0, 0.0),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    /// Multiplies `(t - offset_t, x - offset_x)` before the first layer.
    pub input_scale: [f64; 2],
    pub input_offset: [f64; 2],
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            layer_sizes: vec![2, 50, 50, 50, 1],
            activation: Activation::Sigmoid,
            input_scale: [1.0, 1.0],
            input_offset: [0.0, 0.0],
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = &self.layer_sizes;
        if sizes.len() < 3 {
            return Err(Error::config(
                "network.layer_sizes",
                "need input, at least one hidden layer and output",
            ));
        }
        if sizes[0] != 2 || sizes[sizes.len() - 1] != 1 {
            return Err(Error::config(
                "network.layer_sizes",
                "first layer must have size 2 and last layer size 1",
            ));
        }
        if sizes.contains(&0) {
            return Err(Error::config("network.layer_sizes", "sizes must be positive"));
        }
        if !self.input_scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::config("network.input_scale", "components must be > 0"));
        }
        if !self.input_offset.iter().all(|o| o.is_finite()) {
            return Err(Error::config("network.input_offset", "must be finite"));
        }
        Ok(())
    }
}

/// Weights and biases stored flat: per layer a row-major `(out, in)` weight
/// matrix followed by its bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layer_sizes: Vec<usize>,
    data: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        let len = layer_sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        NetworkParams {
            layer_sizes: layer_sizes.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.layer_sizes[..layer + 1]
            .windows(2)
            .take(layer)
            .map(|w| w[1] * (w[0] + 1))
            .sum()
    }

    pub fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (n_in, n_out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
        let off = self.layer_offset(layer);
        ArrayView2::from_shape((n_out, n_in), &self.data[off..off + n_in * n_out])
            .expect("layer shape")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let (n_in, n_out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
        let off = self.layer_offset(layer) + n_in * n_out;
        ArrayView1::from(&self.data[off..off + n_out])
    }

    fn weights_and_bias_mut(&mut self, layer: usize) -> (ArrayViewMut2<'_, f64>, &mut [f64]) {
        let (n_in, n_out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
        let off = self.layer_offset(layer);
        let (w, rest) = self.data[off..].split_at_mut(n_in * n_out);
        let w = ArrayViewMut2::from_shape((n_out, n_in), w).expect("layer shape");
        (w, &mut rest[..n_out])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(self.layer_sizes.len() as u32).to_le_bytes())?;
        for &n in &self.layer_sizes {
            out.write_all(&(n as u32).to_le_bytes())?;
        }
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        if &word != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        input.read_exact(&mut word)?;
        let count = u32::from_le_bytes(word) as usize;
        if !(2..=1024).contains(&count) {
            return Err(Error::Checkpoint(format!("implausible layer count {count}")));
        }
        let mut sizes = Vec::with_capacity(count);
        for _ in 0..count {
            input.read_exact(&mut word)?;
            sizes.push(u32::from_le_bytes(word) as usize);
        }
        let mut params = NetworkParams::zeros(&sizes);
        let mut buf = [0u8; 8];
        for v in params.data.iter_mut() {
            input.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        if !params.all_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(params)
    }
}

/// Gradient of a scalar loss, laid out exactly like the parameters it differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient(pub NetworkParams);

impl ParamGradient {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(config: &NetworkConfig, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros(&config.layer_sizes);
    for layer in 0..params.num_layers() {
        let fan_in = config.layer_sizes[layer] as f64;
        let fan_out = config.layer_sizes[layer + 1] as f64;
        let bound = (6.0 / (fan_in + fan_out)).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let (mut w, _) = params.weights_and_bias_mut(layer);
        w.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
    }
    params
}

/// Value plus first and second derivative along one input direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// An axis-aligned unit direction in raw `(t, x)` input space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    T,
    X,
}

impl Direction {
    pub fn from_vector(dt: f64, dx: f64) -> Result<Self> {
        match (dt, dx) {
            (a, b) if a == 1.0 && b == 0.0 => Ok(Direction::T),
            (a, b) if a == 0.0 && b == 1.0 => Ok(Direction::X),
            _ => Err(Error::UnsupportedDirection(dt, dx)),
        }
    }
}

/// Anything that can report `c` and its derivatives along an axis.
pub trait JetProvider {
    fn jet(&self, t: f64, x: f64, direction: Direction) -> Result<Jet2>;

    fn value(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.jet(t, x, Direction::T)?.value)
    }
}

/// Output jets for a batch of points: `c`, `c_t`, `c_x`, `c_xx`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointJets {
    pub value: Vec<f64>,
    pub d_t: Vec<f64>,
    pub d_x: Vec<f64>,
    pub d_xx: Vec<f64>,
}

impl PointJets {
    pub fn zeros(n: usize) -> Self {
        PointJets {
            value: vec![0.0; n],
            d_t: vec![0.0; n],
            d_x: vec![0.0; n],
            d_xx: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// A scalar loss over batch output jets. Returns the loss and its adjoint
/// (partial derivative) with respect to every jet component.
pub trait JetObjective {
    fn evaluate(&self, jets: &PointJets) -> Result<(f64, PointJets)>;
}

impl<F> JetObjective for F
where
    F: Fn(&PointJets) -> Result<(f64, PointJets)>,
{
    fn evaluate(&self, jets: &PointJets) -> Result<(f64, PointJets)> {
        self(jets)
    }
}

struct HiddenCache {
    /// f', f'', f''' at the value pre-activations, each `(width, N)`.
    d1: Array2<f64>,
    d2: Array2<f64>,
    d3: Array2<f64>,
}

struct BatchTape {
    n: usize,
    /// Layer inputs `A_l`, each `(width_l, 4N)`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers `Z_l`, each `(width, 4N)`.
    pre: Vec<Array2<f64>>,
    hidden: Vec<HiddenCache>,
    output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    config: NetworkConfig,
    params: NetworkParams,
}

impl Mlp {
    pub fn new(config: NetworkConfig, params: NetworkParams) -> Result<Self> {
        config.validate()?;
        if params.layer_sizes() != config.layer_sizes.as_slice() {
            return Err(Error::config(
                "network.layer_sizes",
                "parameter shapes do not match the configuration",
            ));
        }
        Ok(Mlp { config, params })
    }

    pub fn from_seed(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, seed);
        Ok(Mlp { config, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut NetworkParams {
        &mut self.params
    }

    pub fn into_params(self) -> NetworkParams {
        self.params
    }

    pub fn forward(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.propagate(t, x, None)?.value)
    }

    pub fn forward_jet(&self, t: f64, x: f64, direction: Direction) -> Result<Jet2> {
        self.propagate(t, x, Some(direction))
    }

    fn scaled_input(&self, t: f64, x: f64) -> [f64; 2] {
        let [st, sx] = self.config.input_scale;
        let [ot, ox] = self.config.input_offset;
        [(t - ot) * st, (x - ox) * sx]
    }

    // The value channel never reads the derivative channels, so `forward` and
    // `forward_jet` produce bitwise-identical values.
    fn propagate(&self, t: f64, x: f64, direction: Option<Direction>) -> Result<Jet2> {
        if !t.is_finite() || !x.is_finite() {
            return Err(Error::Domain(format!("non-finite input ({t}, {x})")));
        }
        let [st, sx] = self.config.input_scale;
        let mut value = self.scaled_input(t, x).to_vec();
        let mut d1 = match direction {
            Some(Direction::T) => vec![st, 0.0],
            Some(Direction::X) => vec![0.0, sx],
            None => vec![0.0, 0.0],
        };
        let mut d2 = vec![0.0; 2];
        let last = self.params.num_layers() - 1;
        for layer in 0..=last {
            let w = self.params.weights(layer);
            let b = self.params.bias(layer);
            let n_out = w.nrows();
            let mut nv = Vec::with_capacity(n_out);
            let mut n1 = Vec::with_capacity(n_out);
            let mut n2 = Vec::with_capacity(n_out);
            for (row, bias) in w.outer_iter().zip(b.iter()) {
                let mut z = *bias;
                let mut z1 = 0.0;
                let mut z2 = 0.0;
                for (j, wij) in row.iter().enumerate() {
                    z += wij * value[j];
                    z1 += wij * d1[j];
                    z2 += wij * d2[j];
                }
                if layer == last {
                    nv.push(z);
                    n1.push(z1);
                    n2.push(z2);
                } else {
                    let (f, f1, f2, _) = self.config.activation.derivatives(z);
                    nv.push(f);
                    n1.push(f1 * z1);
                    n2.push(f2 * z1 * z1 + f1 * z2);
                }
            }
            value = nv;
            d1 = n1;
            d2 = n2;
        }
        Ok(Jet2 {
            value: value[0],
            d1: d1[0],
            d2: d2[0],
        })
    }

    fn forward_batch(&self, points: &[(f64, f64)]) -> Result<BatchTape> {
        let n = points.len();
        let [st, sx] = self.config.input_scale;
        let mut a0 = Array2::<f64>::zeros((2, 4 * n));
        for (j, &(t, x)) in points.iter().enumerate() {
            if !t.is_finite() || !x.is_finite() {
                return Err(Error::Domain(format!("non-finite input ({t}, {x})")));
            }
            let [ts, xs] = self.scaled_input(t, x);
            a0[[0, j]] = ts;
            a0[[1, j]] = xs;
            a0[[0, n + j]] = st;
            a0[[1, 2 * n + j]] = sx;
        }
        let last = self.params.num_layers() - 1;
        let activation = self.config.activation;
        let mut inputs = vec![a0];
        let mut pre = Vec::with_capacity(last);
        let mut hidden = Vec::with_capacity(last);
        for layer in 0..=last {
            let w = self.params.weights(layer);
            let b = self.params.bias(layer);
            let a = inputs.last().expect("input");
            let mut z = Array2::<f64>::zeros((w.nrows(), 4 * n));
            general_mat_mul(1.0, &w, a, 0.0, &mut z);
            for (mut row, bias) in z.outer_iter_mut().zip(b.iter()) {
                row.slice_mut(s![..n]).mapv_inplace(|v| v + bias);
            }
            if layer == last {
                return Ok(BatchTape {
                    n,
                    inputs,
                    pre,
                    hidden,
                    output: z,
                });
            }
            let width = w.nrows();
            let mut next = Array2::<f64>::zeros((width, 4 * n));
            let mut cache = HiddenCache {
                d1: Array2::zeros((width, n)),
                d2: Array2::zeros((width, n)),
                d3: Array2::zeros((width, n)),
            };
            for i in 0..width {
                let zr = z.row(i);
                let zr = zr.as_slice().expect("contiguous row");
                let mut out = next.row_mut(i);
                let out = out.as_slice_mut().expect("contiguous row");
                let mut c1 = cache.d1.row_mut(i);
                let mut c2 = cache.d2.row_mut(i);
                let mut c3 = cache.d3.row_mut(i);
                for j in 0..n {
                    let (f, f1, f2, f3) = activation.derivatives(zr[j]);
                    let zt = zr[n + j];
                    let zx = zr[2 * n + j];
                    let zxx = zr[3 * n + j];
                    out[j] = f;
                    out[n + j] = f1 * zt;
                    out[2 * n + j] = f1 * zx;
                    out[3 * n + j] = f2 * zx * zx + f1 * zxx;
                    c1[j] = f1;
                    c2[j] = f2;
                    c3[j] = f3;
                }
            }
            pre.push(z);
            hidden.push(cache);
            inputs.push(next);
        }
        unreachable!("loop returns at the output layer")
    }

    /// Evaluates `c, c_t, c_x, c_xx` at every point.
    pub fn eval_batch(&self, points: &[(f64, f64)]) -> Result<PointJets> {
        let tape = self.forward_batch(points)?;
        Ok(output_jets(&tape))
    }

    /// Loss value and exact gradient with respect to every parameter.
    pub fn loss_gradient<O: JetObjective + ?Sized>(
        &self,
        points: &[(f64, f64)],
        objective: &O,
    ) -> Result<(f64, ParamGradient)> {
        let tape = self.forward_batch(points)?;
        let jets = output_jets(&tape);
        let (loss, adjoint) = objective.evaluate(&jets)?;
        if !loss.is_finite() {
            return Err(Error::NumericOverflow {
                term: "total".into(),
            });
        }
        let n = tape.n;
        let mut zbar = Array2::<f64>::zeros((1, 4 * n));
        for (k, channel) in [&adjoint.value, &adjoint.d_t, &adjoint.d_x, &adjoint.d_xx]
            .into_iter()
            .enumerate()
        {
            if channel.len() != n {
                return Err(Error::Numeric("objective adjoint has wrong length".into()));
            }
            zbar.slice_mut(s![0, k * n..(k + 1) * n])
                .assign(&ArrayView1::from(channel.as_slice()));
        }

        let mut grad = NetworkParams::zeros(self.params.layer_sizes());
        let last = self.params.num_layers() - 1;
        for layer in (0..=last).rev() {
            let a = &tape.inputs[layer];
            {
                let (mut gw, gb) = grad.weights_and_bias_mut(layer);
                general_mat_mul(1.0, &zbar, &a.t(), 0.0, &mut gw);
                for (g, row) in gb.iter_mut().zip(zbar.outer_iter()) {
                    *g = row.slice(s![..n]).sum();
                }
            }
            if layer == 0 {
                break;
            }
            let w = self.params.weights(layer);
            let mut abar = Array2::<f64>::zeros((w.ncols(), 4 * n));
            general_mat_mul(1.0, &w.t(), &zbar, 0.0, &mut abar);
            zbar = hidden_backward(&abar, &tape.pre[layer - 1], &tape.hidden[layer - 1], n);
        }
        let grad = ParamGradient(grad);
        if !grad.0.all_finite() {
            return Err(Error::NumericOverflow {
                term: "gradient".into(),
            });
        }
        Ok((loss, grad))
    }
}

impl JetProvider for Mlp {
    fn jet(&self, t: f64, x: f64, direction: Direction) -> Result<Jet2> {
        self.forward_jet(t, x, direction)
    }

    fn value(&self, t: f64, x: f64) -> Result<f64> {
        self.forward(t, x)
    }
}

fn output_jets(tape: &BatchTape) -> PointJets {
    let n = tape.n;
    let row = tape.output.index_axis(Axis(0), 0);
    let block = |k: usize| row.slice(s![k * n..(k + 1) * n]).to_vec();
    PointJets {
        value: block(0),
        d_t: block(1),
        d_x: block(2),
        d_xx: block(3),
    }
}

/// Pulls adjoints of a hidden activation's outputs back to its pre-activations.
fn hidden_backward(abar: &Array2<f64>, z: &Array2<f64>, cache: &HiddenCache, n: usize) -> Array2<f64> {
    let width = abar.nrows();
    let mut zbar = Array2::<f64>::zeros((width, 4 * n));
    for i in 0..width {
        let ab = abar.row(i);
        let ab = ab.as_slice().expect("contiguous row");
        let zr = z.row(i);
        let zr = zr.as_slice().expect("contiguous row");
        let f1 = cache.d1.row(i);
        let f2 = cache.d2.row(i);
        let f3 = cache.d3.row(i);
        let mut out = zbar.row_mut(i);
        let out = out.as_slice_mut().expect("contiguous row");
        for j in 0..n {
            let (a_v, a_t, a_x, a_xx) = (ab[j], ab[n + j], ab[2 * n + j], ab[3 * n + j]);
            let (zt, zx, zxx) = (zr[n + j], zr[2 * n + j], zr[3 * n + j]);
            let (d1, d2, d3) = (f1[j], f2[j], f3[j]);
            out[j] = a_v * d1 + a_t * d2 * zt + a_x * d2 * zx + a_xx * (d3 * zx * zx + d2 * zxx);
            out[n + j] = a_t * d1;
            out[2 * n + j] = a_x * d1 + a_xx * 2.0 * d2 * zx;
            out[3 * n + j] = a_xx * d1;
        }
    }
    zbar
}
