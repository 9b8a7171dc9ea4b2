//! Dense feedforward networks with exact reverse-mode gradients and Adam.
//!
//! Weight matrices are stored `(fan_out × fan_in)`, so a batch of row-vector
//! inputs `X (batch × fan_in)` maps to `X·Wᵀ + b`.
//!
//! # Checkpoint format
//!
//! [`MlpNetwork`] serializes (via serde, normally as JSON) to
//!
//! ```json
//! {
//!   "format": "hertune-mlp", "version": 1,
//!   "layer_sizes": [4, 64, 64, 2],
//!   "hidden_activation": "relu", "output_activation": "tanh",
//!   "weights": [[...row-major fan_out*fan_in values...], ...],
//!   "biases": [[...], ...],
//!   "adam": { "step": 0, "m_weights": [...], "v_weights": [...],
//!             "m_biases": [...], "v_biases": [...] }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so save → load is exact.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Largest double below 1; keeps saturated tanh outputs strictly inside (−1, 1).
const TANH_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

const CHECKPOINT_FORMAT: &str = "hertune-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Rectifier, `max(0, z)`.
    Relu,
    Identity,
    /// Symmetric bounded sigmoid, output in (−1, 1).
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            // written out so NaN propagates; f64::max would turn it into 0
            Activation::Relu => z.mapv_inplace(|v| if v < 0.0 { 0.0 } else { v }),
            Activation::Identity => {}
            Activation::Tanh => z.mapv_inplace(|v| v.tanh().clamp(-TANH_MAX, TANH_MAX)),
        }
    }

    /// Derivative expressed through the activation's own output.
    #[inline]
    fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Per-parameter gradients, shaped exactly like the owning network.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        GradientSet {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// Iterates every gradient entry, layer by layer, weights before biases.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct AdamState {
    m_weights: Vec<Array2<f64>>,
    v_weights: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_biases: Vec<Array1<f64>>,
    step: u64,
}

/// Activations recorded by a batched forward pass; `layers[0]` is the input
/// batch and the last entry the network output.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    layers: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.layers.last().expect("trace always holds the input")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Checkpoint", try_from = "Checkpoint")]
pub struct MlpNetwork {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    hidden_activation: Activation,
    output_activation: Activation,
    adam: AdamState,
}

impl MlpNetwork {
    /// Network with all parameters zero.
    pub fn zeros(layer_sizes: &[usize], hidden_activation: Activation, output_activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::contract(format!(
                "layer sizes must list at least two positive widths, got {layer_sizes:?}"
            )));
        }
        let weights: Vec<Array2<f64>> = layer_sizes.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect();
        let biases: Vec<Array1<f64>> = layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        let adam = AdamState {
            m_weights: weights.clone(),
            v_weights: weights.clone(),
            m_biases: biases.clone(),
            v_biases: biases.clone(),
            step: 0,
        };
        Ok(MlpNetwork {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation,
            output_activation,
            adam,
        })
    }

    /// Weights and biases drawn uniformly from `[−1/√fan_in, 1/√fan_in]`.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, hidden_activation, output_activation)?;
        for (w, b) in net.weights.iter_mut().zip(net.biases.iter_mut()) {
            let bound = 1.0 / (w.ncols() as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-bound..=bound));
            b.mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    /// Mutable access to the parameters. Shapes must not be changed.
    pub fn parameters_mut(&mut self) -> (&mut [Array2<f64>], &mut [Array1<f64>]) {
        (&mut self.weights, &mut self.biases)
    }

    /// Number of Adam updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.adam.step
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Iterates every parameter, layer by layer, weights before biases.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.input_dim(), input.len())?;
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("row vector");
        Ok(self.forward_batch(&x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a batch with one sample per row.
    pub fn forward_batch(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        check_len("network input width", self.input_dim(), inputs.ncols())?;
        let mut a = inputs.to_owned();
        for layer in 0..self.weights.len() {
            a = self.affine(layer, &a);
            self.activation(layer).apply(&mut a);
        }
        Ok(a)
    }

    /// Forward pass that keeps every layer's activations for [`Self::backward_batch`].
    pub fn forward_trace(&self, inputs: Array2<f64>) -> Result<ForwardTrace> {
        check_len("network input width", self.input_dim(), inputs.ncols())?;
        let mut layers = Vec::with_capacity(self.weights.len() + 1);
        layers.push(inputs);
        for layer in 0..self.weights.len() {
            let mut z = self.affine(layer, layers.last().unwrap());
            self.activation(layer).apply(&mut z);
            layers.push(z);
        }
        Ok(ForwardTrace { layers })
    }

    /// Gradients of `output · output_grad` for a single input vector.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<GradientSet> {
        check_len("network input", self.input_dim(), input.len())?;
        check_len("output gradient", self.output_dim(), output_grad.len())?;
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("row vector");
        let g = Array2::from_shape_vec((1, output_grad.len()), output_grad.to_vec()).expect("row vector");
        let trace = self.forward_trace(x)?;
        Ok(self.backward_batch(&trace, &g)?.0)
    }

    /// Reverse pass for `Σ_rows output · output_grad`. Returns the parameter
    /// gradients and the gradient with respect to the input batch.
    pub fn backward_batch(
        &self,
        trace: &ForwardTrace,
        output_grad: &Array2<f64>,
    ) -> Result<(GradientSet, Array2<f64>)> {
        let out = trace.output();
        if out.dim() != output_grad.dim() {
            return Err(Error::contract(format!(
                "output gradient shape {:?} does not match output shape {:?}",
                output_grad.dim(),
                out.dim()
            )));
        }
        let n_layers = self.weights.len();
        let mut grads = GradientSet::zeros_like(self);

        let mut delta = output_grad.clone();
        let act = self.output_activation;
        delta.zip_mut_with(out, |d, &y| *d *= act.derivative_at_output(y));

        for layer in (0..n_layers).rev() {
            let a_in = &trace.layers[layer];
            grads.weights[layer] = delta.t().dot(a_in);
            grads.biases[layer] = delta.sum_axis(Axis(0));
            let mut upstream = delta.dot(&self.weights[layer]);
            if layer > 0 {
                let act = self.hidden_activation;
                upstream.zip_mut_with(a_in, |d, &y| *d *= act.derivative_at_output(y));
            }
            delta = upstream;
        }
        Ok((grads, delta))
    }

    /// One Adam update (β₁ = 0.9, β₂ = 0.999, ε = 1e-8) descending `grads`.
    pub fn adam_step(&mut self, grads: &GradientSet, learning_rate: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&learning_rate) {
            return Err(Error::contract(format!("learning rate {learning_rate} outside [0, 1]")));
        }
        self.check_gradient_shapes(grads)?;
        for (layer, (gw, gb)) in grads.weights.iter().zip(&grads.biases).enumerate() {
            if gw.iter().chain(gb.iter()).any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { layer });
            }
        }

        self.adam.step += 1;
        let t = self.adam.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        };

        let st = &mut self.adam;
        for layer in 0..self.weights.len() {
            ndarray::Zip::from(&mut self.weights[layer])
                .and(&mut st.m_weights[layer])
                .and(&mut st.v_weights[layer])
                .and(&grads.weights[layer])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut self.biases[layer])
                .and(&mut st.m_biases[layer])
                .and(&mut st.v_biases[layer])
                .and(&grads.biases[layer])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }

    /// Sets every parameter to `weight·source + (1 − weight)·self`.
    ///
    /// Optimizer state is left untouched; target networks never step Adam.
    pub fn blend_from(&mut self, source: &MlpNetwork, weight: f64) -> Result<()> {
        if source.layer_sizes != self.layer_sizes {
            return Err(Error::contract(format!("cannot blend {:?} into {:?}", source.layer_sizes, self.layer_sizes)));
        }
        let keep = 1.0 - weight;
        for (dst, src) in self.weights.iter_mut().zip(&source.weights) {
            dst.zip_mut_with(src, |d, &s| *d = weight * s + keep * *d);
        }
        for (dst, src) in self.biases.iter_mut().zip(&source.biases) {
            dst.zip_mut_with(src, |d, &s| *d = weight * s + keep * *d);
        }
        Ok(())
    }

    /// Copies parameters (not optimizer state) from `source`.
    pub fn copy_parameters_from(&mut self, source: &MlpNetwork) -> Result<()> {
        if source.layer_sizes != self.layer_sizes {
            return Err(Error::contract("cannot copy parameters between different shapes"));
        }
        self.weights.clone_from(&source.weights);
        self.biases.clone_from(&source.biases);
        Ok(())
    }

    fn affine(&self, layer: usize, a: &Array2<f64>) -> Array2<f64> {
        let mut z = a.dot(&self.weights[layer].t());
        z += &self.biases[layer];
        z
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check_gradient_shapes(&self, grads: &GradientSet) -> Result<()> {
        let ok = grads.weights.len() == self.weights.len()
            && grads.biases.len() == self.biases.len()
            && grads.weights.iter().zip(&self.weights).all(|(g, w)| g.dim() == w.dim())
            && grads.biases.iter().zip(&self.biases).all(|(g, b)| g.dim() == b.dim());
        if ok {
            Ok(())
        } else {
            Err(Error::contract("gradient shapes do not match the network"))
        }
    }
}

#[derive(Serialize, Deserialize)]
struct AdamCheckpoint {
    step: u64,
    m_weights: Vec<Vec<f64>>,
    v_weights: Vec<Vec<f64>>,
    m_biases: Vec<Vec<f64>>,
    v_biases: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    adam: AdamCheckpoint,
}

fn flat2(ms: &[Array2<f64>]) -> Vec<Vec<f64>> {
    ms.iter().map(|m| m.iter().copied().collect()).collect()
}

fn flat1(vs: &[Array1<f64>]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.to_vec()).collect()
}

impl From<MlpNetwork> for Checkpoint {
    fn from(net: MlpNetwork) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            layer_sizes: net.layer_sizes.clone(),
            hidden_activation: net.hidden_activation,
            output_activation: net.output_activation,
            weights: flat2(&net.weights),
            biases: flat1(&net.biases),
            adam: AdamCheckpoint {
                step: net.adam.step,
                m_weights: flat2(&net.adam.m_weights),
                v_weights: flat2(&net.adam.v_weights),
                m_biases: flat1(&net.adam.m_biases),
                v_biases: flat1(&net.adam.v_biases),
            },
        }
    }
}

impl TryFrom<Checkpoint> for MlpNetwork {
    type Error = Error;

    fn try_from(ck: Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::contract(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        let mut net = MlpNetwork::zeros(&ck.layer_sizes, ck.hidden_activation, ck.output_activation)?;
        let load2 = |dst: &mut [Array2<f64>], src: Vec<Vec<f64>>| -> Result<()> {
            check_len("checkpoint layer count", dst.len(), src.len())?;
            for (d, s) in dst.iter_mut().zip(src) {
                check_len("checkpoint weight matrix", d.len(), s.len())?;
                *d = Array2::from_shape_vec(d.raw_dim(), s).expect("length checked");
            }
            Ok(())
        };
        let load1 = |dst: &mut [Array1<f64>], src: Vec<Vec<f64>>| -> Result<()> {
            check_len("checkpoint layer count", dst.len(), src.len())?;
            for (d, s) in dst.iter_mut().zip(src) {
                check_len("checkpoint bias vector", d.len(), s.len())?;
                *d = Array1::from(s);
            }
            Ok(())
        };
        load2(&mut net.weights, ck.weights)?;
        load1(&mut net.biases, ck.biases)?;
        load2(&mut net.adam.m_weights, ck.adam.m_weights)?;
        load2(&mut net.adam.v_weights, ck.adam.v_weights)?;
        load1(&mut net.adam.m_biases, ck.adam.m_biases)?;
        load1(&mut net.adam.v_biases, ck.adam.v_biases)?;
        net.adam.step = ck.adam.step;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpNetwork::zeros(&[3, 5, 2], Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(net.forward(&[0.3, -7.0, 2.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = MlpNetwork::zeros(&[3, 3], Activation::Relu, Activation::Identity).unwrap();
        net.parameters_mut().0[0] = Array2::eye(3);
        assert_eq!(net.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn two_layer_net_matches_hand_arithmetic() {
        let mut net = MlpNetwork::zeros(&[2, 3, 1], Activation::Relu, Activation::Identity).unwrap();
        let (w, b) = net.parameters_mut();
        w[0] = array![[1.0, -1.0], [0.5, 2.0], [-1.0, 0.0]];
        b[0] = array![0.0, -1.0, 0.5];
        w[1] = array![[1.0, -2.0, 3.0]];
        b[1] = array![0.5];
        // hidden pre-activations (1, 2, -1.5) -> relu (1, 2, 0); 1 - 4 + 0 + 0.5
        assert_eq!(net.forward(&[2.0, 1.0]).unwrap(), vec![-2.5]);
    }

    #[test]
    fn tanh_output_is_bounded() {
        let mut net = MlpNetwork::new(&[2, 4, 3], Activation::Relu, Activation::Tanh, &mut rng(1)).unwrap();
        net.parameters_mut().0[1].mapv_inplace(|w| w * 1e3);
        for y in net.forward(&[5.0, -3.0]).unwrap() {
            assert!(y > -1.0 && y < 1.0, "{y}");
        }
    }

    #[test]
    fn dimension_mismatch_is_contract_violation() {
        let net = MlpNetwork::zeros(&[3, 2], Activation::Relu, Activation::Identity).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Contract(_))));
        assert!(matches!(net.backward(&[1.0, 2.0, 3.0], &[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let net = MlpNetwork::new(&[3, 6, 2], Activation::Relu, Activation::Tanh, &mut rng(2)).unwrap();
        let g = net.backward(&[0.1, 0.2, -0.3], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_row_is_input() {
        let net = MlpNetwork::new(&[3, 2], Activation::Relu, Activation::Identity, &mut rng(3)).unwrap();
        let x = [0.7, -1.1, 2.0];
        let g = net.backward(&x, &[1.0, 0.0]).unwrap();
        assert_eq!(g.weights[0].row(0).to_vec(), x.to_vec());
        assert!(g.weights[0].row(1).iter().all(|&v| v == 0.0));
        assert_eq!(g.biases[0].to_vec(), vec![1.0, 0.0]);
    }

    /// Central finite differences of `output · cotangent`, one parameter at a time.
    fn finite_difference(net: &MlpNetwork, x: &[f64], cot: &[f64], h: f64) -> Vec<f64> {
        let objective = |n: &MlpNetwork| -> f64 { n.forward(x).unwrap().iter().zip(cot).map(|(a, b)| a * b).sum() };
        let mut out = Vec::new();
        let mut probe = net.clone();
        for layer in 0..net.weights.len() {
            for idx in 0..net.weights[layer].len() {
                let orig = net.weights[layer].as_slice().unwrap()[idx];
                probe.weights[layer].as_slice_mut().unwrap()[idx] = orig + h;
                let up = objective(&probe);
                probe.weights[layer].as_slice_mut().unwrap()[idx] = orig - h;
                let down = objective(&probe);
                probe.weights[layer].as_slice_mut().unwrap()[idx] = orig;
                out.push((up - down) / (2.0 * h));
            }
            for idx in 0..net.biases[layer].len() {
                let orig = net.biases[layer][idx];
                probe.biases[layer][idx] = orig + h;
                let up = objective(&probe);
                probe.biases[layer][idx] = orig - h;
                let down = objective(&probe);
                probe.biases[layer][idx] = orig;
                out.push((up - down) / (2.0 * h));
            }
        }
        out
    }

    #[test]
    fn backward_matches_finite_differences_4_8_3() {
        let mut r = rng(4);
        let net = MlpNetwork::new(&[4, 8, 3], Activation::Relu, Activation::Tanh, &mut r).unwrap();
        let x: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let cot: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let analytic: Vec<f64> = net.backward(&x, &cot).unwrap().iter().collect();
        let numeric = finite_difference(&net, &x, &cot, 1e-6);
        assert_eq!(analytic.len(), net.parameter_count());
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            assert!(rel < 1e-4, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn batched_backward_sums_per_sample_gradients() {
        let mut r = rng(5);
        let net = MlpNetwork::new(&[2, 5, 2], Activation::Relu, Activation::Identity, &mut r).unwrap();
        let xs = array![[0.2, -0.4], [1.0, 0.3]];
        let gs = array![[1.0, -0.5], [0.25, 2.0]];
        let trace = net.forward_trace(xs.clone()).unwrap();
        let (batched, input_grad) = net.backward_batch(&trace, &gs).unwrap();
        let a = net.backward(xs.row(0).as_slice().unwrap(), gs.row(0).as_slice().unwrap()).unwrap();
        let b = net.backward(xs.row(1).as_slice().unwrap(), gs.row(1).as_slice().unwrap()).unwrap();
        for ((s, x), y) in batched.iter().zip(a.iter()).zip(b.iter()) {
            assert!((s - (x + y)).abs() < 1e-12);
        }
        assert_eq!(input_grad.dim(), (2, 2));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_but_moves_moments() {
        let mut net = MlpNetwork::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut rng(6)).unwrap();
        let before = net.clone();
        let g = net.backward(&[0.5, 0.5], &[1.0]).unwrap();
        net.adam_step(&g, 0.0).unwrap();
        assert_eq!(net.weights, before.weights);
        assert_eq!(net.biases, before.biases);
        assert_eq!(net.step_count(), 1);
        assert_ne!(net.adam, before.adam);
    }

    #[test]
    fn first_adam_step_with_constant_gradient_moves_by_learning_rate() {
        let mut net = MlpNetwork::zeros(&[2, 3, 1], Activation::Relu, Activation::Identity).unwrap();
        let mut g = GradientSet::zeros_like(&net);
        g.weights.iter_mut().for_each(|w| w.fill(0.3));
        g.biases.iter_mut().for_each(|b| b.fill(0.3));
        net.adam_step(&g, 0.01).unwrap();
        for p in net.parameters() {
            assert!((p + 0.01).abs() < 1e-9, "{p}");
        }
    }

    #[test]
    fn two_adam_steps_match_scalar_trace() {
        // Scalar Adam oracle: θ0 = 1, g = (0.5, −0.2), lr = 0.1.
        let mut net = MlpNetwork::zeros(&[1, 1], Activation::Relu, Activation::Identity).unwrap();
        net.parameters_mut().0[0][[0, 0]] = 1.0;
        let mut g = GradientSet::zeros_like(&net);
        g.weights[0][[0, 0]] = 0.5;
        net.adam_step(&g, 0.1).unwrap();
        assert!((net.weights[0][[0, 0]] - 0.9000000019999999).abs() < 1e-15);
        g.weights[0][[0, 0]] = -0.2;
        net.adam_step(&g, 0.1).unwrap();
        assert!((net.weights[0][[0, 0]] - 0.8654394181165107).abs() < 1e-15);
        assert_eq!(net.step_count(), 2);
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut net = MlpNetwork::zeros(&[2, 3, 1], Activation::Relu, Activation::Identity).unwrap();
        let mut g = GradientSet::zeros_like(&net);
        g.biases[1][0] = f64::NAN;
        match net.adam_step(&g, 0.1) {
            Err(Error::NonFiniteGradient { layer }) => assert_eq!(layer, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(net.step_count(), 0);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut net = MlpNetwork::new(&[3, 4, 2], Activation::Relu, Activation::Tanh, &mut rng(8)).unwrap();
        let g = net.backward(&[0.1, -0.2, 0.3], &[1.0, -1.0]).unwrap();
        net.adam_step(&g, 0.001).unwrap();
        let text = serde_json::to_string(&net).unwrap();
        let back: MlpNetwork = serde_json::from_str(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn checkpoint_rejects_mismatched_lengths() {
        let net = MlpNetwork::zeros(&[2, 2], Activation::Relu, Activation::Identity).unwrap();
        let mut v: serde_json::Value = serde_json::to_value(&net).unwrap();
        v["weights"][0] = serde_json::json!([1.0]);
        assert!(serde_json::from_value::<MlpNetwork>(v).is_err());
    }

    #[test]
    fn blend_is_exact_convex_combination() {
        let mut r = rng(9);
        let main = MlpNetwork::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut r).unwrap();
        let mut target = MlpNetwork::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut r).unwrap();
        let old = target.clone();
        target.blend_from(&main, 0.184).unwrap();
        for ((t, m), o) in target.parameters().zip(main.parameters()).zip(old.parameters()) {
            assert_eq!(t, 0.184 * m + (1.0 - 0.184) * o);
        }
    }

    #[test]
    fn nan_survives_hidden_rectifier() {
        let mut net = MlpNetwork::zeros(&[1, 2, 1], Activation::Relu, Activation::Identity).unwrap();
        net.parameters_mut().0[0][[0, 0]] = f64::NAN;
        assert!(net.forward(&[1.0]).unwrap()[0].is_nan());
    }
}
