//! Fully connected Q-network with rectifier hidden layers, Huber loss
//! gradients, and the Adam optimizer.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DqnError;

/// Huber loss with threshold 1.
pub fn huber(err: f64) -> f64 {
    if err.abs() < 1.0 {
        0.5 * err * err
    } else {
        err.abs() - 0.5
    }
}

/// Derivative of [`huber`] with respect to its argument.
pub fn huber_grad(err: f64) -> f64 {
    if err.abs() < 1.0 {
        err
    } else {
        err.signum()
    }
}

/// ε_{t+1} = ε_t (1 − ξ).
pub fn epsilon_next(epsilon: f64, decay: f64) -> f64 {
    epsilon * (1.0 - decay)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// (outputs, inputs).
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

/// Parameter-shaped buffers: gradients or optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Params {
    fn zeros_like(net: &QNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.biases.raw_dim())).collect(),
        }
    }

    /// All entries flattened, layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Result of one loss/gradient evaluation on a minibatch.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    /// Mean predicted Q(s, a) over the minibatch.
    pub mean_q: f64,
    pub grads: Params,
}

impl QNetwork {
    /// Uniform fan-in scaled initialization, U(−1/√fan_in, 1/√fan_in).
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "a network needs at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_simple_fn((w[1], w[0]), || rng.gen_range(-bound..bound)),
                    biases: Array1::from_shape_simple_fn(w[1], || rng.gen_range(-bound..bound)),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Layer { weights: Array2::zeros((w[1], w[0])), biases: Array1::zeros(w[1]) })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, DqnError> {
        if layers.is_empty() {
            return Err(DqnError::Parse("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.weights.nrows() {
                return Err(DqnError::Parse(format!("layer {i}: bias length does not match weights")));
            }
            if i > 0 && layers[i - 1].weights.nrows() != l.weights.ncols() {
                return Err(DqnError::Parse(format!("layer {i}: input size does not match previous layer")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weights.ncols()];
        s.extend(self.layers.iter().map(|l| l.weights.nrows()));
        s
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().unwrap().weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|x| x.is_finite()))
    }

    /// Q-values of a single state.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>, DqnError> {
        if state.len() != self.input_len() {
            return Err(DqnError::Profile(format!(
                "state has {} features, network expects {}",
                state.len(),
                self.input_len()
            )));
        }
        let first = &self.layers[0];
        let z = first.weights.dot(&ndarray::ArrayView1::from(state)) + &first.biases;
        Ok(self.finish(z))
    }

    /// Output Q-values given the first layer's pre-activation `z`.
    fn finish(&self, mut z: Array1<f64>) -> Vec<f64> {
        for l in &self.layers[1..] {
            z.mapv_inplace(|v| v.max(0.0));
            z = l.weights.dot(&z) + &l.biases;
        }
        z.to_vec()
    }

    /// Q-values of a batch of states, one state per row.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.weights.t());
            z += &l.biases;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Mean Huber loss of Q(s_i, a_i) against `targets` and its gradient.
    pub fn loss_and_grad(&self, states: ArrayView2<f64>, actions: &[usize], targets: &[f64]) -> LossGrad {
        let n = states.nrows();
        assert_eq!(actions.len(), n);
        assert_eq!(targets.len(), n);
        let last = self.layers.len() - 1;
        let mut acts = vec![states.to_owned()];
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.weights.t());
            z += &l.biases;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        let out = &acts[last + 1];
        let mut delta = Array2::<f64>::zeros(out.raw_dim());
        let mut loss = 0.0;
        let mut q_sum = 0.0;
        for i in 0..n {
            let q = out[[i, actions[i]]];
            let err = q - targets[i];
            loss += huber(err);
            q_sum += q;
            delta[[i, actions[i]]] = huber_grad(err) / n as f64;
        }
        let mut grads = Params::zeros_like(self);
        for i in (0..=last).rev() {
            grads.weights[i] = delta.t().dot(&acts[i]);
            grads.biases[i] = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut prev = delta.dot(&self.layers[i].weights);
                prev.zip_mut_with(&acts[i], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        LossGrad { loss: loss / n as f64, mean_q: q_sum / n as f64, grads }
    }

    /// Mean Huber loss only.
    pub fn loss(&self, states: ArrayView2<f64>, actions: &[usize], targets: &[f64]) -> f64 {
        let out = self.forward_batch(states);
        let n = states.nrows();
        (0..n).map(|i| huber(out[[i, actions[i]]] - targets[i])).sum::<f64>() / n as f64
    }

    /// Flat parameter vector in [`Params::flatten`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
        out
    }

    /// Mutable access to the `idx`-th parameter in flattened order.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                return l.weights.iter_mut().nth(idx).unwrap();
            }
            idx -= l.weights.len();
            if idx < l.biases.len() {
                return &mut l.biases[idx];
            }
            idx -= l.biases.len();
        }
        panic!("parameter index out of range")
    }
}

/// Single-state forward passes over a slowly changing input: the first
/// layer is updated only along the inputs that changed since the last call.
#[derive(Debug, Clone)]
pub struct IncrementalForward<'a> {
    net: &'a QNetwork,
    input: Vec<f64>,
    z: Array1<f64>,
    since_refresh: usize,
}

impl<'a> IncrementalForward<'a> {
    /// Full recomputation after this many incremental updates.
    const REFRESH: usize = 32;

    pub fn new(net: &'a QNetwork) -> Self {
        let first = &net.layers[0];
        Self {
            net,
            input: vec![0.0; net.input_len()],
            z: first.biases.clone(),
            since_refresh: 0,
        }
    }

    pub fn forward(&mut self, state: &[f64]) -> Result<Vec<f64>, DqnError> {
        if state.len() != self.input.len() {
            return self.net.forward(state);
        }
        let changed: Vec<usize> = (0..state.len()).filter(|&i| state[i] != self.input[i]).collect();
        let w = &self.net.layers[0].weights;
        if self.since_refresh >= Self::REFRESH || changed.len() * 4 > state.len() {
            self.input.copy_from_slice(state);
            self.z = w.dot(&ndarray::ArrayView1::from(state)) + &self.net.layers[0].biases;
            self.since_refresh = 0;
        } else {
            for i in changed {
                self.z.scaled_add(state[i] - self.input[i], &w.column(i));
                self.input[i] = state[i];
            }
            self.since_refresh += 1;
        }
        Ok(self.net.finish(self.z.clone()))
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Params,
    pub v: Params,
}

impl Adam {
    pub fn new(net: &QNetwork, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Params::zeros_like(net),
            v: Params::zeros_like(net),
        }
    }

    pub fn update(&mut self, net: &mut QNetwork, grads: &Params) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        let apply = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (i, layer) in net.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.weights)
                .and(&grads.weights[i])
                .and(&mut self.m.weights[i])
                .and(&mut self.v.weights[i])
                .for_each(|p, &g, m, v| apply(p, g, m, v));
            ndarray::Zip::from(&mut layer.biases)
                .and(&grads.biases[i])
                .and(&mut self.m.biases[i])
                .and(&mut self.v.biases[i])
                .for_each(|p, &g, m, v| apply(p, g, m, v));
        }
    }
}

/// Serializable form of a network: row-major weights per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerData {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerData {
    pub fn from_arrays(w: &Array2<f64>, b: &Array1<f64>) -> Self {
        Self { rows: w.nrows(), cols: w.ncols(), weights: w.iter().copied().collect(), biases: b.to_vec() }
    }

    pub fn to_arrays(&self) -> Result<(Array2<f64>, Array1<f64>), DqnError> {
        let w = Array2::from_shape_vec((self.rows, self.cols), self.weights.clone())
            .map_err(|e| DqnError::Parse(format!("layer weights: {e}")))?;
        Ok((w, Array1::from(self.biases.clone())))
    }
}

impl QNetwork {
    pub fn to_data(&self) -> Vec<LayerData> {
        self.layers.iter().map(|l| LayerData::from_arrays(&l.weights, &l.biases)).collect()
    }

    pub fn from_data(data: &[LayerData]) -> Result<Self, DqnError> {
        let layers = data
            .iter()
            .map(|d| d.to_arrays().map(|(weights, biases)| Layer { weights, biases }))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_layers(layers)
    }
}

impl Params {
    pub fn to_data(&self) -> Vec<LayerData> {
        self.weights.iter().zip(&self.biases).map(|(w, b)| LayerData::from_arrays(w, b)).collect()
    }

    pub fn from_data(data: &[LayerData]) -> Result<Self, DqnError> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for d in data {
            let (w, b) = d.to_arrays()?;
            weights.push(w);
            biases.push(b);
        }
        Ok(Self { weights, biases })
    }
}
