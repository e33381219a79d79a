//! Dense feed-forward network with ReLU hidden layers.
//!
//! Weights are stored out×in row-major per layer, so `weights[o * in_dim + j]`
//! connects input `j` to unit `o`. The output head is softmax for
//! classification (trained with cross-entropy) or identity for regression
//! (trained with squared error).

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Labels, Task};
use crate::rng::{rng_for, stream, Rng};
use crate::{Error, Matrix, Result};

pub const CHECKPOINT_MAGIC: &str = "FLOODMLP1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Softmax,
    Identity,
}

impl Head {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification(_) => Head::Softmax,
            Task::Regression => Head::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    /// He-style uniform init: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn he_uniform(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            biases: vec![0.0; out_dim],
        }
    }

    fn forward(&self, input: &Matrix, relu: bool) -> Matrix {
        let mut out = Matrix::zeros(input.rows(), self.out_dim);
        for i in 0..input.rows() {
            let x = input.row(i);
            let y = out.row_mut(i);
            for (o, yo) in y.iter_mut().enumerate() {
                let w = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.biases[o];
                for (wj, xj) in w.iter().zip(x) {
                    acc += wj * xj;
                }
                *yo = if relu { acc.max(0.0) } else { acc };
            }
        }
        out
    }
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Activations kept from a forward pass for the backward pass.
///
/// `hidden[l]` is the post-ReLU output of hidden layer `l`; `output` is the
/// head output (probabilities or raw values).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub hidden: Vec<Matrix>,
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    head: Head,
    seed: u64,
}

impl MlpModel {
    /// Randomly initialized network. `layer_dims` is `[input, hidden..., output]`.
    pub fn new(layer_dims: &[usize], head: Head, seed: u64) -> Result<Self> {
        validate_dims(layer_dims, head)?;
        let mut rng = rng_for(seed, stream::INIT);
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer::he_uniform(w[0], w[1], &mut rng))
            .collect();
        Ok(Self { layers, head, seed })
    }

    pub fn zeros(layer_dims: &[usize], head: Head) -> Result<Self> {
        validate_dims(layer_dims, head)?;
        let layers = layer_dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self {
            layers,
            head,
            seed: 0,
        })
    }

    pub fn from_layers(layers: Vec<Layer>, head: Head, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(Error::Shape(format!(
                    "layer {i} parameter sizes are inconsistent"
                )));
            }
            if i > 0 && layers[i - 1].out_dim != l.in_dim {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    l.in_dim,
                    i - 1,
                    layers[i - 1].out_dim
                )));
            }
        }
        validate_dims(&dims_of(&layers), head)?;
        Ok(Self { layers, head, seed })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        dims_of(&self.layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| (l.in_dim + 1) * l.out_dim).sum()
    }

    /// All parameters: per layer, weights row-major then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters supplied, model has {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Head outputs for every row of `x`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.output)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut hidden = Vec::with_capacity(last);
        for l in &self.layers[..last] {
            let a = l.forward(hidden.last().unwrap_or(x), true);
            hidden.push(a);
        }
        let mut output = self.layers[last].forward(hidden.last().unwrap_or(x), false);
        if self.head == Head::Softmax {
            for i in 0..output.rows() {
                softmax_in_place(output.row_mut(i));
            }
        }
        Ok(ForwardCache { hidden, output })
    }

    /// Post-ReLU activations after the first `n_layers` layers. All of those
    /// layers must be hidden layers.
    pub fn forward_prefix(&self, x: &Matrix, n_layers: usize) -> Result<Matrix> {
        self.check_input(x)?;
        if n_layers >= self.layers.len() {
            return Err(Error::Config(format!(
                "prefix of {n_layers} layers would include the output layer"
            )));
        }
        let mut a = x.clone();
        for l in &self.layers[..n_layers] {
            a = l.forward(&a, true);
        }
        Ok(a)
    }

    /// Per-sample base loss: cross-entropy on softmax models, squared error
    /// on identity-head models.
    pub fn per_sample_losses(&self, output: &Matrix, labels: &Labels) -> Result<Vec<f64>> {
        if output.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} outputs for {} labels",
                output.rows(),
                labels.len()
            )));
        }
        match (self.head, labels) {
            (Head::Softmax, Labels::Class(y)) => Ok(output
                .iter_rows()
                .zip(y)
                .map(|(p, &c)| cross_entropy(p, c))
                .collect()),
            (Head::Identity, Labels::Real(t)) => Ok(output
                .iter_rows()
                .zip(t)
                .map(|(p, &t)| (p[0] - t).powi(2))
                .collect()),
            _ => Err(Error::TaskMismatch("model head does not match labels".into())),
        }
    }

    /// Forward pass plus per-sample losses.
    pub fn losses(&self, x: &Matrix, labels: &Labels) -> Result<Vec<f64>> {
        let out = self.forward(x)?;
        self.per_sample_losses(&out, labels)
    }

    /// Gradients of `sum_i upstream[i] * loss_i + (l2/2) * sum(W^2)`.
    ///
    /// The L2 term covers weights only, never biases.
    pub fn backward(
        &self,
        x: &Matrix,
        cache: &ForwardCache,
        labels: &Labels,
        upstream: &[f64],
        l2_weight: f64,
    ) -> Result<Gradients> {
        self.check_input(x)?;
        let n = x.rows();
        if upstream.len() != n || labels.len() != n || cache.output.rows() != n {
            return Err(Error::Shape(format!(
                "batch of {n} rows with {} upstream values and {} labels",
                upstream.len(),
                labels.len()
            )));
        }
        if let Some(bad) = upstream.iter().find(|u| !u.is_finite()) {
            return Err(Error::Numeric(format!("non-finite upstream gradient {bad}")));
        }

        // d(loss_i)/d(pre-activation of the last layer), scaled by upstream_i
        let out_dim = self.output_dim();
        let mut delta = Matrix::zeros(n, out_dim);
        match (self.head, labels) {
            (Head::Softmax, Labels::Class(y)) => {
                for i in 0..n {
                    let p = cache.output.row(i);
                    let d = delta.row_mut(i);
                    for k in 0..out_dim {
                        let onehot = if k == y[i] { 1.0 } else { 0.0 };
                        d[k] = upstream[i] * (p[k] - onehot);
                    }
                }
            }
            (Head::Identity, Labels::Real(t)) => {
                for i in 0..n {
                    delta.row_mut(i)[0] = upstream[i] * 2.0 * (cache.output.get(i, 0) - t[i]);
                }
            }
            _ => return Err(Error::TaskMismatch("model head does not match labels".into())),
        }

        let nl = self.layers.len();
        let mut gw: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.out_dim]).collect();

        for li in (0..nl).rev() {
            let layer = &self.layers[li];
            let input = if li == 0 { x } else { &cache.hidden[li - 1] };
            let gwl = &mut gw[li];
            let gbl = &mut gb[li];
            for i in 0..n {
                let d = delta.row(i);
                let a = input.row(i);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    gbl[o] += dv;
                    let row = &mut gwl[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (g, &aj) in row.iter_mut().zip(a) {
                        *g += dv * aj;
                    }
                }
            }
            if li > 0 {
                let mut next = Matrix::zeros(n, layer.in_dim);
                for i in 0..n {
                    let d = delta.row(i);
                    let a = input.row(i);
                    let nd = next.row_mut(i);
                    for (o, &dv) in d.iter().enumerate() {
                        if dv == 0.0 {
                            continue;
                        }
                        let w = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for (ndj, &wj) in nd.iter_mut().zip(w) {
                            *ndj += dv * wj;
                        }
                    }
                    // ReLU derivative, 0 at the kink
                    for (ndj, &aj) in nd.iter_mut().zip(a) {
                        if aj <= 0.0 {
                            *ndj = 0.0;
                        }
                    }
                }
                delta = next;
            }
        }

        if l2_weight != 0.0 {
            for (g, l) in gw.iter_mut().zip(&self.layers) {
                for (gj, wj) in g.iter_mut().zip(&l.weights) {
                    *gj += l2_weight * wj;
                }
            }
        }
        Ok(Gradients {
            weights: gw,
            biases: gb,
        })
    }

    /// `(l2/2) * sum(W^2)` over all weight matrices.
    pub fn l2_penalty(&self, l2_weight: f64) -> f64 {
        if l2_weight == 0.0 {
            return 0.0;
        }
        let sq: f64 = self
            .layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .map(|w| w * w)
            .sum();
        0.5 * l2_weight * sq
    }

    /// Plain SGD step.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (li, l) in self.layers.iter_mut().enumerate() {
            for (w, g) in l.weights.iter_mut().zip(&grads.weights[li]) {
                *w -= lr * g;
            }
            for (b, g) in l.biases.iter_mut().zip(&grads.biases[li]) {
                *b -= lr * g;
            }
        }
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        let body = CheckpointBody {
            layer_dims: self.layer_dims(),
            head: self.head,
            seed: self.seed,
            params: self.flat_params(),
        };
        let mut out = format!("{CHECKPOINT_MAGIC}\n").into_bytes();
        out.extend(serde_json::to_vec(&body).expect("checkpoint body serializes"));
        out.push(b'\n');
        out
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint {
            path: Default::default(),
            message: m,
        };
        let magic = format!("{CHECKPOINT_MAGIC}\n");
        let rest = bytes
            .strip_prefix(magic.as_bytes())
            .ok_or_else(|| bad(format!("missing `{CHECKPOINT_MAGIC}` header")))?;
        let body: CheckpointBody =
            serde_json::from_slice(rest).map_err(|e| bad(format!("invalid body: {e}")))?;
        let mut model = MlpModel::zeros(&body.layer_dims, body.head).map_err(|e| bad(e.to_string()))?;
        model.seed = body.seed;
        model
            .set_flat_params(&body.params)
            .map_err(|e| bad(e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Self::from_checkpoint(&bytes).map_err(|e| match e {
            Error::Checkpoint { message, .. } => Error::Checkpoint {
                path: path.to_owned(),
                message,
            },
            other => other,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointBody {
    layer_dims: Vec<usize>,
    head: Head,
    seed: u64,
    params: Vec<f64>,
}

fn dims_of(layers: &[Layer]) -> Vec<usize> {
    let mut dims = vec![layers[0].in_dim];
    dims.extend(layers.iter().map(|l| l.out_dim));
    dims
}

fn validate_dims(dims: &[usize], head: Head) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config(
            "layer_dims needs an input and an output size".into(),
        ));
    }
    if dims.contains(&0) {
        return Err(Error::Config("layer sizes must be positive".into()));
    }
    let out = dims[dims.len() - 1];
    match head {
        Head::Softmax if out < 2 => Err(Error::Config("softmax head needs at least 2 outputs".into())),
        Head::Identity if out != 1 => Err(Error::Config("regression head must have 1 output".into())),
        _ => Ok(()),
    }
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// `-ln p[c]`. Underflowed probabilities are floored at the smallest
/// positive normal so the loss stays finite.
fn cross_entropy(p: &[f64], c: usize) -> f64 {
    -p[c].max(f64::MIN_POSITIVE).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let m = MlpModel::zeros(&[4, 8, 5], Head::Softmax).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0, 0.5]]).unwrap();
        let p = m.forward(&x).unwrap();
        assert!(p.row(0).iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn bias_only_regression_outputs_bias() {
        let mut m = MlpModel::zeros(&[3, 1], Head::Identity).unwrap();
        m.layers_mut()[0].biases[0] = 2.5;
        let x = Matrix::from_rows(&[[9.0, -1.0, 4.0], [0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(m.forward(&x).unwrap().as_slice(), &[2.5, 2.5]);
    }

    #[test]
    fn input_shape_mismatch_is_error() {
        let m = MlpModel::new(&[3, 4, 2], Head::Softmax, 0).unwrap();
        let x = Matrix::zeros(1, 2);
        assert!(matches!(m.forward(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn param_count_matches_formula() {
        let m = MlpModel::new(&[10, 32, 16, 3], Head::Softmax, 1).unwrap();
        assert_eq!(m.param_count(), 11 * 32 + 33 * 16 + 17 * 3);
        assert_eq!(m.flat_params().len(), m.param_count());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = MlpModel::new(&[3, 5, 2], Head::Softmax, 4).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]]).unwrap();
        let y = Labels::Class(vec![0, 1]);
        let cache = m.forward_cached(&x).unwrap();
        let g = m.backward(&x, &cache, &y, &[0.0, 0.0], 0.0).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(matches!(
            m.backward(&x, &cache, &y, &[f64::NAN, 0.0], 0.0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = MlpModel::new(&[4, 7, 3], Head::Softmax, 99).unwrap();
        let bytes = m.to_checkpoint();
        assert!(bytes.starts_with(b"FLOODMLP1\n"));
        assert_eq!(MlpModel::from_checkpoint(&bytes).unwrap(), m);
        assert!(MlpModel::from_checkpoint(b"NOPE").is_err());
    }

    #[test]
    fn head_dims_validated() {
        assert!(MlpModel::new(&[3, 2], Head::Identity, 0).is_err());
        assert!(MlpModel::new(&[3, 1], Head::Softmax, 0).is_err());
        assert!(MlpModel::new(&[3], Head::Softmax, 0).is_err());
    }
}
