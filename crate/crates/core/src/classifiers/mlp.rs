use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Convergence, Example, LabeledDataset, TrainError};
use crate::features::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            learning_rate: 0.5,
            epochs: 20,
            batch_size: 32,
            seed: 42,
        }
    }
}

/// Fully connected layer. `weights[i * outputs + j]` connects input `i` to output `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl MlpLayer {
    fn xavier(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.gen_range(-limit..=limit)).collect(),
            biases: vec![0.0; outputs],
        }
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn forward_dense(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.biases.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
                for (zj, w) in z.iter_mut().zip(row) {
                    *zj += xi * w;
                }
            }
        }
        z
    }

    fn forward_sparse(&self, x: &SparseVector) -> Vec<f64> {
        let mut z = self.biases.clone();
        for (i, xi) in x.iter() {
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
        z
    }

    /// `W delta`: error signal pushed back to this layer's inputs.
    fn backward(&self, delta: &[f64]) -> Vec<f64> {
        (0..self.inputs)
            .map(|i| {
                let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
                row.iter().zip(delta).map(|(w, d)| w * d).sum()
            })
            .collect()
    }
}

/// Sigmoid hidden layers followed by a two-way softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub(crate) layers: Vec<MlpLayer>,
}

/// Per-example forward/backward record.
struct Trace {
    /// Activations of hidden layers, in order.
    hidden: Vec<Vec<f64>>,
    /// Error signal at each layer's pre-activation.
    deltas: Vec<Vec<f64>>,
    loss: f64,
}

fn softmax2(z: &[f64]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

impl Mlp {
    pub fn new(dim: usize, hidden: &[usize], seed: u64) -> Result<Self, TrainError> {
        if hidden.is_empty() {
            return Err(TrainError::InvalidParameter("an MLP needs at least one hidden layer".into()));
        }
        if hidden.contains(&0) {
            return Err(TrainError::InvalidParameter("hidden layer widths must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![dim];
        widths.extend_from_slice(hidden);
        widths.push(2);
        let layers = widths.windows(2).map(|w| MlpLayer::xavier(w[0], w[1], &mut rng)).collect();
        Ok(Self { layers })
    }

    /// Checks that consecutive layers chain and the output is two-way.
    pub fn from_layers(layers: Vec<MlpLayer>) -> Option<Self> {
        if layers.len() < 2 || layers.last()?.outputs != 2 {
            return None;
        }
        let shapes_ok = layers
            .iter()
            .all(|l| l.weights.len() == l.inputs * l.outputs && l.biases.len() == l.outputs);
        let chained = layers.windows(2).all(|w| w[0].outputs == w[1].inputs);
        (shapes_ok && chained).then_some(Self { layers })
    }

    pub fn dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn layers(&self) -> &[MlpLayer] {
        &self.layers
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    fn forward(&self, x: &SparseVector) -> (Vec<Vec<f64>>, [f64; 2]) {
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let mut a = self.layers[0].forward_sparse(x);
        a.iter_mut().for_each(|v| *v = sigmoid(*v));
        for layer in &self.layers[1..self.layers.len() - 1] {
            let mut next = layer.forward_dense(&a);
            next.iter_mut().for_each(|v| *v = sigmoid(*v));
            hidden.push(std::mem::replace(&mut a, next));
        }
        let out = softmax2(&self.layers.last().unwrap().forward_dense(&a));
        hidden.push(a);
        (hidden, out)
    }

    /// `[P(non-suicide | x), P(suicide | x)]`.
    pub fn probabilities(&self, x: &SparseVector) -> [f64; 2] {
        self.forward(x).1
    }

    pub fn score(&self, x: &SparseVector) -> f64 {
        self.probabilities(x)[1]
    }

    fn trace(&self, ex: &Example) -> Trace {
        let (hidden, p) = self.forward(&ex.features);
        let y = ex.label as usize;
        let loss = -p[y].max(f64::MIN_POSITIVE).ln();
        let mut delta = vec![p[0], p[1]];
        delta[y] -= 1.0;
        let mut deltas = vec![delta];
        for l in (1..self.layers.len()).rev() {
            let back = self.layers[l].backward(deltas.last().unwrap());
            let a = &hidden[l - 1];
            deltas.push(back.iter().zip(a).map(|(b, a)| b * a * (1.0 - a)).collect());
        }
        deltas.reverse();
        Trace { hidden, deltas, loss }
    }

    /// Mean cross-entropy over `rows`.
    pub fn loss(&self, rows: &[Example]) -> f64 {
        let n = rows.len().max(1) as f64;
        rows.iter()
            .map(|ex| {
                let p = self.probabilities(&ex.features)[ex.label as usize];
                -p.max(f64::MIN_POSITIVE).ln()
            })
            .sum::<f64>()
            / n
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(MlpLayer::num_params).sum()
    }

    /// All weights then biases, layer by layer.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "parameter count mismatch");
        let mut at = 0;
        for l in &mut self.layers {
            let w = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + w]);
            at += w;
            let b = l.biases.len();
            l.biases.copy_from_slice(&flat[at..at + b]);
            at += b;
        }
    }

    /// Mean loss over `rows` and its gradient in [`Mlp::flat_params`] layout.
    pub fn loss_and_gradient(&self, rows: &[Example]) -> (f64, Vec<f64>) {
        let mut grads: Vec<MlpLayer> = self
            .layers
            .iter()
            .map(|l| MlpLayer {
                inputs: l.inputs,
                outputs: l.outputs,
                weights: vec![0.0; l.weights.len()],
                biases: vec![0.0; l.outputs],
            })
            .collect();
        let n = rows.len().max(1) as f64;
        let mut loss = 0.0;
        for ex in rows {
            let t = self.trace(ex);
            loss += t.loss;
            accumulate(&mut grads, ex, &t, 1.0 / n);
        }
        let flat = Mlp { layers: grads }.flat_params();
        (loss / n, flat)
    }
}

/// Adds `scale * dLoss/dTheta` for one example into a layer-shaped buffer.
fn accumulate(target: &mut [MlpLayer], ex: &Example, t: &Trace, scale: f64) {
    for (l, layer) in target.iter_mut().enumerate() {
        let delta = &t.deltas[l];
        let out = layer.outputs;
        if l == 0 {
            for (i, xi) in ex.features.iter() {
                let row = &mut layer.weights[i * out..(i + 1) * out];
                for (w, d) in row.iter_mut().zip(delta) {
                    *w += scale * xi * d;
                }
            }
        } else {
            for (i, &ai) in t.hidden[l - 1].iter().enumerate() {
                let row = &mut layer.weights[i * out..(i + 1) * out];
                for (w, d) in row.iter_mut().zip(delta) {
                    *w += scale * ai * d;
                }
            }
        }
        for (b, d) in layer.biases.iter_mut().zip(delta) {
            *b += scale * d;
        }
    }
}

/// Mini-batch gradient descent on mean cross-entropy.
///
/// Within a batch all gradients are taken at the same weights; the update to
/// the first layer only touches rows of features present in the batch.
pub fn train_mlp(data: &LabeledDataset, params: &MlpParams) -> Result<(Mlp, Convergence), TrainError> {
    if !(params.learning_rate > 0.0) || !params.learning_rate.is_finite() {
        return Err(TrainError::InvalidParameter(format!(
            "learning_rate must be > 0, got {}",
            params.learning_rate
        )));
    }
    if params.batch_size == 0 {
        return Err(TrainError::InvalidParameter("batch_size must be >= 1".into()));
    }
    let mut net = Mlp::new(data.dim(), &params.hidden, params.seed)?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(params.epochs + 1);
    trace.push(net.loss(data.rows()));

    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let scale = -params.learning_rate / batch.len() as f64;
            let traces: Vec<Trace> = batch.iter().map(|&i| net.trace(&data.rows()[i])).collect();
            for (&i, t) in batch.iter().zip(&traces) {
                accumulate(&mut net.layers, &data.rows()[i], t, scale);
            }
        }
        trace.push(net.loss(data.rows()));
    }
    let final_objective = *trace.last().unwrap();
    Ok((
        net,
        Convergence {
            iterations: params.epochs,
            converged: final_objective.is_finite(),
            final_objective,
            trace,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::fixtures::{accuracy, separable, xor};
    use crate::classifiers::Model;

    #[test]
    fn rejects_empty_hidden_stack() {
        let p = MlpParams {
            hidden: vec![],
            ..MlpParams::default()
        };
        assert!(matches!(train_mlp(&xor(), &p), Err(TrainError::InvalidParameter(_))));
    }

    #[test]
    fn softmax_sums_to_one() {
        let net = Mlp::new(2, &[3, 2], 9).unwrap();
        for row in separable().rows() {
            let p = net.probabilities(&row.features);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn xavier_bounds() {
        let net = Mlp::new(10, &[6], 1).unwrap();
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(net.layers()[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(net.layers()[1].weights.iter().all(|w| w.abs() <= (6.0f64 / 8.0).sqrt()));
    }

    #[test]
    fn learns_xor() {
        let (net, _) = train_mlp(
            &xor(),
            &MlpParams {
                hidden: vec![4],
                learning_rate: 2.0,
                epochs: 5000,
                batch_size: 4,
                seed: 42,
            },
        )
        .unwrap();
        assert_eq!(accuracy(&Model::Mlp(net), &xor()), 1.0);
    }

    #[test]
    fn small_step_loss_is_non_increasing() {
        let data = separable();
        let (_, conv) = train_mlp(
            &data,
            &MlpParams {
                hidden: vec![4],
                learning_rate: 0.01,
                epochs: 10,
                batch_size: data.len(),
                seed: 5,
            },
        )
        .unwrap();
        assert!(conv.trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", conv.trace);
    }

    #[test]
    fn flat_params_round_trip() {
        let mut net = Mlp::new(3, &[2], 4).unwrap();
        let flat: Vec<f64> = (0..net.num_params()).map(|i| i as f64).collect();
        net.set_flat_params(&flat);
        assert_eq!(net.flat_params(), flat);
    }
}
