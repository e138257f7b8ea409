//! Feedforward ReLU regression network: MSE loss with an L2 weight penalty,
//! exact backpropagation, Adam updates and validation early stopping.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const STATE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    Full,
    Mini(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_layers: usize,
    pub units_per_layer: usize,
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: BatchSize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden_layers: 2,
            units_per_layer: 192,
            l2_lambda: 0.001,
            learning_rate: 0.001,
            max_epochs: 100_000,
            batch_size: BatchSize::Full,
            early_stop_patience: 200,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("network config: {m}")));
        if self.hidden_layers > 0 && self.units_per_layer == 0 {
            return bad("units_per_layer must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be non-negative");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be >= 1");
        }
        if self.batch_size == BatchSize::Mini(0) {
            return bad("batch size must be >= 1");
        }
        Ok(())
    }
}

/// Dense layer; `weights` is fan_in × fan_out so a batch forward is `X · W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            weights: Matrix::zeros(self.weights.nrows(), self.weights.ncols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.as_slice().iter().chain(self.bias.iter())
    }
}

/// Parameter-shaped container, used for gradients and Adam moments.
pub type Gradients = Vec<Layer>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub format_version: u32,
    pub input_dim: usize,
    pub l2_lambda: f64,
    pub layers: Vec<Layer>,
    pub first_moment: Vec<Layer>,
    pub second_moment: Vec<Layer>,
    pub step: u64,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters are held (after early-stopping restore).
    pub best_epoch: usize,
}

/// Seeded scaled-uniform weights, bound `sqrt(6 / (fan_in + fan_out))`; zero biases.
pub fn init(cfg: &NetworkConfig, input_dim: usize) -> Result<NetworkState> {
    cfg.validate()?;
    if input_dim == 0 {
        return Err(Error::Config("network input_dim must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dims = vec![input_dim];
    dims.extend(std::iter::repeat_n(cfg.units_per_layer, cfg.hidden_layers));
    dims.push(1);
    let layers: Vec<Layer> = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                weights: Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound)),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    let zeros: Vec<Layer> = layers.iter().map(Layer::zeros_like).collect();
    Ok(NetworkState {
        format_version: STATE_FORMAT_VERSION,
        input_dim,
        l2_lambda: cfg.l2_lambda,
        first_moment: zeros.clone(),
        second_moment: zeros,
        layers,
        step: 0,
        history: Vec::new(),
        best_epoch: 0,
    })
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Layer activations: `acts[0] = X`, `acts[l+1]` = output of layer `l`
/// (post-ReLU for hidden layers, identity for the last).
fn forward_all(layers: &[Layer], x: &Matrix) -> Result<Vec<Matrix>> {
    let mut acts = vec![x.clone()];
    for (l, layer) in layers.iter().enumerate() {
        let mut z = acts[l].matmul(&layer.weights)?;
        let last = l + 1 == layers.len();
        for row in 0..z.nrows() {
            for (v, b) in z.row_mut(row).iter_mut().zip(&layer.bias) {
                *v += b;
                if !last {
                    *v = relu(*v);
                }
            }
        }
        acts.push(z);
    }
    Ok(acts)
}

impl NetworkState {
    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let acts = forward_all(&self.layers, x)?;
        Ok(acts.last().expect("output layer").as_slice().to_vec())
    }

    pub fn weight_penalty(&self) -> f64 {
        self.l2_lambda
            * self
                .layers
                .iter()
                .flat_map(|l| l.weights.as_slice())
                .map(|w| w * w)
                .sum::<f64>()
    }

    /// Mean squared error plus `l2_lambda · Σ w²` (biases excluded).
    pub fn loss(&self, x: &Matrix, y: &[f64]) -> Result<f64> {
        Ok(mse(&self.forward(x)?, y)? + self.weight_penalty())
    }

    /// Exact gradient of [`Self::loss`]; ReLU subgradient at 0 is 0.
    pub fn backward(&self, x: &Matrix, y: &[f64]) -> Result<Gradients> {
        Ok(self.loss_and_gradients(x, y)?.1)
    }

    /// Data MSE (before penalty) and full gradients in one pass.
    fn loss_and_gradients(&self, x: &Matrix, y: &[f64]) -> Result<(f64, Gradients)> {
        self.check_input(x)?;
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::Dimension { expected: n, got: y.len() });
        }
        let acts = forward_all(&self.layers, x)?;
        let out = acts.last().expect("output layer").as_slice();
        let data_loss = mse(out, y)?;
        // dL/dz for the output layer (n × 1)
        let mut delta = Matrix::from_vec(n, 1, out.iter().zip(y).map(|(o, t)| 2.0 * (o - t) / n as f64).collect())?;
        let mut grads: Gradients = self.layers.iter().map(Layer::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let a_prev = &acts[l];
            let g = &mut grads[l];
            let fan_out = layer.weights.ncols();
            for i in 0..n {
                let d = delta.row(i);
                for (gb, dv) in g.bias.iter_mut().zip(d) {
                    *gb += dv;
                }
                for (k, &a) in a_prev.row(i).iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let gw = &mut g.weights.as_mut_slice()[k * fan_out..(k + 1) * fan_out];
                    for (w, dv) in gw.iter_mut().zip(d) {
                        *w += a * dv;
                    }
                }
            }
            for (gw, w) in g.weights.as_mut_slice().iter_mut().zip(layer.weights.as_slice()) {
                *gw += 2.0 * self.l2_lambda * w;
            }
            if l > 0 {
                // propagate through W and the ReLU of the previous layer
                let fan_in = layer.weights.nrows();
                let mut next = Matrix::zeros(n, fan_in);
                for i in 0..n {
                    let d = delta.row(i);
                    let a = a_prev.row(i);
                    let out_row = next.row_mut(i);
                    for k in 0..fan_in {
                        if a[k] > 0.0 {
                            out_row[k] = crate::linalg::dot(layer.weights.row(k), d);
                        }
                    }
                }
                delta = next;
            }
        }
        Ok((data_loss, grads))
    }

    /// One Adam update with bias correction.
    pub fn adam_step(&mut self, grads: &Gradients, learning_rate: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for l in 0..self.layers.len() {
            let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
                for (((p, m), v), g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let mhat = *m / c1;
                    let vhat = *v / c2;
                    *p -= learning_rate * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            };
            update(
                self.layers[l].weights.as_mut_slice(),
                self.first_moment[l].weights.as_mut_slice(),
                self.second_moment[l].weights.as_mut_slice(),
                grads[l].weights.as_slice(),
            );
            update(
                &mut self.layers[l].bias,
                &mut self.first_moment[l].bias,
                &mut self.second_moment[l].bias,
                &grads[l].bias,
            );
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.params().count()).sum()
    }

    /// Flattened parameters (weights then bias, layer by layer).
    pub fn params_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut it = flat.iter();
        for l in &mut self.layers {
            for w in l.weights.as_mut_slice() {
                *w = *it.next().unwrap();
            }
            for b in &mut l.bias {
                *b = *it.next().unwrap();
            }
        }
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,validation_loss\n");
        for r in &self.history {
            let _ = writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.validation_loss);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let st: NetworkState = serde_json::from_str(s)?;
        if st.format_version != STATE_FORMAT_VERSION {
            return Err(Error::Serde(format!(
                "network state format {} is not supported (expected {STATE_FORMAT_VERSION})",
                st.format_version
            )));
        }
        Ok(st)
    }
}

pub fn flatten(grads: &Gradients) -> Vec<f64> {
    grads.iter().flat_map(|l| l.params().copied()).collect()
}

fn mse(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(Error::Dimension {
            expected: pred.len(),
            got: y.len(),
        });
    }
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64)
}

/// Patience-based early stopping on a validation loss sequence.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Feeds one epoch's validation loss. Returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Trains from a fresh initialization. Validation MSE drives early stopping
/// and the returned state holds the best validation epoch's parameters.
pub fn train(cfg: &NetworkConfig, x_train: &Matrix, y_train: &[f64], x_val: &Matrix, y_val: &[f64]) -> Result<NetworkState> {
    let mut state = init(cfg, x_train.ncols())?;
    if x_val.ncols() != x_train.ncols() {
        return Err(Error::Dimension {
            expected: x_train.ncols(),
            got: x_val.ncols(),
        });
    }
    if cfg.max_epochs == 0 {
        return Ok(state);
    }
    let n = x_train.nrows();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();

    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let val0 = mse(&state.forward(x_val)?, y_val)?;
    stopper.observe(0, val0);
    let mut best_params = state.params_flat();

    for epoch in 1..=cfg.max_epochs {
        let train_loss = match cfg.batch_size {
            BatchSize::Mini(b) if b < n => {
                order.shuffle(&mut shuffle_rng);
                let mut total = 0.0;
                for chunk in order.chunks(b) {
                    let xb = x_train.select_rows(chunk);
                    let yb: Vec<f64> = chunk.iter().map(|&i| y_train[i]).collect();
                    let (l, g) = state.loss_and_gradients(&xb, &yb)?;
                    total += l * chunk.len() as f64;
                    state.adam_step(&g, cfg.learning_rate);
                }
                total / n as f64 + state.weight_penalty()
            }
            _ => {
                let penalty = state.weight_penalty();
                let (l, g) = state.loss_and_gradients(x_train, y_train)?;
                state.adam_step(&g, cfg.learning_rate);
                l + penalty
            }
        };
        let val = mse(&state.forward(x_val)?, y_val)?;
        if !train_loss.is_finite() || !val.is_finite() {
            return Err(Error::Model(format!(
                "network loss became non-finite at epoch {epoch} (learning rate {}); try a smaller learning rate",
                cfg.learning_rate
            )));
        }
        state.history.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss: val,
        });
        let (improved, stop) = stopper.observe(epoch, val);
        if improved {
            best_params = state.params_flat();
        }
        if stop {
            break;
        }
    }
    state.set_params_flat(&best_params);
    state.best_epoch = stopper.best_epoch();
    Ok(state)
}

/// Network plus target standardization, as used by the comparison harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnRegressor {
    pub state: NetworkState,
    pub target_mean: f64,
    pub target_scale: f64,
}

impl AnnRegressor {
    /// Trains on a standardized target; predictions are mapped back.
    pub fn fit(cfg: &NetworkConfig, x_train: &Matrix, y_train: &[f64], x_val: &Matrix, y_val: &[f64]) -> Result<Self> {
        let n = y_train.len() as f64;
        let mean = y_train.iter().sum::<f64>() / n;
        let var = y_train.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let zt: Vec<f64> = y_train.iter().map(|y| (y - mean) / scale).collect();
        let zv: Vec<f64> = y_val.iter().map(|y| (y - mean) / scale).collect();
        let state = train(cfg, x_train, &zt, x_val, &zv)?;
        Ok(AnnRegressor {
            state,
            target_mean: mean,
            target_scale: scale,
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .state
            .forward(x)?
            .into_iter()
            .map(|z| z * self.target_scale + self.target_mean)
            .collect())
    }
}
