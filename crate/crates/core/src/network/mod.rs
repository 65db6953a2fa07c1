//! Feed-forward, LSTM and bidirectional LSTM sequence labelers trained with
//! exact backpropagation through time.
//!
//! Layer stacks per variant:
//!
//! * `FF`: three relu dense layers, then softmax. Each token is classified
//!   on its own.
//! * `LSTM`: one relu dense layer, two stacked forward LSTM layers, softmax.
//! * `BLSTM`: one relu dense layer, a forward and a backward LSTM over the
//!   dense outputs, a forward decoder LSTM reading `[h_t; z_t]`, softmax.
//!
//! The decoder's input weights act on the concatenated forward state `h_t`
//! and backward state `z_t`, i.e. each gate computes `W_h h_t + W_z z_t`.

mod gradcheck;
pub mod linalg;
pub mod lstm;

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gradcheck::{gradient_check, gradient_check_with, BlockCheck, GradCheckReport};
pub use linalg::Matrix;
pub use lstm::{lstm_backward, lstm_forward, Direction, LstmParams, LstmTrace};

use crate::error::{Error, Result};
use linalg::{nonzero_indices, softmax};

/// Probability floor applied before taking logarithms in the loss.
pub const PROB_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetworkVariant {
    #[serde(rename = "FF")]
    Ff,
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "BLSTM")]
    Blstm,
}

impl NetworkVariant {
    pub const ALL: [NetworkVariant; 3] = [
        NetworkVariant::Ff,
        NetworkVariant::Lstm,
        NetworkVariant::Blstm,
    ];
}

impl fmt::Display for NetworkVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkVariant::Ff => "FF",
            NetworkVariant::Lstm => "LSTM",
            NetworkVariant::Blstm => "BLSTM",
        })
    }
}

impl FromStr for NetworkVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FF" => Ok(NetworkVariant::Ff),
            "LSTM" => Ok(NetworkVariant::Lstm),
            "BLSTM" => Ok(NetworkVariant::Blstm),
            _ => Err(Error::Config(format!(
                "unknown network {s:?} (FF, LSTM or BLSTM)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub variant: NetworkVariant,
    pub input_dim: usize,
    pub dense_size: usize,
    pub lstm_cells: usize,
    pub n_classes: usize,
    pub learning_rate: f64,
}

impl NetworkConfig {
    pub const DENSE_SIZE: usize = 150;
    pub const LSTM_CELLS: usize = 20;
    pub const LEARNING_RATE: f64 = 0.005;

    /// 150 dense units, 20 LSTM cells, 3 classes, learning rate 0.005.
    pub fn new(variant: NetworkVariant, input_dim: usize) -> Self {
        NetworkConfig {
            variant,
            input_dim,
            dense_size: Self::DENSE_SIZE,
            lstm_cells: Self::LSTM_CELLS,
            n_classes: 3,
            learning_rate: Self::LEARNING_RATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.dense_size == 0
            || self.lstm_cells == 0
            || self.n_classes == 0
        {
            return Err(Error::Config(format!(
                "all layer sizes must be positive: {self:?}"
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "invalid learning rate {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    fn last_hidden(&self) -> usize {
        match self.variant {
            NetworkVariant::Ff => self.dense_size,
            _ => self.lstm_cells,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    pub w: Matrix,
    pub b: Matrix,
}

impl DenseParams {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        DenseParams {
            w: Matrix::zeros(output_dim, input_dim),
            b: Matrix::zeros(output_dim, 1),
        }
    }
}

/// All trainable tensors of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub variant: NetworkVariant,
    /// FF: three layers; LSTM and BLSTM: one input layer.
    pub dense: Vec<DenseParams>,
    /// LSTM: two stacked layers; BLSTM: forward, backward, decoder.
    pub lstm: Vec<LstmParams>,
    pub output: DenseParams,
}

/// Gradients share the parameter layout.
pub type GradientSet = Parameters;

impl Parameters {
    pub fn zeros(config: &NetworkConfig) -> Self {
        let (d, c) = (config.dense_size, config.lstm_cells);
        let (dense, lstm) = match config.variant {
            NetworkVariant::Ff => (
                vec![
                    DenseParams::zeros(config.input_dim, d),
                    DenseParams::zeros(d, d),
                    DenseParams::zeros(d, d),
                ],
                Vec::new(),
            ),
            NetworkVariant::Lstm => (
                vec![DenseParams::zeros(config.input_dim, d)],
                vec![LstmParams::zeros(d, c), LstmParams::zeros(c, c)],
            ),
            NetworkVariant::Blstm => (
                vec![DenseParams::zeros(config.input_dim, d)],
                vec![
                    LstmParams::zeros(d, c),
                    LstmParams::zeros(d, c),
                    LstmParams::zeros(2 * c, c),
                ],
            ),
        };
        Parameters {
            variant: config.variant,
            dense,
            lstm,
            output: DenseParams::zeros(config.last_hidden(), config.n_classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, m| m.fill(0.0));
        z
    }

    fn lstm_prefix(&self, idx: usize) -> String {
        match (self.variant, idx) {
            (NetworkVariant::Blstm, 0) => "blstm.fwd".into(),
            (NetworkVariant::Blstm, 1) => "blstm.bwd".into(),
            (NetworkVariant::Blstm, _) => "decoder".into(),
            (_, i) => format!("lstm{}", i + 1),
        }
    }

    /// Every tensor with its canonical name, in serialization order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, d) in self.dense.iter().enumerate() {
            out.push((format!("dense{}.W", i + 1), &d.w));
            out.push((format!("dense{}.b", i + 1), &d.b));
        }
        for (i, l) in self.lstm.iter().enumerate() {
            let prefix = self.lstm_prefix(i);
            for (k, gate) in lstm::GATES.iter().enumerate() {
                out.push((format!("{prefix}.W_{gate}x"), &l.wx[k]));
                out.push((format!("{prefix}.W_{gate}h"), &l.wh[k]));
                out.push((format!("{prefix}.b_{gate}"), &l.b[k]));
            }
        }
        out.push(("output.W_y".into(), &self.output.w));
        out.push(("output.b_y".into(), &self.output.b));
        out
    }

    /// Mutable counterpart of [`Parameters::tensors`], same order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(usize, &mut Matrix)) {
        let mut idx = 0;
        let mut visit = |m: &mut Matrix| {
            f(idx, m);
            idx += 1;
        };
        for d in &mut self.dense {
            visit(&mut d.w);
            visit(&mut d.b);
        }
        for l in &mut self.lstm {
            for k in 0..4 {
                visit(&mut l.wx[k]);
                visit(&mut l.wh[k]);
                visit(&mut l.b[k]);
            }
        }
        visit(&mut self.output.w);
        visit(&mut self.output.b);
    }

    pub fn tensor_count(&self) -> usize {
        self.tensors().len()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    /// True when every tensor has the shape `config` calls for.
    pub fn matches(&self, config: &NetworkConfig) -> bool {
        let expected = Parameters::zeros(config);
        self.variant == config.variant
            && self.tensors().len() == expected.tensors().len()
            && self
                .tensors()
                .iter()
                .zip(expected.tensors())
                .all(|((_, a), (_, b))| a.shape() == b.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, m)| m.as_slice().iter().all(|v| v.is_finite()))
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, m)| m.as_slice())
            .map(|v| v * v)
            .sum()
    }
}

/// Glorot-uniform weights, zero biases except the forget gate bias (1.0).
pub fn init_params(config: &NetworkConfig, seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_with(config, &mut rng)
}

pub(crate) fn init_params_with(config: &NetworkConfig, rng: &mut ChaCha8Rng) -> Parameters {
    let mut params = Parameters::zeros(config);
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    params.for_each_mut(|idx, m| {
        let name = &names[idx];
        if !name.contains(".W") {
            if name.ends_with(".b_f") {
                m.fill(1.0);
            }
            return;
        }
        let r = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
        let dist = Uniform::new_inclusive(-r, r).expect("finite range");
        for v in m.as_mut_slice() {
            *v = dist.sample(rng);
        }
    });
    params
}

#[derive(Clone, Debug, Default)]
pub struct DenseTrace {
    /// Layer inputs per time step.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activations per time step.
    pub pre: Vec<Vec<f64>>,
    /// Post-relu outputs per time step.
    pub out: Vec<Vec<f64>>,
}

/// Everything a forward pass caches for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct SequenceActivations {
    pub dense: Vec<DenseTrace>,
    pub lstm: Vec<LstmTrace>,
    /// Inputs to the softmax layer.
    pub top: Vec<Vec<f64>>,
    /// Class distributions `y_t`.
    pub y: Vec<Vec<f64>>,
}

impl SequenceActivations {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn dense_forward(layer: &DenseParams, xs: Vec<Vec<f64>>, sparse: bool) -> DenseTrace {
    let mut trace = DenseTrace::default();
    for x in xs {
        let mut z = layer.b.as_slice().to_vec();
        if sparse {
            layer.w.mul_sparse_add(&x, &nonzero_indices(&x), &mut z);
        } else {
            layer.w.mul_vec_add(&x, &mut z);
        }
        let a = z.iter().map(|&v| v.max(0.0)).collect();
        trace.inputs.push(x);
        trace.pre.push(z);
        trace.out.push(a);
    }
    trace
}

/// Runs the network over one sentence. Returns `y_t` per token and the
/// activation cache.
pub fn forward<X: AsRef<[f64]>>(
    inputs: &[X],
    config: &NetworkConfig,
    params: &Parameters,
) -> Result<(Vec<Vec<f64>>, SequenceActivations)> {
    if !params.matches(config) {
        return Err(Error::Dimension(
            "parameters do not match the network configuration".into(),
        ));
    }
    if let Some((t, x)) = inputs
        .iter()
        .enumerate()
        .find(|(_, x)| x.as_ref().len() != config.input_dim)
    {
        return Err(Error::Dimension(format!(
            "input {t} has {} values, expected {}",
            x.as_ref().len(),
            config.input_dim
        )));
    }
    let mut acts = SequenceActivations::default();
    if inputs.is_empty() {
        return Ok((Vec::new(), acts));
    }

    let mut current: Vec<Vec<f64>> = inputs.iter().map(|x| x.as_ref().to_vec()).collect();
    for (i, layer) in params.dense.iter().enumerate() {
        let trace = dense_forward(layer, current, i == 0);
        current = trace.out.clone();
        acts.dense.push(trace);
    }

    match config.variant {
        NetworkVariant::Ff => {}
        NetworkVariant::Lstm => {
            for layer in &params.lstm {
                let trace = lstm_forward(&current, layer, Direction::Forward)?;
                current = trace.hidden_states();
                acts.lstm.push(trace);
            }
        }
        NetworkVariant::Blstm => {
            let fwd = lstm_forward(&current, &params.lstm[0], Direction::Forward)?;
            let bwd = lstm_forward(&current, &params.lstm[1], Direction::Backward)?;
            let combined: Vec<Vec<f64>> = fwd
                .hidden_states()
                .into_iter()
                .zip(bwd.hidden_states())
                .map(|(h, z)| h.into_iter().chain(z).collect())
                .collect();
            let dec = lstm_forward(&combined, &params.lstm[2], Direction::Forward)?;
            current = dec.hidden_states();
            acts.lstm.extend([fwd, bwd, dec]);
        }
    }

    for top in current {
        let mut logits = params.output.b.as_slice().to_vec();
        params.output.w.mul_vec_add(&top, &mut logits);
        acts.y.push(softmax(&logits));
        acts.top.push(top);
    }
    Ok((acts.y.clone(), acts))
}

/// Token-mean cross-entropy.
pub fn loss(y_seq: &[Vec<f64>], gold: &[usize]) -> f64 {
    assert_eq!(
        y_seq.len(),
        gold.len(),
        "prediction and gold lengths differ"
    );
    if y_seq.is_empty() {
        return 0.0;
    }
    let total: f64 = y_seq
        .iter()
        .zip(gold)
        .map(|(y, &g)| -y[g].max(PROB_EPSILON).ln())
        .sum();
    total / y_seq.len() as f64
}

/// Exact gradient of [`loss`] over the whole sentence.
pub fn backward_bptt(
    acts: &SequenceActivations,
    gold: &[usize],
    config: &NetworkConfig,
    params: &Parameters,
) -> Result<GradientSet> {
    let mut grads = params.zeros_like();
    accumulate_gradients(acts, gold, config, params, &mut grads)?;
    Ok(grads)
}

/// Adds the sentence gradient into `grads`.
pub fn accumulate_gradients(
    acts: &SequenceActivations,
    gold: &[usize],
    config: &NetworkConfig,
    params: &Parameters,
    grads: &mut GradientSet,
) -> Result<()> {
    let n = acts.len();
    if gold.len() != n {
        return Err(Error::Dimension(format!(
            "{} gold labels for {n} outputs",
            gold.len()
        )));
    }
    if n == 0 {
        return Ok(());
    }
    if let Some(&g) = gold.iter().find(|&&g| g >= config.n_classes) {
        return Err(Error::Dimension(format!("gold class {g} out of range")));
    }
    let scale = 1.0 / n as f64;

    let mut d_top: Vec<Vec<f64>> = Vec::with_capacity(n);
    for t in 0..n {
        let mut dlogits = acts.y[t].clone();
        dlogits[gold[t]] -= 1.0;
        dlogits.iter_mut().for_each(|v| *v *= scale);
        grads.output.w.add_outer(&dlogits, &acts.top[t]);
        grads.output.b.add_column(&dlogits);
        let mut d = vec![0.0; acts.top[t].len()];
        params.output.w.tmul_vec_add(&dlogits, &mut d);
        d_top.push(d);
    }

    let d_dense_out = match config.variant {
        NetworkVariant::Ff => d_top,
        NetworkVariant::Lstm => {
            let mut d = d_top;
            for idx in (0..params.lstm.len()).rev() {
                d = lstm_backward(
                    &acts.lstm[idx],
                    &d,
                    &params.lstm[idx],
                    &mut grads.lstm[idx],
                    true,
                );
            }
            d
        }
        NetworkVariant::Blstm => {
            let c = config.lstm_cells;
            let d_comb = lstm_backward(
                &acts.lstm[2],
                &d_top,
                &params.lstm[2],
                &mut grads.lstm[2],
                true,
            );
            let (dh, dz): (Vec<Vec<f64>>, Vec<Vec<f64>>) = d_comb
                .into_iter()
                .map(|v| (v[..c].to_vec(), v[c..].to_vec()))
                .unzip();
            let dx_f = lstm_backward(
                &acts.lstm[0],
                &dh,
                &params.lstm[0],
                &mut grads.lstm[0],
                true,
            );
            let dx_b = lstm_backward(
                &acts.lstm[1],
                &dz,
                &params.lstm[1],
                &mut grads.lstm[1],
                true,
            );
            dx_f.into_iter()
                .zip(dx_b)
                .map(|(a, b)| a.iter().zip(&b).map(|(x, y)| x + y).collect())
                .collect()
        }
    };

    let mut d_out = d_dense_out;
    for idx in (0..params.dense.len()).rev() {
        let trace = &acts.dense[idx];
        let first = idx == 0;
        let mut d_in = Vec::with_capacity(n);
        for t in 0..n {
            let dz: Vec<f64> = d_out[t]
                .iter()
                .zip(&trace.pre[t])
                .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
                .collect();
            let x = &trace.inputs[t];
            if first {
                grads.dense[idx]
                    .w
                    .add_outer_sparse(&dz, x, &nonzero_indices(x));
            } else {
                grads.dense[idx].w.add_outer(&dz, x);
                let mut dx = vec![0.0; x.len()];
                params.dense[idx].w.tmul_vec_add(&dz, &mut dx);
                d_in.push(dx);
            }
            grads.dense[idx].b.add_column(&dz);
        }
        d_out = d_in;
    }
    Ok(())
}

/// Plain SGD: `p <- p - lr * g`. Parameters are left untouched when any
/// gradient entry is not finite.
pub fn sgd_step(params: &mut Parameters, grads: &GradientSet, learning_rate: f64) -> Result<()> {
    let grad_tensors = grads.tensors();
    if grad_tensors.len() != params.tensor_count() {
        return Err(Error::Dimension(
            "gradient layout differs from parameters".into(),
        ));
    }
    for (name, g) in &grad_tensors {
        if let Some(pos) = g.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite gradient in {name}[{pos}]"
            )));
        }
    }
    let mut shape_error = None;
    params.for_each_mut(|idx, p| {
        let g = grad_tensors[idx].1;
        if p.shape() != g.shape() {
            shape_error.get_or_insert(grad_tensors[idx].0.clone());
            return;
        }
        for (pv, gv) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *pv -= learning_rate * gv;
        }
    });
    match shape_error {
        Some(name) => Err(Error::Dimension(format!(
            "gradient shape mismatch in {name}"
        ))),
        None => Ok(()),
    }
}

/// Training-loop variant of [`sgd_step`]: updates every tensor, then
/// clears `grads` for the next sentence. Only the listed input columns of
/// the first dense layer are visited, since no other column of its weight
/// gradient can be nonzero.
pub(crate) fn sgd_step_and_clear(
    params: &mut Parameters,
    grads: &mut GradientSet,
    learning_rate: f64,
    input_columns: &[usize],
) -> Result<()> {
    for (idx, (name, g)) in grads.tensors().into_iter().enumerate() {
        let bad = if idx == 0 {
            (0..g.rows()).any(|r| input_columns.iter().any(|&c| !g.get(r, c).is_finite()))
        } else {
            g.as_slice().iter().any(|v| !v.is_finite())
        };
        if bad {
            return Err(Error::Validation(format!("non-finite gradient in {name}")));
        }
    }
    let tensors = grads.tensors();
    params.for_each_mut(|idx, p| {
        let g = tensors[idx].1;
        if idx == 0 {
            let cols = p.cols();
            let (pd, gd) = (p.as_mut_slice(), g.as_slice());
            for r in 0..g.rows() {
                for &c in input_columns {
                    pd[r * cols + c] -= learning_rate * gd[r * cols + c];
                }
            }
        } else {
            for (pv, gv) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *pv -= learning_rate * gv;
            }
        }
    });
    grads.for_each_mut(|idx, g| {
        if idx == 0 {
            let cols = g.cols();
            let rows = g.rows();
            let gd = g.as_mut_slice();
            for r in 0..rows {
                for &c in input_columns {
                    gd[r * cols + c] = 0.0;
                }
            }
        } else {
            g.fill(0.0);
        }
    });
    Ok(())
}
