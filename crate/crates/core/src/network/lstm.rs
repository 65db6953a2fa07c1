//! The LSTM cell:
//!
//! ```text
//! g_t = tanh(W_gx x_t + W_gh h_{t-1} + b_g)
//! i_t = σ(W_ix x_t + W_ih h_{t-1} + b_i)
//! f_t = σ(W_fx x_t + W_fh h_{t-1} + b_f)
//! o_t = σ(W_ox x_t + W_oh h_{t-1} + b_o)
//! s_t = tanh(g_t ⊙ i_t + s_{t-1} ⊙ f_t)
//! h_t = s_t ⊙ o_t
//! ```
//!
//! The state update is wrapped in `tanh` and the output carries no second
//! nonlinearity.

use serde::{Deserialize, Serialize};

use super::linalg::{sigmoid, Matrix};
use crate::error::{Error, Result};

/// Gate order used for every per-gate array.
pub const GATES: [&str; 4] = ["g", "i", "f", "o"];
const G: usize = 0;
const I: usize = 1;
const F: usize = 2;
const O: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// Weights of one LSTM direction.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// Input weights `W_gx, W_ix, W_fx, W_ox`, each `cells x input_dim`.
    pub wx: [Matrix; 4],
    /// Recurrent weights `W_gh, W_ih, W_fh, W_oh`, each `cells x cells`.
    pub wh: [Matrix; 4],
    /// Biases `b_g, b_i, b_f, b_o`, each `cells x 1`.
    pub b: [Matrix; 4],
}

impl LstmParams {
    pub fn zeros(input_dim: usize, cells: usize) -> Self {
        LstmParams {
            wx: std::array::from_fn(|_| Matrix::zeros(cells, input_dim)),
            wh: std::array::from_fn(|_| Matrix::zeros(cells, cells)),
            b: std::array::from_fn(|_| Matrix::zeros(cells, 1)),
        }
    }

    pub fn cells(&self) -> usize {
        self.wh[0].rows()
    }

    pub fn input_dim(&self) -> usize {
        self.wx[0].cols()
    }
}

/// Cached activations of one LSTM direction, in processing order.
#[derive(Clone, Debug, Default)]
pub struct LstmTrace {
    pub direction: Option<Direction>,
    pub inputs: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub i: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub o: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

impl LstmTrace {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    fn reorder(&self, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out = v.to_vec();
        if self.direction == Some(Direction::Backward) {
            out.reverse();
        }
        out
    }

    /// Hidden states in original sequence positions.
    pub fn hidden_states(&self) -> Vec<Vec<f64>> {
        self.reorder(&self.h)
    }

    /// Internal states `s_t` in original sequence positions.
    pub fn cell_states(&self) -> Vec<Vec<f64>> {
        self.reorder(&self.s)
    }
}

/// Runs one direction over a sequence given in original order.
pub fn lstm_forward<X: AsRef<[f64]>>(
    xs: &[X],
    params: &LstmParams,
    direction: Direction,
) -> Result<LstmTrace> {
    let cells = params.cells();
    let dim = params.input_dim();
    let mut trace = LstmTrace {
        direction: Some(direction),
        ..Default::default()
    };
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..xs.len()).collect(),
        Direction::Backward => (0..xs.len()).rev().collect(),
    };
    let mut h_prev = vec![0.0; cells];
    let mut s_prev = vec![0.0; cells];
    for t in order {
        let x = xs[t].as_ref();
        if x.len() != dim {
            return Err(Error::Dimension(format!(
                "LSTM input at position {t} has {} values, expected {dim}",
                x.len()
            )));
        }
        let mut pre: [Vec<f64>; 4] = std::array::from_fn(|k| params.b[k].as_slice().to_vec());
        for k in 0..4 {
            params.wx[k].mul_vec_add(x, &mut pre[k]);
            params.wh[k].mul_vec_add(&h_prev, &mut pre[k]);
        }
        let g: Vec<f64> = pre[G].iter().map(|v| v.tanh()).collect();
        let i: Vec<f64> = pre[I].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = pre[F].iter().map(|&v| sigmoid(v)).collect();
        let o: Vec<f64> = pre[O].iter().map(|&v| sigmoid(v)).collect();
        let s: Vec<f64> = (0..cells)
            .map(|c| (g[c] * i[c] + s_prev[c] * f[c]).tanh())
            .collect();
        let h: Vec<f64> = (0..cells).map(|c| s[c] * o[c]).collect();

        trace.inputs.push(x.to_vec());
        trace.g.push(g);
        trace.i.push(i);
        trace.f.push(f);
        trace.o.push(o);
        trace.s.push(s.clone());
        trace.h.push(h.clone());
        h_prev = h;
        s_prev = s;
    }
    Ok(trace)
}

/// Backpropagation through time for one direction.
///
/// `dh` holds the loss gradient with respect to each hidden state in
/// original sequence positions. Gradients are added into `grads`; the
/// returned vectors are the input gradients in original positions.
pub fn lstm_backward(
    trace: &LstmTrace,
    dh: &[Vec<f64>],
    params: &LstmParams,
    grads: &mut LstmParams,
    want_input_grads: bool,
) -> Vec<Vec<f64>> {
    let n = trace.len();
    let cells = params.cells();
    let dim = params.input_dim();
    let backward = trace.direction == Some(Direction::Backward);
    // processing step k corresponds to original position pos(k)
    let pos = |k: usize| if backward { n - 1 - k } else { k };

    let mut dx = vec![Vec::new(); n];
    let mut dh_next = vec![0.0; cells];
    let mut ds_next = vec![0.0; cells];
    let zeros = vec![0.0; cells];

    for k in (0..n).rev() {
        let (g, i, f, o, s) = (
            &trace.g[k],
            &trace.i[k],
            &trace.f[k],
            &trace.o[k],
            &trace.s[k],
        );
        let s_prev = if k > 0 { &trace.s[k - 1] } else { &zeros };
        let h_prev = if k > 0 { &trace.h[k - 1] } else { &zeros };

        let mut dpre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; cells]);
        let mut ds_prev = vec![0.0; cells];
        for c in 0..cells {
            let dh_c = dh[pos(k)][c] + dh_next[c];
            let ds = dh_c * o[c] + ds_next[c];
            let da = ds * (1.0 - s[c] * s[c]);
            dpre[O][c] = dh_c * s[c] * o[c] * (1.0 - o[c]);
            dpre[G][c] = da * i[c] * (1.0 - g[c] * g[c]);
            dpre[I][c] = da * g[c] * i[c] * (1.0 - i[c]);
            dpre[F][c] = da * s_prev[c] * f[c] * (1.0 - f[c]);
            ds_prev[c] = da * f[c];
        }

        let mut dh_prev = vec![0.0; cells];
        let mut dx_k = if want_input_grads {
            vec![0.0; dim]
        } else {
            Vec::new()
        };
        for gate in 0..4 {
            grads.wx[gate].add_outer(&dpre[gate], &trace.inputs[k]);
            grads.wh[gate].add_outer(&dpre[gate], h_prev);
            grads.b[gate].add_column(&dpre[gate]);
            params.wh[gate].tmul_vec_add(&dpre[gate], &mut dh_prev);
            if want_input_grads {
                params.wx[gate].tmul_vec_add(&dpre[gate], &mut dx_k);
            }
        }
        dx[pos(k)] = dx_k;
        dh_next = dh_prev;
        ds_next = ds_prev;
    }
    dx
}
