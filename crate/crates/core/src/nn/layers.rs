//! Dense, batch-norm and dropout building blocks.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::rng::Rng;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch statistics of one batch-norm call: buffer slot, mean, biased
/// variance and row count.
pub type BnBatch = (usize, Array1<f64>, Array1<f64>, usize);

/// Per-pass settings plus the side effects a pass produces.
pub struct Pass<'a> {
    pub store: &'a ParamStore,
    pub buffers: &'a [RunningStats],
    pub train: bool,
    pub dropout: f64,
    rng: Option<Rng>,
    bn_batches: Vec<BnBatch>,
}

impl<'a> Pass<'a> {
    /// Evaluation pass: dropout off, batch norm on running statistics.
    pub fn eval(store: &'a ParamStore, buffers: &'a [RunningStats]) -> Self {
        Pass {
            store,
            buffers,
            train: false,
            dropout: 0.0,
            rng: None,
            bn_batches: Vec::new(),
        }
    }

    /// Training pass drawing dropout masks from `rng`.
    pub fn train(store: &'a ParamStore, buffers: &'a [RunningStats], dropout: f64, rng: Rng) -> Self {
        Pass {
            store,
            buffers,
            train: true,
            dropout,
            rng: Some(rng),
            bn_batches: Vec::new(),
        }
    }

    /// Batch statistics observed by each batch-norm layer, in call order.
    pub fn take_bn_batches(&mut self) -> Vec<BnBatch> {
        std::mem::take(&mut self.bn_batches)
    }

    fn keep_mask(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        let rate = self.dropout;
        let rng = self.rng.as_mut().expect("training pass has an rng");
        Array2::from_shape_fn((rows, cols), |_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 })
    }
}

/// Fold observed batch statistics into running estimates.
pub fn apply_bn_batches(buffers: &mut [RunningStats], batches: Vec<BnBatch>) {
    for (slot, mean, var, n) in batches {
        let unbiased = if n > 1 { var * (n as f64 / (n - 1) as f64) } else { var };
        let rs = &mut buffers[slot];
        rs.mean = &rs.mean * (1.0 - BN_MOMENTUM) + &mean * BN_MOMENTUM;
        rs.var = &rs.var * (1.0 - BN_MOMENTUM) + &unbiased * BN_MOMENTUM;
    }
}

/// Replace running estimates by the plain average of the given batch
/// statistics (one list per batch). Slots no batch observed are untouched.
pub fn average_bn_batches(buffers: &mut [RunningStats], batches: Vec<Vec<BnBatch>>) {
    let mut sums: Vec<Option<(Array1<f64>, Array1<f64>, usize)>> = vec![None; buffers.len()];
    for (slot, mean, var, n) in batches.into_iter().flatten() {
        let unbiased = if n > 1 { var * (n as f64 / (n - 1) as f64) } else { var };
        match &mut sums[slot] {
            Some((m, v, c)) => {
                *m += &mean;
                *v += &unbiased;
                *c += 1;
            }
            empty => *empty = Some((mean, unbiased, 1)),
        }
    }
    for (rs, sum) in buffers.iter_mut().zip(sums) {
        if let Some((m, v, c)) = sum {
            rs.mean = m / c as f64;
            rs.var = v / c as f64;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        RunningStats {
            mean: Array1::zeros(dim),
            var: Array1::ones(dim),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, bias: bool, rng: &mut Rng) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), input, output, rng);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Array2::zeros((1, output))));
        Linear {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(store, self.weight);
        let y = tape.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add_row(y, b)
            }
            None => y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    /// Index of this layer's running statistics in the model buffers.
    pub slot: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, buffers: &mut Vec<RunningStats>, name: &str, dim: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Array2::ones((1, dim)));
        let beta = store.add(format!("{name}.beta"), Array2::zeros((1, dim)));
        buffers.push(RunningStats::new(dim));
        BatchNorm {
            gamma,
            beta,
            slot: buffers.len() - 1,
        }
    }

    pub fn forward(&self, tape: &mut Tape, pass: &mut Pass, x: Var) -> Var {
        let normed = if pass.train {
            let n = tape.value(x).nrows();
            let (out, mean, var) = tape.batch_norm(x, BN_EPS);
            pass.bn_batches.push((self.slot, mean, var, n));
            out
        } else {
            let rs = &pass.buffers[self.slot];
            tape.norm_const(x, &rs.mean, &rs.var, BN_EPS)
        };
        let g = tape.param(pass.store, self.gamma);
        let b = tape.param(pass.store, self.beta);
        let scaled = tape.mul_row(normed, g);
        tape.add_row(scaled, b)
    }
}

/// Inverted dropout; identity outside training or at rate 0.
pub fn dropout(tape: &mut Tape, pass: &mut Pass, x: Var) -> Var {
    if !pass.train || pass.dropout <= 0.0 {
        return x;
    }
    let (r, c) = tape.value(x).dim();
    let keep = pass.keep_mask(r, c);
    let rate = pass.dropout;
    tape.dropout(x, keep, rate)
}
