//! Stage 2: GIN encoder over the protein interaction graph, sum/product pair
//! fusion and the per-class binary cross-entropy classifier.
//!
//! A GIN layer computes `(1 + eps) h_i + sum_{j -> i} h_j` and feeds it to
//! `FC -> ReLU -> FC -> ReLU -> BN -> Dropout`. Pair logits come from
//! `FC([h_a + h_b, h_a * h_b])` on the projected embeddings.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data_model::NUM_INTERACTION_TYPES;
use crate::error::{Error, Result};
use crate::graph_builder::EdgeList;
use crate::nn::{dropout, losses, BatchNorm, Linear, ParamId, ParamStore, Pass, RunningStats, Tape, Var};
use crate::rng::{rng_from, tag, Rng};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractionConfig {
    pub hidden: usize,
    pub layers: usize,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        InteractionConfig { hidden: 1024, layers: 3 }
    }
}

impl InteractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 {
            return Err(Error::InvalidParameter("GIN needs at least one layer of positive width".into()));
        }
        Ok(())
    }
}

/// One GIN layer: learnable self weight plus a two-layer MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GinLayer {
    /// 1 x 1 learnable epsilon.
    pub eps: ParamId,
    pub fc1: Linear,
    pub fc2: Linear,
    pub bn: BatchNorm,
}

impl GinLayer {
    pub fn new(
        store: &mut ParamStore,
        buffers: &mut Vec<RunningStats>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        GinLayer {
            eps: store.add(format!("{name}.eps"), Array2::zeros((1, 1))),
            fc1: Linear::new(store, &format!("{name}.fc1"), input, hidden, true, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, hidden, true, rng),
            bn: BatchNorm::new(store, buffers, &format!("{name}.bn"), hidden),
        }
    }

    /// `(1 + eps) h_i + sum_{j -> i} h_j`.
    pub fn aggregate(&self, tape: &mut Tape, store: &ParamStore, edges: &EdgeList, x: Var) -> Var {
        let eps = tape.param(store, self.eps);
        let own = tape.self_scale(x, eps);
        let nb = tape.neighbor_sum(x, edges);
        tape.add(own, nb)
    }

    pub fn mlp(&self, tape: &mut Tape, pass: &mut Pass, x: Var) -> Var {
        let y = self.fc1.forward(tape, pass.store, x);
        let y = tape.relu(y);
        let y = self.fc2.forward(tape, pass.store, y);
        let y = tape.relu(y);
        let y = self.bn.forward(tape, pass, y);
        dropout(tape, pass, y)
    }

    pub fn forward(&self, tape: &mut Tape, pass: &mut Pass, edges: &EdgeList, x: Var) -> Var {
        let agg = self.aggregate(tape, pass.store, edges, x);
        self.mlp(tape, pass, agg)
    }
}

/// Embedding projection (`FC -> ReLU -> Dropout`) and the pair classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairHead {
    pub project: Linear,
    pub classifier: Linear,
}

impl PairHead {
    pub fn project(&self, tape: &mut Tape, pass: &mut Pass, h: Var) -> Var {
        let y = self.project.forward(tape, pass.store, h);
        let y = tape.relu(y);
        dropout(tape, pass, y)
    }

    /// Logits for each `(a, b)` in `pairs`, one row per pair.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, hhat: Var, pairs: &[(usize, usize)]) -> Var {
        let (ia, ib): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let ha = tape.gather_rows(hhat, &ia);
        let hb = tape.gather_rows(hhat, &ib);
        let sum = tape.add(ha, hb);
        let prod = tape.mul(ha, hb);
        let fused = tape.concat_cols(sum, prod);
        self.classifier.forward(tape, store, fused)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionModel {
    pub config: InteractionConfig,
    pub input_dim: usize,
    pub store: ParamStore,
    pub buffers: Vec<RunningStats>,
    pub layers: Vec<GinLayer>,
    pub head: PairHead,
}

/// Handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Stage2Forward {
    /// GIN output, one row per protein.
    pub h_e: Var,
    pub logits: Var,
}

impl InteractionModel {
    pub fn new(config: InteractionConfig, input_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidParameter("protein features must have positive width".into()));
        }
        let mut rng = rng_from(seed, &[tag::INIT, 2]);
        let mut store = ParamStore::new();
        let mut buffers = Vec::new();
        let layers = (0..config.layers)
            .map(|l| {
                let input = if l == 0 { input_dim } else { config.hidden };
                GinLayer::new(&mut store, &mut buffers, &format!("gin.{l}"), input, config.hidden, &mut rng)
            })
            .collect();
        let h = config.hidden;
        let head = PairHead {
            project: Linear::new(&mut store, "head.project", h, h, true, &mut rng),
            classifier: Linear::new(&mut store, "head.classifier", 2 * h, NUM_INTERACTION_TYPES, true, &mut rng),
        };
        Ok(InteractionModel {
            config,
            input_dim,
            store,
            buffers,
            layers,
            head,
        })
    }

    /// Stacked GIN layers.
    pub fn encode_tape(&self, tape: &mut Tape, pass: &mut Pass, edges: &EdgeList, x: Var) -> Var {
        self.layers.iter().fold(x, |h, layer| layer.forward(tape, pass, edges, h))
    }

    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        pass: &mut Pass,
        edges: &EdgeList,
        x: Var,
        pairs: &[(usize, usize)],
    ) -> Stage2Forward {
        let h_e = self.encode_tape(tape, pass, edges, x);
        let hhat = self.head.project(tape, pass, h_e);
        let logits = self.head.logits(tape, pass.store, hhat, pairs);
        Stage2Forward { h_e, logits }
    }

    fn check_input(&self, x: &Array2<f64>, edges: &EdgeList) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::Shape(format!(
                "protein features have width {}, model expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        edges.validate(x.nrows())
    }

    /// Eval-mode GIN embeddings.
    pub fn encode(&self, x: &Array2<f64>, edges: &EdgeList) -> Result<Array2<f64>> {
        self.check_input(x, edges)?;
        let mut tape = Tape::new();
        let mut pass = Pass::eval(&self.store, &self.buffers);
        let xv = tape.leaf(x.clone());
        let h = self.encode_tape(&mut tape, &mut pass, edges, xv);
        Ok(tape.value(h).clone())
    }

    /// Eval-mode logits for `pairs`.
    pub fn logits(&self, x: &Array2<f64>, edges: &EdgeList, pairs: &[(usize, usize)]) -> Result<Array2<f64>> {
        self.check_input(x, edges)?;
        if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= x.nrows() || b >= x.nrows()) {
            return Err(Error::Shape(format!("pair ({a}, {b}) out of range")));
        }
        let mut tape = Tape::new();
        let mut pass = Pass::eval(&self.store, &self.buffers);
        let xv = tape.leaf(x.clone());
        let out = self.forward_tape(&mut tape, &mut pass, edges, xv, pairs);
        Ok(tape.value(out.logits).clone())
    }
}

/// Pre-MLP GIN aggregation on plain arrays.
pub fn gin_aggregate(x: &Array2<f64>, edges: &EdgeList, eps: f64) -> Result<Array2<f64>> {
    edges.validate(x.nrows())?;
    let mut out = x * (1.0 + eps);
    for (s, t) in edges.iter() {
        let row = x.row(s).to_owned();
        let mut dst = out.row_mut(t);
        dst += &row;
    }
    Ok(out)
}

fn pass_for<'a>(store: &'a ParamStore, buffers: &'a [RunningStats], rate: f64, training: bool, seed: u64) -> Pass<'a> {
    if training {
        Pass::train(store, buffers, rate, rng_from(seed, &[tag::DROPOUT]))
    } else {
        Pass::eval(store, buffers)
    }
}

/// One GIN layer on plain arrays.
pub fn gin_layer(
    model: &InteractionModel,
    layer: usize,
    edges: &EdgeList,
    x: &Array2<f64>,
    dropout_rate: f64,
    training: bool,
    seed: u64,
) -> Result<Array2<f64>> {
    let l = model
        .layers
        .get(layer)
        .ok_or_else(|| Error::InvalidParameter(format!("no GIN layer {layer}")))?;
    edges.validate(x.nrows())?;
    if x.ncols() != l.fc1.input {
        return Err(Error::Shape(format!("GIN layer {layer} expects width {}", l.fc1.input)));
    }
    let mut tape = Tape::new();
    let mut pass = pass_for(&model.store, &model.buffers, dropout_rate, training, seed);
    let xv = tape.leaf(x.clone());
    let out = l.forward(&mut tape, &mut pass, edges, xv);
    Ok(tape.value(out).clone())
}

/// All GIN layers in eval mode.
pub fn encode_proteins(model: &InteractionModel, x: &Array2<f64>, edges: &EdgeList) -> Result<Array2<f64>> {
    model.encode(x, edges)
}

/// `Dropout(ReLU(FC(H_E)))`.
pub fn project_head(
    model: &InteractionModel,
    h_e: &Array2<f64>,
    dropout_rate: f64,
    training: bool,
    seed: u64,
) -> Result<Array2<f64>> {
    if h_e.ncols() != model.head.project.input {
        return Err(Error::Shape(format!("projection expects width {}", model.head.project.input)));
    }
    let mut tape = Tape::new();
    let mut pass = pass_for(&model.store, &model.buffers, dropout_rate, training, seed);
    let hv = tape.leaf(h_e.clone());
    let out = model.head.project(&mut tape, &mut pass, hv);
    Ok(tape.value(out).clone())
}

/// Classifier logits `FC([h_i + h_j, h_i * h_j])` for one pair.
pub fn fuse_pair(store: &ParamStore, head: &PairHead, h_i: &Array1<f64>, h_j: &Array1<f64>) -> Result<Array1<f64>> {
    if h_i.len() != h_j.len() || 2 * h_i.len() != head.classifier.input {
        return Err(Error::Shape(format!(
            "pair widths {} and {} do not fit a classifier over {}",
            h_i.len(),
            h_j.len(),
            head.classifier.input
        )));
    }
    let fused = ndarray::concatenate(Axis(0), &[(h_i + h_j).view(), (h_i * h_j).view()]).expect("1-d");
    let mut out = fused.dot(store.value(head.classifier.weight));
    if let Some(b) = head.classifier.bias {
        out += &store.value(b).row(0);
    }
    Ok(out)
}

/// Mean over pairs of summed per-class binary cross-entropy.
pub fn loss_in(logits: &Array2<f64>, labels: &Array2<f64>) -> Result<f64> {
    if logits.dim() != labels.dim() {
        return Err(Error::Shape(format!("logits {:?} vs labels {:?}", logits.dim(), labels.dim())));
    }
    if logits.nrows() == 0 {
        return Err(Error::Shape("loss over zero pairs".into()));
    }
    Ok(losses::multilabel_bce(logits, labels))
}

pub fn probabilities(logits: &Array2<f64>) -> Array2<f64> {
    logits.mapv(losses::sigmoid)
}

/// 1.0 where `sigmoid(logit) >= threshold`, else 0.0.
pub fn predict(logits: &Array2<f64>, threshold: f64) -> Result<Array2<f64>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside (0, 1)")));
    }
    Ok(logits.mapv(|z| if losses::sigmoid(z) >= threshold { 1.0 } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng as _;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from(seed, &[77]);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn small(input: usize, layers: usize, seed: u64) -> InteractionModel {
        InteractionModel::new(InteractionConfig { hidden: 6, layers }, input, seed).unwrap()
    }

    fn path() -> EdgeList {
        EdgeList::from_pairs([(0, 1), (1, 0), (1, 2), (2, 1)])
    }

    #[test]
    fn aggregate_path_and_isolated() {
        let x = array![[1.0, 0.0], [0.0, 10.0], [100.0, 0.0]];
        let agg = gin_aggregate(&x, &path(), 0.0).unwrap();
        assert_eq!(agg.row(1).to_vec(), vec![101.0, 10.0]);
        let lone = gin_aggregate(&x, &EdgeList::default(), 1.0).unwrap();
        assert_eq!(lone, &x * 2.0);
    }

    fn relu(v: f64) -> f64 {
        v.max(0.0)
    }

    /// Direct scalar loop of one eval-mode layer.
    fn layer_oracle(model: &InteractionModel, l: usize, x: &Array2<f64>, edges: &[(usize, usize)]) -> Array2<f64> {
        let layer = &model.layers[l];
        let s = &model.store;
        let eps = s.value(layer.eps)[[0, 0]];
        let (n, d) = x.dim();
        let mut agg = vec![vec![0.0; d]; n];
        for i in 0..n {
            for k in 0..d {
                agg[i][k] = (1.0 + eps) * x[[i, k]];
            }
        }
        for &(src, dst) in edges {
            for k in 0..d {
                agg[dst][k] += x[[src, k]];
            }
        }
        let dense = |lin: &Linear, v: &[f64]| -> Vec<f64> {
            let w = s.value(lin.weight);
            let b = s.value(lin.bias.unwrap());
            (0..lin.output)
                .map(|o| b[[0, o]] + (0..lin.input).map(|k| v[k] * w[[k, o]]).sum::<f64>())
                .collect()
        };
        let rs = &model.buffers[layer.bn.slot];
        let g = s.value(layer.bn.gamma);
        let bt = s.value(layer.bn.beta);
        let h = layer.fc2.output;
        let mut out = Array2::zeros((n, h));
        for i in 0..n {
            let a: Vec<f64> = dense(&layer.fc1, &agg[i]).into_iter().map(relu).collect();
            let b: Vec<f64> = dense(&layer.fc2, &a).into_iter().map(relu).collect();
            for k in 0..h {
                out[[i, k]] = g[[0, k]] * (b[k] - rs.mean[k]) / (rs.var[k] + 1e-5).sqrt() + bt[[0, k]];
            }
        }
        out
    }

    #[test]
    fn layer_matches_loop_oracle() {
        let mut model = small(3, 1, 4);
        model.store.value_mut(model.layers[0].eps)[[0, 0]] = 0.3;
        model.buffers[0].mean.mapv_inplace(|_| 0.2);
        model.buffers[0].var.mapv_inplace(|_| 1.7);
        let x = random(4, 3, 1);
        let pairs = [(0, 1), (1, 0), (2, 3), (3, 2), (0, 3), (3, 0)];
        let edges = EdgeList::from_pairs(pairs);
        let got = gin_layer(&model, 0, &edges, &x, 0.0, false, 0).unwrap();
        let want = layer_oracle(&model, 0, &x, &pairs);
        assert!((&got - &want).iter().all(|d| d.abs() < 1e-9));
        // one-layer encode is that layer
        assert_eq!(encode_proteins(&model, &x, &edges).unwrap(), got);
    }

    #[test]
    fn edge_order_irrelevant() {
        let model = small(3, 2, 5);
        let x = random(5, 3, 2);
        let pairs = vec![(0, 1), (1, 0), (1, 2), (2, 1), (3, 4), (4, 3), (0, 4), (4, 0)];
        let mut shuffled = pairs.clone();
        shuffled.reverse();
        shuffled.swap(1, 5);
        let a = model.encode(&x, &EdgeList::from_pairs(pairs)).unwrap();
        let b = model.encode(&x, &EdgeList::from_pairs(shuffled)).unwrap();
        assert!((&a - &b).iter().all(|d| d.abs() < 1e-6));
    }

    #[test]
    fn permutation_equivariance() {
        let model = small(2, 3, 6);
        let x = random(3, 2, 3);
        let a = model.encode(&x, &path()).unwrap();
        // relabel 0 <-> 2
        let perm = [2, 1, 0];
        let xp = x.select(Axis(0), &perm);
        let ep = EdgeList::from_pairs(path().iter().map(|(s, t)| (perm[s], perm[t])));
        let b = model.encode(&xp, &ep).unwrap();
        for i in 0..3 {
            let d = &a.row(perm[i]) - &b.row(i);
            assert!(d.iter().all(|v| v.abs() < 1e-12));
        }
        assert_eq!(a, model.encode(&x, &path()).unwrap());
    }

    #[test]
    fn projection_modes() {
        let model = small(2, 1, 7);
        let h = random(4, 6, 9);
        let zeroed = project_head(&model, &h, 1.0, true, 3).unwrap();
        assert!(zeroed.iter().all(|&v| v == 0.0));
        let e1 = project_head(&model, &h, 0.5, false, 3).unwrap();
        let e2 = project_head(&model, &h, 0.5, false, 4).unwrap();
        assert_eq!(e1, e2);
        let w = model.store.value(model.head.project.weight);
        let b = model.store.value(model.head.project.bias.unwrap());
        for i in 0..4 {
            for o in 0..6 {
                let z: f64 = b[[0, o]] + (0..6).map(|k| h[[i, k]] * w[[k, o]]).sum::<f64>();
                assert!((e1[[i, o]] - relu(z)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fuse_pair_cases() {
        let model = small(2, 1, 8);
        let zero = Array1::zeros(6);
        let bias = model.store.value(model.head.classifier.bias.unwrap()).row(0).to_owned();
        assert_eq!(fuse_pair(&model.store, &model.head, &zero, &zero).unwrap(), bias);

        let a = random(1, 6, 10).row(0).to_owned();
        let b = random(1, 6, 11).row(0).to_owned();
        let ab = fuse_pair(&model.store, &model.head, &a, &b).unwrap();
        let ba = fuse_pair(&model.store, &model.head, &b, &a).unwrap();
        assert_eq!(ab, ba);

        let w = model.store.value(model.head.classifier.weight);
        for c in 0..7 {
            let mut z = bias[c];
            for k in 0..6 {
                z += (a[k] + b[k]) * w[[k, c]] + (a[k] * b[k]) * w[[6 + k, c]];
            }
            assert!((ab[c] - z).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_logits_match_single_pair_fusion() {
        let model = small(3, 2, 12);
        let x = random(4, 3, 13);
        let edges = EdgeList::from_pairs([(0, 1), (1, 0), (2, 3), (3, 2)]);
        let pairs = [(0, 1), (3, 2), (1, 3)];
        let logits = model.logits(&x, &edges, &pairs).unwrap();
        let hhat = project_head(&model, &model.encode(&x, &edges).unwrap(), 0.0, false, 0).unwrap();
        for (p, &(a, b)) in pairs.iter().enumerate() {
            let single = fuse_pair(&model.store, &model.head, &hhat.row(a).to_owned(), &hhat.row(b).to_owned()).unwrap();
            assert!((&logits.row(p) - &single).iter().all(|d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn loss_in_cases() {
        let y = array![[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]];
        let z = y.mapv(|v| if v > 0.5 { 20.0 } else { -20.0 });
        assert!(loss_in(&z, &y).unwrap() < 1e-7);
        let half = Array2::zeros((2, 7));
        let l = loss_in(&half, &Array2::ones((2, 7))).unwrap();
        assert!((l - 7.0 * 2f64.ln()).abs() < 1e-12);

        let z = random(3, 7, 20) * 4.0;
        let y = random(3, 7, 21).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let mut direct = 0.0;
        for p in 0..3 {
            for c in 0..7 {
                let s = 1.0 / (1.0 + (-z[[p, c]]).exp());
                direct -= y[[p, c]] * s.ln() + (1.0 - y[[p, c]]) * (1.0 - s).ln();
            }
        }
        assert!((loss_in(&z, &y).unwrap() - direct / 3.0).abs() < 1e-9);
    }

    #[test]
    fn prediction_rule() {
        let zero = Array2::zeros((1, 7));
        assert!(predict(&zero, DEFAULT_THRESHOLD).unwrap().iter().all(|&v| v == 1.0));
        let neg = Array2::from_elem((2, 7), -30.0);
        assert!(predict(&neg, 0.5).unwrap().iter().all(|&v| v == 0.0));
        let moderate = Array2::from_elem((2, 7), 2.0);
        assert!(predict(&moderate, 0.999).unwrap().iter().all(|&v| v == 0.0));
        assert!(predict(&zero, 1.0).is_err());
    }
}
