//! Stage 1: heterogeneous dot-product graph attention autoencoder over
//! residue graphs, trained with standard and masked feature reconstruction.
//!
//! Layer recipe, shared by encoder and decoder:
//! `het_layer` (sum over the three edge relations of a multi-head GAT) then
//! `FC -> ReLU -> BN -> Dropout`. Hidden layers concatenate attention heads,
//! the last layer of each stack averages them. Masking replaces sampled rows
//! of the raw 7-dim features by a learnable mask vector before the input
//! projection; the masked pass reuses every encoder and decoder parameter.

use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data_model::FEATURE_DIM;
use crate::error::{Error, Result};
use crate::graph_builder::{EdgeList, EdgeType, ProteinStructureGraph};
use crate::nn::{
    dropout, losses, BatchNorm, HeadCombine, Linear, ParamId, ParamStore, Pass, RunningStats, Tape, Var,
};
use crate::rng::{rng_from, tag, Rng};

/// Norm stabilizer of the cosine reconstruction loss.
pub const COSINE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub heads: usize,
    /// Width of each attention head.
    pub head_dim: usize,
    pub layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: 128,
            heads: 5,
            head_dim: 128,
            layers: 4,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::InvalidParameter("encoder needs at least 1 layer".into()));
        }
        if self.hidden == 0 || self.heads == 0 || self.head_dim == 0 {
            return Err(Error::InvalidParameter("encoder widths and head count must be positive".into()));
        }
        Ok(())
    }
}

/// The four projections of one edge relation's attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatParams {
    /// Query projection.
    pub query: Linear,
    /// Key used in the numerator.
    pub key: Linear,
    /// Key used in the normalizer.
    pub key_norm: Linear,
    /// Value projection.
    pub value: Linear,
    pub heads: usize,
    pub head_dim: usize,
    pub combine: HeadCombine,
}

impl GatParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        heads: usize,
        head_dim: usize,
        combine: HeadCombine,
        rng: &mut Rng,
    ) -> Self {
        let width = heads * head_dim;
        let query = Linear::new(store, &format!("{name}.w1"), input, width, false, rng);
        let key = Linear::new(store, &format!("{name}.w2"), input, width, false, rng);
        // The normalizer key starts equal to the numerator key, so initial
        // attention rows are proper softmaxes; training moves them apart.
        let key_norm = Linear::new(store, &format!("{name}.w3"), input, width, false, rng);
        let w2 = store.value(key.weight).clone();
        *store.value_mut(key_norm.weight) = w2;
        GatParams {
            query,
            key,
            key_norm,
            value: Linear::new(store, &format!("{name}.wg"), input, width, false, rng),
            heads,
            head_dim,
            combine,
        }
    }

    pub fn output_width(&self) -> usize {
        match self.combine {
            HeadCombine::Concat => self.heads * self.head_dim,
            HeadCombine::Mean => self.head_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, edges: &EdgeList, x: Var) -> Var {
        let q = self.query.forward(tape, store, x);
        // Logits are scaled by 1/sqrt(head_dim).
        let q = tape.scale(q, (self.head_dim as f64).sqrt().recip());
        let k2 = self.key.forward(tape, store, x);
        let k3 = self.key_norm.forward(tape, store, x);
        let v = self.value.forward(tape, store, x);
        tape.gat(q, k2, k3, v, edges, self.heads, self.head_dim, self.combine)
    }
}

/// One attention block per residue relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HetLayer {
    pub sequential: GatParams,
    pub radial: GatParams,
    pub knn: GatParams,
}

impl HetLayer {
    pub fn for_type(&self, ty: EdgeType) -> &GatParams {
        match ty {
            EdgeType::Sequential => &self.sequential,
            EdgeType::Radial => &self.radial,
            EdgeType::Knn => &self.knn,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, graph: &ProteinStructureGraph, x: Var) -> Var {
        let mut acc: Option<Var> = None;
        for ty in EdgeType::ALL {
            let out = self.for_type(ty).forward(tape, store, graph.edges(ty), x);
            acc = Some(match acc {
                Some(a) => tape.add(a, out),
                None => out,
            });
        }
        acc.expect("three relations")
    }
}

/// `Dropout(BN(ReLU(FC(x))))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseBlock {
    pub fc: Linear,
    pub bn: BatchNorm,
}

impl DenseBlock {
    pub fn forward(&self, tape: &mut Tape, pass: &mut Pass, x: Var) -> Var {
        let y = self.fc.forward(tape, pass.store, x);
        let y = tape.relu(y);
        let y = self.bn.forward(tape, pass, y);
        dropout(tape, pass, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackLayer {
    pub het: HetLayer,
    pub block: DenseBlock,
}

impl StackLayer {
    pub fn forward(&self, tape: &mut Tape, pass: &mut Pass, graph: &ProteinStructureGraph, x: Var) -> Var {
        let h = self.het.forward(tape, pass.store, graph, x);
        self.block.forward(tape, pass, h)
    }
}

/// Which reconstruction objectives a stage-1 step optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructionTerms {
    pub standard: bool,
    pub masked: bool,
}

impl Default for ReconstructionTerms {
    fn default() -> Self {
        ReconstructionTerms {
            standard: true,
            masked: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub rate: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub fn masked_count(&self, rows: usize) -> usize {
        ((self.rate * rows as f64).round() as usize).min(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1LossWeights {
    pub gamma_str: f64,
    /// Applied as optimizer weight decay.
    pub lambda_str: f64,
    pub delta: f64,
}

impl Default for Stage1LossWeights {
    fn default() -> Self {
        Stage1LossWeights {
            gamma_str: 0.5,
            lambda_str: 1e-4,
            delta: 1.5,
        }
    }
}

/// Complete stage-1 model: input projection, encoder and decoder stacks,
/// output projection and mask vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueAutoencoder {
    pub config: EncoderConfig,
    pub store: ParamStore,
    pub buffers: Vec<RunningStats>,
    pub project_in: Linear,
    pub encoder: Vec<StackLayer>,
    pub decoder: Vec<StackLayer>,
    pub project_out: Linear,
    pub mask_token: ParamId,
}

fn build_stack(
    store: &mut ParamStore,
    buffers: &mut Vec<RunningStats>,
    cfg: &EncoderConfig,
    name: &str,
    rng: &mut Rng,
) -> Vec<StackLayer> {
    (0..cfg.layers)
        .map(|l| {
            let combine = if l + 1 == cfg.layers {
                HeadCombine::Mean
            } else {
                HeadCombine::Concat
            };
            let mk = |store: &mut ParamStore, rel: &str, rng: &mut Rng| {
                GatParams::new(store, &format!("{name}.{l}.{rel}"), cfg.hidden, cfg.heads, cfg.head_dim, combine, rng)
            };
            let het = HetLayer {
                sequential: mk(store, "seq", rng),
                radial: mk(store, "rad", rng),
                knn: mk(store, "knn", rng),
            };
            let width = het.sequential.output_width();
            let fc = Linear::new(store, &format!("{name}.{l}.fc"), width, cfg.hidden, true, rng);
            let bn = BatchNorm::new(store, buffers, &format!("{name}.{l}.bn"), cfg.hidden);
            StackLayer {
                het,
                block: DenseBlock { fc, bn },
            }
        })
        .collect()
}

impl ResidueAutoencoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(seed, &[tag::INIT, 1]);
        let mut store = ParamStore::new();
        let mut buffers = Vec::new();
        let project_in = Linear::new(&mut store, "project_in", FEATURE_DIM, config.hidden, true, &mut rng);
        let encoder = build_stack(&mut store, &mut buffers, &config, "encoder", &mut rng);
        let decoder = build_stack(&mut store, &mut buffers, &config, "decoder", &mut rng);
        let project_out = Linear::new(&mut store, "project_out", config.hidden, FEATURE_DIM, true, &mut rng);
        let mask_token = store.add("mask_token", Array2::zeros((1, FEATURE_DIM)));
        Ok(ResidueAutoencoder {
            config,
            store,
            buffers,
            project_in,
            encoder,
            decoder,
            project_out,
            mask_token,
        })
    }

    pub fn mask_vector(&self) -> Array1<f64> {
        self.store.value(self.mask_token).row(0).to_owned()
    }

    /// Encoder stack on already projected features.
    pub fn encode_tape(&self, tape: &mut Tape, pass: &mut Pass, graph: &ProteinStructureGraph, xf: Var) -> Var {
        self.encoder.iter().fold(xf, |x, layer| layer.forward(tape, pass, graph, x))
    }

    /// Decoder stack followed by the output projection.
    pub fn decode_tape(&self, tape: &mut Tape, pass: &mut Pass, graph: &ProteinStructureGraph, xe: Var) -> Var {
        let xd = self.decoder.iter().fold(xe, |x, layer| layer.forward(tape, pass, graph, x));
        self.project_out.forward(tape, pass.store, xd)
    }

    /// Project raw features, encode, decode. Returns `(X_E, X_hat)`.
    pub fn reconstruct_tape(
        &self,
        tape: &mut Tape,
        pass: &mut Pass,
        graph: &ProteinStructureGraph,
        x: Var,
    ) -> (Var, Var) {
        let xf = self.project_in.forward(tape, pass.store, x);
        let xe = self.encode_tape(tape, pass, graph, xf);
        let xhat = self.decode_tape(tape, pass, graph, xe);
        (xe, xhat)
    }

    /// Stage-1 objective on one (possibly batched) graph whose features are
    /// already standardized. Returns the total loss and its components.
    pub fn objective(
        &self,
        tape: &mut Tape,
        pass: &mut Pass,
        graph: &ProteinStructureGraph,
        terms: ReconstructionTerms,
        weights: &Stage1LossWeights,
        mask: &MaskSpec,
    ) -> Result<Stage1Objective> {
        if !terms.standard && !terms.masked {
            return Err(Error::InvalidParameter("stage-1 objective needs at least one term".into()));
        }
        let target = graph.features.values().clone();
        let x = tape.leaf(target.clone());
        let mut total: Option<Var> = None;
        let mut l_re = None;
        let mut l_msre = None;
        if terms.standard {
            let (_, xhat) = self.reconstruct_tape(tape, pass, graph, x);
            let l = tape.mse_rows(xhat, &target);
            l_re = Some(tape.scalar_value(l));
            total = Some(l);
        }
        if terms.masked {
            let rows = sample_mask_rows(target.nrows(), mask);
            let token = tape.param(pass.store, self.mask_token);
            let xms = tape.replace_rows(x, token, &rows);
            let (_, xhat_ms) = self.reconstruct_tape(tape, pass, graph, xms);
            let l = tape.cosine_pow(xhat_ms, &target, weights.delta, COSINE_EPS);
            l_msre = Some(tape.scalar_value(l));
            let weighted = tape.scale(l, weights.gamma_str);
            total = Some(match total {
                Some(t) => tape.add(t, weighted),
                None => weighted,
            });
        }
        let total = total.expect("at least one term");
        Ok(Stage1Objective {
            total,
            l_re,
            l_msre,
        })
    }

    /// Eval-mode residue embeddings `X_E` for one protein.
    pub fn embed(&self, graph: &ProteinStructureGraph) -> Array2<f64> {
        let mut tape = Tape::new();
        let mut pass = Pass::eval(&self.store, &self.buffers);
        let x = tape.leaf(graph.features.values().clone());
        let xf = self.project_in.forward(&mut tape, &self.store, x);
        let xe = self.encode_tape(&mut tape, &mut pass, graph, xf);
        tape.value(xe).clone()
    }

    /// Eval-mode reconstruction `X_hat` for one protein.
    pub fn reconstruct(&self, graph: &ProteinStructureGraph) -> Array2<f64> {
        let mut tape = Tape::new();
        let mut pass = Pass::eval(&self.store, &self.buffers);
        let x = tape.leaf(graph.features.values().clone());
        let (_, xhat) = self.reconstruct_tape(&mut tape, &mut pass, graph, x);
        tape.value(xhat).clone()
    }

    /// Pooled protein representation (mean of eval-mode embeddings).
    pub fn pooled(&self, graph: &ProteinStructureGraph) -> Array1<f64> {
        pool_protein(&self.embed(graph))
    }
}

/// Loss handles produced by [`ResidueAutoencoder::objective`].
#[derive(Debug, Clone, Copy)]
pub struct Stage1Objective {
    pub total: Var,
    pub l_re: Option<f64>,
    pub l_msre: Option<f64>,
}

fn sample_mask_rows(m: usize, spec: &MaskSpec) -> Vec<usize> {
    let count = spec.masked_count(m);
    let mut rng = rng_from(spec.seed, &[tag::MASK]);
    let mut rows = sample(&mut rng, m, count).into_vec();
    rows.sort_unstable();
    rows
}

/// Affine input projection `X W + b`.
pub fn project_in(x: &Array2<f64>, weight: &Array2<f64>, bias: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != weight.nrows() || bias.dim() != (1, weight.ncols()) {
        return Err(Error::Shape(format!(
            "cannot project {:?} with weight {:?} and bias {:?}",
            x.dim(),
            weight.dim(),
            bias.dim()
        )));
    }
    Ok(x.dot(weight) + bias)
}

/// One relation's dot-product attention on plain arrays.
pub fn gat_layer(store: &ParamStore, params: &GatParams, edges: &EdgeList, x: &Array2<f64>) -> Result<Array2<f64>> {
    edges.validate(x.nrows())?;
    if x.ncols() != params.query.input {
        return Err(Error::Shape(format!("gat input width {} != {}", x.ncols(), params.query.input)));
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = params.forward(&mut tape, store, edges, xv);
    Ok(tape.value(out).clone())
}

/// Sum of the three relation-specific attention outputs.
pub fn het_layer(store: &ParamStore, layer: &HetLayer, graph: &ProteinStructureGraph, x: &Array2<f64>) -> Result<Array2<f64>> {
    for ty in EdgeType::ALL {
        graph.edges(ty).validate(x.nrows())?;
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = layer.forward(&mut tape, store, graph, xv);
    Ok(tape.value(out).clone())
}

/// `Dropout(BN(ReLU(FC(x))))` on plain arrays. In training mode batch-norm
/// uses batch statistics and dropout masks come from `seed`.
pub fn encoder_block(
    store: &ParamStore,
    buffers: &[RunningStats],
    block: &DenseBlock,
    x: &Array2<f64>,
    dropout_rate: f64,
    training: bool,
    seed: u64,
) -> Array2<f64> {
    let mut tape = Tape::new();
    let mut pass = if training {
        Pass::train(store, buffers, dropout_rate, rng_from(seed, &[tag::DROPOUT]))
    } else {
        Pass::eval(store, buffers)
    };
    let xv = tape.leaf(x.clone());
    let out = block.forward(&mut tape, &mut pass, xv);
    tape.value(out).clone()
}

/// `(1/M) sum_i ||x_i - x_hat_i||^2`.
pub fn loss_re(x: &Array2<f64>, x_hat: &Array2<f64>) -> Result<f64> {
    if x.dim() != x_hat.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", x.dim(), x_hat.dim())));
    }
    Ok(losses::reconstruction_loss(x_hat, x))
}

/// Replace `round(rate * M)` sampled rows by `mask_vector`. Returns the
/// masked matrix and the sorted masked row indices.
pub fn apply_mask(x: &Array2<f64>, spec: &MaskSpec, mask_vector: &Array1<f64>) -> Result<(Array2<f64>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&spec.rate) {
        return Err(Error::InvalidParameter(format!("mask rate {} outside [0, 1]", spec.rate)));
    }
    if mask_vector.len() != x.ncols() {
        return Err(Error::Shape("mask vector width differs from features".into()));
    }
    let rows = sample_mask_rows(x.nrows(), spec);
    let mut out = x.clone();
    for &r in &rows {
        out.row_mut(r).assign(mask_vector);
    }
    Ok((out, rows))
}

/// `(1/M) sum_i (1 - cos(x_i, x_hat_i))^delta`.
pub fn loss_msre(x: &Array2<f64>, x_hat: &Array2<f64>, delta: f64) -> Result<f64> {
    if x.dim() != x_hat.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", x.dim(), x_hat.dim())));
    }
    Ok(losses::scaled_cosine_loss(x, x_hat, delta, COSINE_EPS))
}

/// `L_RE + gamma_str * L_MSRE`; the norm penalty lives in the optimizer.
pub fn stage1_loss(l_re: f64, l_msre: f64, weights: &Stage1LossWeights) -> f64 {
    l_re + weights.gamma_str * l_msre
}

/// Column-wise mean over residues.
pub fn pool_protein(x_e: &Array2<f64>) -> Array1<f64> {
    x_e.mean_axis(Axis(0)).expect("at least one residue")
}
