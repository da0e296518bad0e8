use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::{micro_f1, MetricsReport};
use crate::contrastive::{make_view, View};
use crate::error::{Error, Result};
use crate::graph_builder::{EdgeList, ProteinInteractionGraph};
use crate::interaction_model::{predict, probabilities, InteractionModel};
use crate::nn::{apply_bn_batches, Adam, Pass, Tape, Var};
use crate::rng::{derive_seed, rng_from, tag};
use crate::splitter::{classify_subsets, SplitSpec, SubsetTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2Row {
    pub epoch: usize,
    pub total: f64,
    pub l_in: f64,
    pub l_con_alpha: Option<f64>,
    pub l_con_beta: Option<f64>,
    pub train_f1: f64,
    pub val_f1: f64,
}

/// What a contrastive view did in one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewProvenance {
    pub epoch: usize,
    pub view: View,
    pub seed: u64,
    pub node_rho: f64,
    pub edge_rho: f64,
    pub zeroed: usize,
    pub rewired: usize,
}

#[derive(Debug, Clone)]
pub struct Stage2Output {
    /// Parameters at the epoch with the best validation micro-F1.
    pub best: InteractionModel,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub last: InteractionModel,
    pub log: Vec<Stage2Row>,
    pub provenance: Vec<ViewProvenance>,
}

/// Message-passing edges: both directions of every training pair.
pub fn training_edges(graph: &ProteinInteractionGraph, split: &SplitSpec) -> EdgeList {
    graph.topology.edges_for(&split.train_idx)
}

fn pairs_of(graph: &ProteinInteractionGraph, idx: &[usize]) -> Vec<(usize, usize)> {
    idx.iter().map(|&p| graph.topology.pairs[p]).collect()
}

fn eval_f1(model: &InteractionModel, graph: &ProteinInteractionGraph, edges: &EdgeList, idx: &[usize], threshold: f64) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let logits = model.logits(&graph.node_features, edges, &pairs_of(graph, idx))?;
    micro_f1(&predict(&logits, threshold)?, &graph.topology.labels.select(idx))
}

/// Full-graph training of the GIN classifier, optionally with two perturbed
/// contrastive views. Keeps the parameters of the best validation epoch
/// (the earliest one on ties).
pub fn train_stage2(graph: &ProteinInteractionGraph, split: &SplitSpec, cfg: &RunConfig) -> Result<Stage2Output> {
    cfg.validate()?;
    split.validate(graph.topology.pair_count())?;
    if split.train_idx.is_empty() {
        return Err(Error::Split("no training pairs".into()));
    }
    let s2 = &cfg.stage2;
    let exec = cfg.exec();
    let x = &graph.node_features;
    let mut model = InteractionModel::new(s2.model.clone(), x.ncols(), cfg.seed)?;
    let mut opt = Adam::new(&model.store, cfg.learning_rate, s2.contrastive.lambda_in_con);
    let edges = training_edges(graph, split);
    let train_pairs = pairs_of(graph, &split.train_idx);
    let train_labels = graph.topology.labels.select(&split.train_idx);

    let mut views: Vec<View> = Vec::new();
    if cfg.contrastive_active() {
        if x.nrows() < 2 {
            return Err(Error::InvalidParameter("contrastive views need at least two proteins".into()));
        }
        if cfg.ablation.con_alpha() {
            views.push(View::Alpha);
        }
        if cfg.ablation.con_beta() {
            views.push(View::Beta);
        }
    }
    let (node_rho, edge_rho) = (cfg.node_perturb_rate(), cfg.edge_perturb_rate());

    let mut log = Vec::with_capacity(s2.epochs);
    let mut provenance = Vec::new();
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_val = f64::NEG_INFINITY;

    for epoch in 0..s2.epochs {
        let e = epoch as u64;
        let mut tape = Tape::with_exec(exec);
        let mut pass = Pass::train(&model.store, &model.buffers, s2.dropout, rng_from(cfg.seed, &[tag::DROPOUT, 2, e]));
        let xv = tape.leaf(x.clone());
        let fwd = model.forward_tape(&mut tape, &mut pass, &edges, xv, &train_pairs);
        let l_in = tape.bce_logits(fwd.logits, &train_labels);
        // Running statistics follow the unperturbed graph only.
        let bn = pass.take_bn_batches();
        drop(pass);

        let mut con: Vec<(View, Var)> = Vec::new();
        let view_seed = derive_seed(cfg.seed, &[tag::PERTURB, e]);
        for &v in &views {
            let pv = make_view(x, &edges, v, view_seed, node_rho, edge_rho)?;
            provenance.push(ViewProvenance {
                epoch,
                view: v,
                seed: view_seed,
                node_rho,
                edge_rho,
                zeroed: pv.zeroed_count(),
                rewired: pv.rewired.len(),
            });
            let vtag = if v == View::Alpha { 0 } else { 1 };
            let mut vpass = Pass::train(
                &model.store,
                &model.buffers,
                s2.dropout,
                rng_from(cfg.seed, &[tag::VIEW_DROPOUT, vtag, e]),
            );
            let hv_in = tape.leaf(pv.features);
            let hv = model.encode_tape(&mut tape, &mut vpass, &pv.edges, hv_in);
            con.push((v, tape.info_nce(fwd.h_e, hv, s2.contrastive.tau)));
        }

        let mut total = l_in;
        if !con.is_empty() {
            let mut sum = con[0].1;
            for &(_, l) in &con[1..] {
                sum = tape.add(sum, l);
            }
            let weighted = tape.scale(sum, s2.contrastive.gamma_in_con);
            total = tape.add(l_in, weighted);
        }
        let loss = tape.scalar_value(total);
        let l_in_v = tape.scalar_value(l_in);
        let con_value = |which: View| con.iter().find(|(v, _)| *v == which).map(|&(_, l)| tape.scalar_value(l));
        let (l_alpha, l_beta) = (con_value(View::Alpha), con_value(View::Beta));
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: format!("stage 2: total {loss}, L_IN {l_in_v}, L_CON alpha {l_alpha:?}, beta {l_beta:?}"),
            });
        }
        let grads = tape.backward(total).for_params(&model.store);
        drop(tape);
        opt.step(&mut model.store, &grads);
        apply_bn_batches(&mut model.buffers, bn);

        let train_f1 = eval_f1(&model, graph, &edges, &split.train_idx, s2.threshold)?;
        let val_f1 = eval_f1(&model, graph, &edges, &split.val_idx, s2.threshold)?;
        if val_f1 > best_val {
            best_val = val_f1;
            best_epoch = epoch;
            best = model.clone();
        }
        log::info!("stage2 epoch {epoch}: loss {loss:.6} train F1 {train_f1:.4} val F1 {val_f1:.4}");
        log.push(Stage2Row {
            epoch,
            total: loss,
            l_in: l_in_v,
            l_con_alpha: l_alpha,
            l_con_beta: l_beta,
            train_f1,
            val_f1,
        });
    }
    for p in &provenance {
        log::debug!("view {:?} epoch {} seed {} zeroed {} rewired {}", p.view, p.epoch, p.seed, p.zeroed, p.rewired);
    }
    Ok(Stage2Output {
        best,
        best_epoch,
        best_val_f1: best_val,
        last: model,
        log,
        provenance,
    })
}

/// Scores for one exported pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub protein_a: String,
    pub protein_b: String,
    pub probabilities: Vec<f64>,
    pub predicted: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub predictions: Vec<PairPrediction>,
}

/// Which pairs to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSet {
    Train,
    Val,
    Test,
}

/// Score `which` pairs with message passing over the training edges. Test
/// reports carry BS/ES/NS breakdowns.
pub fn evaluate(
    model: &InteractionModel,
    graph: &ProteinInteractionGraph,
    split: &SplitSpec,
    which: EvalSet,
    threshold: f64,
) -> Result<Evaluation> {
    let idx = match which {
        EvalSet::Train => &split.train_idx,
        EvalSet::Val => &split.val_idx,
        EvalSet::Test => &split.test_idx,
    };
    let edges = training_edges(graph, split);
    let logits = model.logits(&graph.node_features, &edges, &pairs_of(graph, idx))?;
    let prob = probabilities(&logits);
    let pred = predict(&logits, threshold)?;
    let labels = graph.topology.labels.select(idx);
    let tags: Option<Vec<SubsetTag>> = (which == EvalSet::Test).then(|| classify_subsets(split, &graph.topology));
    let report = MetricsReport::build(&prob, &pred, &labels, tags.as_deref())?;
    let ids = &graph.topology.protein_ids;
    let predictions = idx
        .iter()
        .enumerate()
        .map(|(r, &p)| {
            let (a, b) = graph.topology.pairs[p];
            PairPrediction {
                protein_a: ids[a].clone(),
                protein_b: ids[b].clone(),
                probabilities: prob.row(r).to_vec(),
                predicted: pred.row(r).iter().map(|&v| v as u8).collect(),
            }
        })
        .collect();
    Ok(Evaluation { report, predictions })
}

/// Eval-mode GIN embeddings of every protein, over the training edges.
pub fn protein_embeddings(model: &InteractionModel, graph: &ProteinInteractionGraph, split: &SplitSpec) -> Result<Array2<f64>> {
    model.encode(&graph.node_features, &training_edges(graph, split))
}
