use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::data_model::FeatureStats;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph_builder::ProteinStructureGraph;
use crate::nn::{apply_bn_batches, average_bn_batches, Adam, Pass, Tape};
use crate::residue_encoder::{MaskSpec, ReconstructionTerms, ResidueAutoencoder};
use crate::rng::{derive_seed, rng_from, tag};

/// Batch-averaged losses of one epoch. Components that were not optimized
/// are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Row {
    pub epoch: usize,
    pub total: f64,
    pub l_re: Option<f64>,
    pub l_msre: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Checkpoint {
    pub model: ResidueAutoencoder,
    pub stats: FeatureStats,
}

#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub checkpoint: Stage1Checkpoint,
    /// Pooled representation of every protein, keyed by id.
    pub pooled: BTreeMap<String, Vec<f64>>,
    pub log: Vec<Stage1Row>,
}

/// Pretrain the residue autoencoder on every protein in `graphs` (raw
/// features, standardized here with `stats`) and pool each protein.
///
/// After the last step, batch-norm running statistics are recomputed from
/// the final weights (a dropout-free pass over fixed id-order batches), so
/// pooling does not see estimates that lag behind the weights.
///
/// With both reconstruction terms ablated no step is taken and the pooled
/// table comes from the freshly initialized encoder.
pub fn train_stage1(
    ids: &[String],
    graphs: &[ProteinStructureGraph],
    stats: FeatureStats,
    cfg: &RunConfig,
) -> Result<Stage1Output> {
    cfg.validate()?;
    if ids.len() != graphs.len() || ids.is_empty() {
        return Err(Error::Shape(format!("{} ids for {} graphs", ids.len(), graphs.len())));
    }
    let s1 = &cfg.stage1;
    let exec = cfg.exec();
    let graphs: Vec<ProteinStructureGraph> = exec.map(graphs, |g| g.standardized(&stats));
    let mut model = ResidueAutoencoder::new(s1.encoder.clone(), cfg.seed)?;
    let terms = ReconstructionTerms {
        standard: cfg.ablation.use_l_re(),
        masked: cfg.ablation.use_l_msre(),
    };
    let mut log = Vec::new();

    if terms.standard || terms.masked {
        let mut opt = Adam::new(&model.store, cfg.learning_rate, s1.loss.lambda_str);
        let mut order: Vec<usize> = (0..graphs.len()).collect();
        for epoch in 0..s1.epochs {
            order.shuffle(&mut rng_from(cfg.seed, &[tag::SHUFFLE, 1, epoch as u64]));
            let (mut total, mut re, mut msre, mut batches) = (0.0, 0.0, 0.0, 0usize);
            for (b, chunk) in order.chunks(s1.batch_size).enumerate() {
                let batch = ProteinStructureGraph::batch(chunk.iter().map(|&i| &graphs[i]));
                let path = [epoch as u64, b as u64];
                let mask = MaskSpec {
                    rate: s1.mask_rate,
                    seed: derive_seed(cfg.seed, &[tag::MASK, path[0], path[1]]),
                };
                let mut tape = Tape::with_exec(exec);
                let mut pass = Pass::train(
                    &model.store,
                    &model.buffers,
                    s1.dropout,
                    rng_from(cfg.seed, &[tag::DROPOUT, 1, path[0], path[1]]),
                );
                let obj = model.objective(&mut tape, &mut pass, &batch.graph, terms, &s1.loss, &mask)?;
                let loss = tape.scalar_value(obj.total);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        detail: format!(
                            "stage 1 batch {b} (proteins {:?}): total {loss}, L_RE {:?}, L_MSRE {:?}",
                            chunk.iter().map(|&i| ids[i].as_str()).collect::<Vec<_>>(),
                            obj.l_re,
                            obj.l_msre
                        ),
                    });
                }
                let bn = pass.take_bn_batches();
                let grads = tape.backward(obj.total).for_params(&model.store);
                opt.step(&mut model.store, &grads);
                apply_bn_batches(&mut model.buffers, bn);
                total += loss;
                re += obj.l_re.unwrap_or(0.0);
                msre += obj.l_msre.unwrap_or(0.0);
                batches += 1;
            }
            let n = batches as f64;
            let row = Stage1Row {
                epoch,
                total: total / n,
                l_re: terms.standard.then_some(re / n),
                l_msre: terms.masked.then_some(msre / n),
            };
            log::info!("stage1 epoch {epoch}: total {:.6}", row.total);
            log.push(row);
            if !model.store.all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: "stage 1 parameters became non-finite".into(),
                });
            }
        }
        recalibrate_bn(&mut model, &graphs, s1.batch_size, exec);
    }

    let pooled_rows = exec.map(&graphs, |g| model.pooled(g).to_vec());
    let pooled = ids.iter().cloned().zip(pooled_rows).collect();
    Ok(Stage1Output {
        checkpoint: Stage1Checkpoint { model, stats },
        pooled,
        log,
    })
}

fn recalibrate_bn(model: &mut ResidueAutoencoder, graphs: &[ProteinStructureGraph], batch_size: usize, exec: Exec) {
    let chunks: Vec<&[ProteinStructureGraph]> = graphs.chunks(batch_size).collect();
    let stats = exec.map(&chunks, |chunk| {
        let batch = ProteinStructureGraph::batch(chunk.iter());
        let mut tape = Tape::new();
        let mut pass = Pass::train(&model.store, &model.buffers, 0.0, rng_from(0, &[]));
        let x = tape.leaf(batch.graph.features.values().clone());
        model.reconstruct_tape(&mut tape, &mut pass, &batch.graph, x);
        pass.take_bn_batches()
    });
    average_bn_batches(&mut model.buffers, stats);
}
