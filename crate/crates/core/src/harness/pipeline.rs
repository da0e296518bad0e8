use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::{AblationFlags, RunConfig};
use super::metrics::MetricsReport;
use super::stage1::{train_stage1, Stage1Output};
use super::stage2::{evaluate, train_stage2, EvalSet, Evaluation, Stage2Output};
use crate::data_model::{AminoAcidPropertyTable, FeatureStats, InteractionRecord, ProteinRecord};
use crate::error::{Error, Result};
use crate::graph_builder::{
    build_interaction_graph, build_structure_graph, graph_cache_key, read_graph_cache, write_graph_cache,
    InteractionTopology, ProteinInteractionGraph, ProteinStructureGraph,
};
use crate::splitter::{split_random, split_traversal, SplitScheme, SplitSpec};

pub fn property_table(cfg: &RunConfig) -> Result<AminoAcidPropertyTable> {
    match &cfg.data.properties {
        Some(p) => AminoAcidPropertyTable::load(p),
        None => Ok(AminoAcidPropertyTable::builtin()),
    }
}

/// Structure graphs in protein order, through the on-disk cache when one is
/// configured.
pub fn structure_graphs(
    proteins: &[ProteinRecord],
    table: &AminoAcidPropertyTable,
    cfg: &RunConfig,
) -> Result<Vec<ProteinStructureGraph>> {
    let (radius, k) = (cfg.graph.radius, cfg.graph.k);
    let Some(dir) = &cfg.data.graph_cache else {
        return crate::graph_builder::build_structure_graphs(proteins, table, radius, k, cfg.exec());
    };
    let key = graph_cache_key(radius, k, table);
    cfg.exec().try_map(proteins, |p| {
        if let Some(g) = read_graph_cache(dir, &key, &p.id)? {
            return Ok(g);
        }
        let g = build_structure_graph(p, table, radius, k)?;
        write_graph_cache(dir, &key, std::slice::from_ref(&p.id), std::slice::from_ref(&g))?;
        Ok(g)
    })
}

/// Interaction topology over every protein, nodes sorted by id. Matches the
/// node order of the interaction graph built later.
pub fn topology(proteins: &[ProteinRecord], interactions: &[InteractionRecord]) -> Result<InteractionTopology> {
    let ids: BTreeSet<&str> = proteins.iter().map(|p| p.id.as_str()).collect();
    if ids.len() != proteins.len() {
        return Err(Error::InvalidParameter("duplicate protein ids".into()));
    }
    InteractionTopology::with_nodes(interactions, ids.into_iter().map(String::from).collect())
}

pub fn make_split(topology: &InteractionTopology, scheme: SplitScheme, seed: u64) -> Result<SplitSpec> {
    match scheme {
        SplitScheme::Random => split_random(topology.pair_count(), seed),
        _ => split_traversal(topology, scheme, seed),
    }
}

/// Proteins that appear in at least one training pair.
pub fn training_protein_mask(topology: &InteractionTopology, split: &SplitSpec) -> Vec<bool> {
    let mut seen = vec![false; topology.node_count()];
    for &p in &split.train_idx {
        let (a, b) = topology.pairs[p];
        seen[a] = true;
        seen[b] = true;
    }
    seen
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub split: SplitSpec,
    pub stage1: Stage1Output,
    pub graph: ProteinInteractionGraph,
    pub stage2: Stage2Output,
    pub val: Evaluation,
    pub test: Evaluation,
}

/// Both stages end to end. Feature statistics are fitted on the residues of
/// training proteins; stage 1 pretrains on all proteins. The best-validation
/// stage-2 model is scored on validation and test pairs.
pub fn run_pipeline(
    proteins: &[ProteinRecord],
    interactions: &[InteractionRecord],
    split: Option<&SplitSpec>,
    cfg: &RunConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let table = property_table(cfg)?;
    let mut proteins: Vec<ProteinRecord> = proteins.to_vec();
    proteins.sort_by(|a, b| a.id.cmp(&b.id));
    let topo = topology(&proteins, interactions)?;
    let split = match split {
        Some(s) => s.clone(),
        None => make_split(&topo, cfg.split.scheme, cfg.split.seed)?,
    };
    split.validate(topo.pair_count())?;

    let graphs = structure_graphs(&proteins, &table, cfg)?;
    let train_mask = training_protein_mask(&topo, &split);
    let stats = FeatureStats::fit(
        graphs
            .iter()
            .zip(&train_mask)
            .filter(|(_, &t)| t)
            .map(|(g, _)| g.features.values()),
    );
    let ids: Vec<String> = proteins.iter().map(|p| p.id.clone()).collect();
    let stage1 = train_stage1(&ids, &graphs, stats, cfg)?;
    let graph = build_interaction_graph(interactions, &stage1.pooled)?;
    let stage2 = train_stage2(&graph, &split, cfg)?;
    let val = evaluate(&stage2.best, &graph, &split, EvalSet::Val, cfg.stage2.threshold)?;
    let test = evaluate(&stage2.best, &graph, &split, EvalSet::Test, cfg.stage2.threshold)?;
    Ok(PipelineOutput {
        split,
        stage1,
        graph,
        stage2,
        val,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub flags: AblationFlags,
    pub label: String,
    pub best_epoch: usize,
    pub val_micro_f1: f64,
    pub test: MetricsReport,
}

/// One full run per flag set, all with the base seeds. An empty `cells`
/// list runs the baseline alone. Cells run concurrently when the config
/// allows parallelism; results keep the input order.
pub fn run_ablation_grid(
    proteins: &[ProteinRecord],
    interactions: &[InteractionRecord],
    split: Option<&SplitSpec>,
    base: &RunConfig,
    cells: &[AblationFlags],
) -> Result<Vec<AblationCell>> {
    let cells: Vec<AblationFlags> = if cells.is_empty() {
        vec![AblationFlags::default()]
    } else {
        cells.to_vec()
    };
    base.exec().try_map(&cells, |&flags| {
        let mut cfg = base.clone();
        cfg.ablation = flags;
        let out = run_pipeline(proteins, interactions, split, &cfg)?;
        Ok(AblationCell {
            flags,
            label: flags.to_string(),
            best_epoch: out.stage2.best_epoch,
            val_micro_f1: out.stage2.best_val_f1,
            test: out.test.report,
        })
    })
}
