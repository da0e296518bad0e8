//! Residue structure graphs (sequential, radial and KNN relations) and the
//! protein interaction graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    featurize, AminoAcidPropertyTable, FeatureStats, InteractionRecord, ProteinRecord,
    ResidueFeatureMatrix, NUM_INTERACTION_TYPES,
};
use crate::error::{Error, Result};
use crate::exec::Exec;

pub const DEFAULT_RADIUS: f64 = 10.0;
pub const DEFAULT_K: usize = 5;

/// Directed edges `sources[i] -> targets[i]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeList {
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
}

impl EdgeList {
    pub fn new(sources: Vec<usize>, targets: Vec<usize>) -> Result<Self> {
        if sources.len() != targets.len() {
            return Err(Error::Shape(format!(
                "edge list has {} sources and {} targets",
                sources.len(),
                targets.len()
            )));
        }
        Ok(EdgeList { sources, targets })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (sources, targets) = pairs.into_iter().unzip();
        EdgeList { sources, targets }
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sources.iter().copied().zip(self.targets.iter().copied())
    }

    pub fn to_set(&self) -> BTreeSet<(usize, usize)> {
        self.iter().collect()
    }

    pub fn validate(&self, node_count: usize) -> Result<()> {
        if self.sources.len() != self.targets.len() {
            return Err(Error::Shape("ragged edge list".into()));
        }
        match self.iter().find(|&(s, t)| s >= node_count || t >= node_count) {
            Some((s, t)) => Err(Error::Shape(format!(
                "edge ({s}, {t}) out of range for {node_count} nodes"
            ))),
            None => Ok(()),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let set = self.to_set();
        set.iter().all(|&(s, t)| set.contains(&(t, s)))
    }

    /// Shift every index by `offset` (used when stacking graphs into a batch).
    pub fn offset(&self, offset: usize) -> EdgeList {
        EdgeList {
            sources: self.sources.iter().map(|s| s + offset).collect(),
            targets: self.targets.iter().map(|t| t + offset).collect(),
        }
    }
}

/// Incoming adjacency grouped by target node; `edge_ids` point back into the
/// originating [`EdgeList`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    pub offsets: Vec<usize>,
    pub sources: Vec<usize>,
    pub edge_ids: Vec<usize>,
}

impl Csr {
    pub fn incoming(edges: &EdgeList, node_count: usize) -> Result<Csr> {
        edges.validate(node_count)?;
        let mut counts = vec![0usize; node_count + 1];
        for &t in &edges.targets {
            counts[t + 1] += 1;
        }
        for i in 0..node_count {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut sources = vec![0; edges.len()];
        let mut edge_ids = vec![0; edges.len()];
        for (e, (s, t)) in edges.iter().enumerate() {
            let slot = cursor[t];
            sources[slot] = s;
            edge_ids[slot] = e;
            cursor[t] += 1;
        }
        Ok(Csr {
            offsets,
            sources,
            edge_ids,
        })
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.sources[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Residue edge relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeType {
    Sequential,
    Radial,
    Knn,
}

impl EdgeType {
    pub const ALL: [EdgeType; 3] = [EdgeType::Sequential, EdgeType::Radial, EdgeType::Knn];
}

/// Heterogeneous residue graph with one feature row per residue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinStructureGraph {
    pub features: ResidueFeatureMatrix,
    pub edges_seq: EdgeList,
    pub edges_rad: EdgeList,
    pub edges_knn: EdgeList,
}

impl ProteinStructureGraph {
    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    pub fn edges(&self, ty: EdgeType) -> &EdgeList {
        match ty {
            EdgeType::Sequential => &self.edges_seq,
            EdgeType::Radial => &self.edges_rad,
            EdgeType::Knn => &self.edges_knn,
        }
    }

    /// Union of the three relations.
    pub fn all_edges(&self) -> BTreeSet<(usize, usize)> {
        EdgeType::ALL
            .iter()
            .flat_map(|&t| self.edges(t).iter())
            .collect()
    }

    /// Copy with features re-standardized. Assumes `self` holds raw table rows.
    pub fn standardized(&self, stats: &FeatureStats) -> ProteinStructureGraph {
        ProteinStructureGraph {
            features: ResidueFeatureMatrix(stats.apply(self.features.values())),
            ..self.clone()
        }
    }

    /// Stack several graphs block-diagonally.
    pub fn batch<'a>(graphs: impl IntoIterator<Item = &'a ProteinStructureGraph>) -> BatchedGraph {
        let mut rows: Vec<f64> = Vec::new();
        let mut seq = EdgeList::default();
        let mut rad = EdgeList::default();
        let mut knn = EdgeList::default();
        let mut segments = Vec::new();
        let mut offset = 0;
        for g in graphs {
            let m = g.node_count();
            rows.extend(g.features.values().iter());
            for (dst, src) in [(&mut seq, &g.edges_seq), (&mut rad, &g.edges_rad), (&mut knn, &g.edges_knn)] {
                let shifted = src.offset(offset);
                dst.sources.extend(shifted.sources);
                dst.targets.extend(shifted.targets);
            }
            segments.push(offset..offset + m);
            offset += m;
        }
        let width = rows.len().checked_div(offset).unwrap_or(0);
        let features = Array2::from_shape_vec((offset, width), rows).expect("consistent widths");
        BatchedGraph {
            graph: ProteinStructureGraph {
                features: ResidueFeatureMatrix(features),
                edges_seq: seq,
                edges_rad: rad,
                edges_knn: knn,
            },
            segments,
        }
    }
}

/// Several proteins merged into one disconnected graph.
#[derive(Debug, Clone)]
pub struct BatchedGraph {
    pub graph: ProteinStructureGraph,
    pub segments: Vec<std::ops::Range<usize>>,
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// For each residue, its `k` nearest other residues by Euclidean distance,
/// ties broken by lower residue index.
pub fn knn_directed(coords: &[[f64; 3]], k: usize) -> Vec<Vec<usize>> {
    let m = coords.len();
    (0..m)
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| (dist2(&coords[i], &coords[j]), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Build the three residue relations for one protein. Features are raw table
/// rows; standardize with [`ProteinStructureGraph::standardized`].
pub fn build_structure_graph(
    record: &ProteinRecord,
    table: &AminoAcidPropertyTable,
    radius: f64,
    k: usize,
) -> Result<ProteinStructureGraph> {
    record.validate()?;
    let m = record.len();
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    if k == 0 || k >= m {
        return Err(Error::InvalidParameter(format!(
            "k must satisfy 1 <= k < {m} for protein {}, got {k}",
            record.id
        )));
    }
    let features = featurize(&record.sequence, table, &FeatureStats::identity())?;

    let edges_seq = EdgeList::from_pairs((0..m - 1).flat_map(|i| [(i, i + 1), (i + 1, i)]));

    let r2 = radius * radius;
    let edges_rad = EdgeList::from_pairs((0..m).flat_map(|i| {
        let coords = &record.coords;
        (0..m).filter_map(move |j| (j != i && dist2(&coords[i], &coords[j]) <= r2).then_some((i, j)))
    }));

    let knn: BTreeSet<(usize, usize)> = knn_directed(&record.coords, k)
        .into_iter()
        .enumerate()
        .flat_map(|(i, nbrs)| nbrs.into_iter().flat_map(move |j| [(j, i), (i, j)]))
        .collect();
    let edges_knn = EdgeList::from_pairs(knn);

    Ok(ProteinStructureGraph {
        features,
        edges_seq,
        edges_rad,
        edges_knn,
    })
}

/// Build structure graphs for many proteins, in input order.
pub fn build_structure_graphs(
    records: &[ProteinRecord],
    table: &AminoAcidPropertyTable,
    radius: f64,
    k: usize,
    exec: Exec,
) -> Result<Vec<ProteinStructureGraph>> {
    exec.try_map(records, |r| build_structure_graph(r, table, radius, k))
}

/// Cache key covering every input that shapes a structure graph.
pub fn graph_cache_key(radius: f64, k: usize, table: &AminoAcidPropertyTable) -> String {
    let text = format!("radius={radius:?};k={k};table={}:{}", table.version(), table.hash());
    crate::data_model::hex_digest(text.as_bytes())[..16].to_string()
}

#[derive(Serialize, Deserialize)]
struct CachedGraph {
    id: String,
    key: String,
    graph: ProteinStructureGraph,
}

fn cache_path(dir: &Path, id: &str, key: &str) -> PathBuf {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    dir.join(format!("{safe}.{key}.json"))
}

/// Write one cached graph per protein.
pub fn write_graph_cache(
    dir: impl AsRef<Path>,
    key: &str,
    ids: &[String],
    graphs: &[ProteinStructureGraph],
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (id, graph) in ids.iter().zip(graphs) {
        let path = cache_path(dir, id, key);
        let body = serde_json::to_string(&CachedGraph {
            id: id.clone(),
            key: key.to_string(),
            graph: graph.clone(),
        })?;
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Load a cached graph; `None` when no entry exists for this key.
pub fn read_graph_cache(dir: impl AsRef<Path>, key: &str, id: &str) -> Result<Option<ProteinStructureGraph>> {
    let path = cache_path(dir.as_ref(), id, key);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let cached: CachedGraph = serde_json::from_str(&text)?;
    if cached.id != id || cached.key != key {
        return Ok(None);
    }
    Ok(Some(cached.graph))
}

/// P x 7 multi-hot labels, one row per undirected pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMatrix(pub Array2<f64>);

impl LabelMatrix {
    pub fn from_records(records: &[InteractionRecord]) -> Result<Self> {
        let mut m = Array2::zeros((records.len(), NUM_INTERACTION_TYPES));
        for (p, r) in records.iter().enumerate() {
            if r.types.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "pair ({}, {}) has no interaction type",
                    r.protein_a, r.protein_b
                )));
            }
            for (c, v) in r.label_row().iter().enumerate() {
                m[[p, c]] = *v;
            }
        }
        Ok(LabelMatrix(m))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn select(&self, idx: &[usize]) -> Array2<f64> {
        self.0.select(ndarray::Axis(0), idx)
    }
}

/// Node identities, undirected pairs and labels of a PPI network, without
/// node features. Pair indices follow the record order.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTopology {
    pub protein_ids: Vec<String>,
    pub pairs: Vec<(usize, usize)>,
    pub labels: LabelMatrix,
}

impl InteractionTopology {
    /// Nodes are the sorted distinct proteins named by `records`.
    pub fn from_records(records: &[InteractionRecord]) -> Result<Self> {
        let ids: BTreeSet<&str> = records
            .iter()
            .flat_map(|r| [r.protein_a.as_str(), r.protein_b.as_str()])
            .collect();
        Self::with_nodes(records, ids.into_iter().map(String::from).collect())
    }

    /// Use an explicit node list; every protein in `records` must appear in it.
    pub fn with_nodes(records: &[InteractionRecord], protein_ids: Vec<String>) -> Result<Self> {
        let index: HashMap<&str, usize> = protein_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let lookup = |id: &str| index.get(id).copied().ok_or_else(|| Error::MissingProtein(id.to_string()));
        let mut pairs = Vec::with_capacity(records.len());
        let mut seen = BTreeSet::new();
        for r in records {
            let (a, b) = (lookup(&r.protein_a)?, lookup(&r.protein_b)?);
            if a == b {
                return Err(Error::SelfInteraction {
                    id: r.protein_a.clone(),
                    line: 0,
                });
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate pair ({}, {})",
                    r.protein_a, r.protein_b
                )));
            }
            pairs.push((a, b));
        }
        Ok(InteractionTopology {
            protein_ids,
            pairs,
            labels: LabelMatrix::from_records(records)?,
        })
    }

    pub fn node_count(&self) -> usize {
        self.protein_ids.len()
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Both directions of every pair in `idx`; pair `idx[p]` occupies slots
    /// `2p` and `2p + 1`.
    pub fn edges_for(&self, idx: &[usize]) -> EdgeList {
        EdgeList::from_pairs(idx.iter().flat_map(|&p| {
            let (a, b) = self.pairs[p];
            [(a, b), (b, a)]
        }))
    }

    pub fn all_edges(&self) -> EdgeList {
        let idx: Vec<usize> = (0..self.pairs.len()).collect();
        self.edges_for(&idx)
    }
}

/// PPI network with one pooled feature row per protein.
#[derive(Debug, Clone, PartialEq)]
pub struct ProteinInteractionGraph {
    pub topology: InteractionTopology,
    pub node_features: Array2<f64>,
    pub edges: EdgeList,
}

impl std::ops::Deref for ProteinInteractionGraph {
    type Target = InteractionTopology;

    fn deref(&self) -> &InteractionTopology {
        &self.topology
    }
}

/// One node per pooled protein (sorted by id), one undirected edge per record.
pub fn build_interaction_graph(
    records: &[InteractionRecord],
    pooled: &BTreeMap<String, Vec<f64>>,
) -> Result<ProteinInteractionGraph> {
    for r in records {
        for id in [&r.protein_a, &r.protein_b] {
            if !pooled.contains_key(id) {
                return Err(Error::MissingProtein(id.clone()));
            }
        }
    }
    let ids: Vec<String> = pooled.keys().cloned().collect();
    let width = pooled.values().next().map_or(0, Vec::len);
    let mut features = Array2::zeros((ids.len(), width));
    for (i, v) in pooled.values().enumerate() {
        if v.len() != width {
            return Err(Error::Shape(format!(
                "pooled vector for {} has width {}, expected {width}",
                ids[i],
                v.len()
            )));
        }
        features.row_mut(i).assign(&ndarray::ArrayView1::from(v.as_slice()));
    }
    let topology = InteractionTopology::with_nodes(records, ids)?;
    let edges = topology.all_edges();
    Ok(ProteinInteractionGraph {
        topology,
        node_features: features,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::InteractionType;

    fn line(m: usize, spacing: f64) -> ProteinRecord {
        let seq: String = "GAVLI".chars().cycle().take(m).collect();
        let coords = (0..m).map(|i| [i as f64 * spacing, 0.0, 0.0]).collect();
        ProteinRecord::new("L", seq, coords).unwrap()
    }

    fn set(v: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
        v.iter().copied().collect()
    }

    #[test]
    fn collinear_three() {
        let g = build_structure_graph(&line(3, 1.0), &AminoAcidPropertyTable::builtin(), 1.5, 1).unwrap();
        let expected = set(&[(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_eq!(g.edges_seq.to_set(), expected);
        assert_eq!(g.edges_rad.to_set(), expected);
        assert_eq!(g.edges_knn.to_set(), expected);
        // residue 1 is equidistant from 0 and 2; the lower index wins
        assert_eq!(knn_directed(&line(3, 1.0).coords, 1), vec![vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn tiny_radius_no_radial_edges() {
        let g = build_structure_graph(&line(5, 2.0), &AminoAcidPropertyTable::builtin(), 1e-4, 2).unwrap();
        assert!(g.edges_rad.is_empty());
    }

    #[test]
    fn two_residues() {
        let g = build_structure_graph(&line(2, 3.8), &AminoAcidPropertyTable::builtin(), 10.0, 1).unwrap();
        assert_eq!(g.edges_knn.to_set(), set(&[(0, 1), (1, 0)]));
        assert_eq!(g.edges_knn.to_set(), g.edges_seq.to_set());
    }

    #[test]
    fn k_too_large() {
        let r = build_structure_graph(&line(3, 1.0), &AminoAcidPropertyTable::builtin(), 2.0, 3);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
        let r = build_structure_graph(&line(3, 1.0), &AminoAcidPropertyTable::builtin(), 0.0, 1);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn duplicate_coordinates_are_not_an_error() {
        let rec = ProteinRecord::new("D", "GGGG", vec![[0.0; 3]; 4]).unwrap();
        let g = build_structure_graph(&rec, &AminoAcidPropertyTable::builtin(), 1.0, 2).unwrap();
        assert_eq!(knn_directed(&rec.coords, 2)[3], vec![0, 1]);
        assert!(g.edges_knn.is_symmetric());
    }

    #[test]
    fn csr_groups_by_target() {
        let e = EdgeList::from_pairs([(0, 1), (2, 1), (1, 0)]);
        let csr = Csr::incoming(&e, 3).unwrap();
        assert_eq!(csr.neighbors(1), &[0, 2]);
        assert_eq!(csr.neighbors(0), &[1]);
        assert!(csr.neighbors(2).is_empty());
        assert!(Csr::incoming(&e, 2).is_err());
    }

    #[test]
    fn batching_offsets_edges() {
        let t = AminoAcidPropertyTable::builtin();
        let a = build_structure_graph(&line(3, 1.0), &t, 1.5, 1).unwrap();
        let b = build_structure_graph(&line(2, 1.0), &t, 1.5, 1).unwrap();
        let batch = ProteinStructureGraph::batch([&a, &b]);
        assert_eq!(batch.graph.node_count(), 5);
        assert_eq!(batch.segments, vec![0..3, 3..5]);
        assert!(batch.graph.edges_seq.to_set().contains(&(3, 4)));
        assert!(!batch.graph.edges_seq.to_set().contains(&(2, 3)));
    }

    fn rec(a: &str, b: &str) -> InteractionRecord {
        InteractionRecord {
            protein_a: a.into(),
            protein_b: b.into(),
            types: BTreeSet::from([InteractionType::Binding]),
        }
    }

    fn pooled(ids: &[&str]) -> BTreeMap<String, Vec<f64>> {
        ids.iter().map(|id| (id.to_string(), vec![1.0, 2.0])).collect()
    }

    #[test]
    fn interaction_graph_shapes() {
        let g = build_interaction_graph(&[rec("A", "B"), rec("B", "C")], &pooled(&["A", "B", "C"])).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges.len(), 4);
        assert_eq!(g.node_features.nrows(), 3);
        assert_eq!(g.labels.rows(), 2);
    }

    #[test]
    fn interaction_graph_isolated_nodes() {
        let g = build_interaction_graph(&[], &pooled(&["A", "B"])).unwrap();
        assert_eq!(g.node_count(), 2);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn interaction_graph_missing_vector() {
        let err = build_interaction_graph(&[rec("A", "D")], &pooled(&["A", "B"])).unwrap_err();
        assert!(matches!(err, Error::MissingProtein(ref id) if id == "D"));
    }
}
