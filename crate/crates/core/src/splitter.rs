//! Train/val/test partitions of interaction pairs and the BS/ES/NS tagging of
//! test pairs.
//!
//! Random splits shuffle pair indices and cut at 60% and 80%. Traversal splits
//! walk the protein graph breadth- or depth-first from a seeded root, holding
//! out pairs as their first endpoint is reached until 40% of pairs are held;
//! the held-out pairs are then shuffled into equal val/test halves.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_builder::InteractionTopology;
use crate::rng::{rng_from, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitScheme {
    Random,
    Bfs,
    Dfs,
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitScheme::Random => "random",
            SplitScheme::Bfs => "bfs",
            SplitScheme::Dfs => "dfs",
        })
    }
}

impl FromStr for SplitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(SplitScheme::Random),
            "bfs" => Ok(SplitScheme::Bfs),
            "dfs" => Ok(SplitScheme::Dfs),
            other => Err(Error::InvalidParameter(format!(
                "unknown split scheme '{other}' (expected random, bfs or dfs)"
            ))),
        }
    }
}

/// Disjoint pair-index lists covering every pair exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub scheme: SplitScheme,
    pub seed: u64,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl SplitSpec {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train_idx.len(), self.val_idx.len(), self.test_idx.len())
    }

    pub fn pair_count(&self) -> usize {
        self.train_idx.len() + self.val_idx.len() + self.test_idx.len()
    }

    /// Check the partition property against `pair_count`.
    pub fn validate(&self, pair_count: usize) -> Result<()> {
        let mut seen = vec![false; pair_count];
        for &i in self.train_idx.iter().chain(&self.val_idx).chain(&self.test_idx) {
            if i >= pair_count {
                return Err(Error::Split(format!("pair index {i} out of range ({pair_count} pairs)")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Split(format!("pair index {i} assigned twice")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Split(format!("pair index {missing} unassigned")));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Uniform shuffle cut at floor(0.6 P) and floor(0.8 P).
pub fn split_random(pair_count: usize, seed: u64) -> Result<SplitSpec> {
    if pair_count < 5 {
        return Err(Error::Split(format!(
            "need at least 5 pairs for a 3:1:1 split, got {pair_count}"
        )));
    }
    let mut idx: Vec<usize> = (0..pair_count).collect();
    idx.shuffle(&mut rng_from(seed, &[tag::SPLIT, 0]));
    let a = pair_count * 3 / 5;
    let b = pair_count * 4 / 5;
    Ok(SplitSpec {
        scheme: SplitScheme::Random,
        seed,
        train_idx: idx[..a].to_vec(),
        val_idx: idx[a..b].to_vec(),
        test_idx: idx[b..].to_vec(),
    })
}

/// Traversal split with a seeded random root.
pub fn split_traversal(topology: &InteractionTopology, scheme: SplitScheme, seed: u64) -> Result<SplitSpec> {
    split_traversal_with_root(topology, scheme, seed, None)
}

/// Traversal split; `root` overrides the seeded root choice for the first
/// component. Further roots, needed when a component is exhausted before the
/// quota, are drawn uniformly from unvisited proteins.
pub fn split_traversal_with_root(
    topology: &InteractionTopology,
    scheme: SplitScheme,
    seed: u64,
    root: Option<usize>,
) -> Result<SplitSpec> {
    if scheme == SplitScheme::Random {
        return split_random(topology.pair_count(), seed);
    }
    let n = topology.node_count();
    let p = topology.pair_count();
    let quota = p * 2 / 5;
    if quota == 0 {
        return Err(Error::Split(format!("{p} pairs leave nothing to hold out")));
    }
    if let Some(r) = root {
        if r >= n {
            return Err(Error::Split(format!("root {r} out of range")));
        }
    }

    // Neighbors sorted by protein id, each tagged with its pair index.
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (pi, &(a, b)) in topology.pairs.iter().enumerate() {
        adj[a].push((b, pi));
        adj[b].push((a, pi));
    }
    for list in &mut adj {
        list.sort_by(|x, y| {
            topology.protein_ids[x.0]
                .cmp(&topology.protein_ids[y.0])
                .then(x.1.cmp(&y.1))
        });
    }

    let mut rng = rng_from(seed, &[tag::SPLIT, 1]);
    let mut visited = vec![false; n];
    let mut discovered = vec![false; n];
    let mut touched = vec![false; p];
    let mut held: Vec<usize> = Vec::with_capacity(quota);
    let mut next_root = root;

    'outer: while held.len() < quota {
        let start = match next_root.take() {
            Some(r) if !discovered[r] => r,
            _ => {
                let unvisited: Vec<usize> = (0..n).filter(|&i| !discovered[i]).collect();
                if unvisited.is_empty() {
                    return Err(Error::Split(format!(
                        "traversal exhausted all proteins before holding out {quota} pairs"
                    )));
                }
                unvisited[rng.random_range(0..unvisited.len())]
            }
        };
        let mut frontier: VecDeque<usize> = VecDeque::from([start]);
        discovered[start] = true;
        loop {
            let next = match scheme {
                SplitScheme::Bfs => frontier.pop_front(),
                _ => frontier.pop_back(),
            };
            let Some(u) = next else { break };
            if visited[u] {
                continue;
            }
            visited[u] = true;
            for &(_, pi) in &adj[u] {
                if !touched[pi] {
                    touched[pi] = true;
                    held.push(pi);
                    if held.len() == quota {
                        break 'outer;
                    }
                }
            }
            match scheme {
                SplitScheme::Bfs => {
                    for &(v, _) in &adj[u] {
                        if !discovered[v] {
                            discovered[v] = true;
                            frontier.push_back(v);
                        }
                    }
                }
                _ => {
                    // reversed so the smallest id is popped first
                    for &(v, _) in adj[u].iter().rev() {
                        if !visited[v] {
                            discovered[v] = true;
                            frontier.push_back(v);
                        }
                    }
                }
            }
        }
    }

    let held_set: BTreeSet<usize> = held.iter().copied().collect();
    let train_idx: Vec<usize> = (0..p).filter(|i| !held_set.contains(i)).collect();
    let mut shuffled = held;
    shuffled.shuffle(&mut rng_from(seed, &[tag::SPLIT, 2]));
    let half = shuffled.len() / 2;
    let mut val_idx = shuffled[..half].to_vec();
    let mut test_idx = shuffled[half..].to_vec();
    move_seen_pairs_to_val(topology, &train_idx, &mut val_idx, &mut test_idx)?;

    Ok(SplitSpec {
        scheme,
        seed,
        train_idx,
        val_idx,
        test_idx,
    })
}

/// Cutting the quota inside the last visited protein's pair list can leave
/// that protein in training, which may make one of its held-out pairs BS.
/// Such pairs are swapped with non-BS validation pairs so the test set keeps
/// only ES/NS pairs.
fn move_seen_pairs_to_val(
    topology: &InteractionTopology,
    train_idx: &[usize],
    val_idx: &mut [usize],
    test_idx: &mut [usize],
) -> Result<()> {
    let seen = training_proteins(topology, train_idx);
    let is_bs = |pi: usize| {
        let (a, b) = topology.pairs[pi];
        seen[a] && seen[b]
    };
    let donor_slots: Vec<usize> = (0..val_idx.len()).filter(|&v| !is_bs(val_idx[v])).collect();
    let mut donors = donor_slots.into_iter();
    for t in 0..test_idx.len() {
        if is_bs(test_idx[t]) {
            let v = donors.next().ok_or_else(|| {
                Error::Split("not enough unseen validation pairs to keep BS pairs out of test".into())
            })?;
            std::mem::swap(&mut test_idx[t], &mut val_idx[v]);
        }
    }
    Ok(())
}

fn training_proteins(topology: &InteractionTopology, train_idx: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; topology.node_count()];
    for &pi in train_idx {
        let (a, b) = topology.pairs[pi];
        seen[a] = true;
        seen[b] = true;
    }
    seen
}

/// How many endpoints of a test pair occur in training pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubsetTag {
    /// Both proteins seen in training.
    BS,
    /// Exactly one seen.
    ES,
    /// Neither seen.
    NS,
}

impl SubsetTag {
    pub const ALL: [SubsetTag; 3] = [SubsetTag::BS, SubsetTag::ES, SubsetTag::NS];

    pub fn as_str(self) -> &'static str {
        match self {
            SubsetTag::BS => "BS",
            SubsetTag::ES => "ES",
            SubsetTag::NS => "NS",
        }
    }
}

/// One tag per entry of `split.test_idx`, in the same order.
pub fn classify_subsets(split: &SplitSpec, topology: &InteractionTopology) -> Vec<SubsetTag> {
    let seen = training_proteins(topology, &split.train_idx);
    split
        .test_idx
        .iter()
        .map(|&pi| {
            let (a, b) = topology.pairs[pi];
            match (seen[a], seen[b]) {
                (true, true) => SubsetTag::BS,
                (false, false) => SubsetTag::NS,
                _ => SubsetTag::ES,
            }
        })
        .collect()
}
