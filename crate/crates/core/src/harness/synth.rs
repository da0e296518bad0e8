//! Small planted datasets for smoke tests and desk-scale runs.
//!
//! Each protein belongs to a composition group and draws its residues from
//! that group's alphabet, so pooled residue features separate the groups.
//! A pair's interaction types depend only on the two groups.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data_model::{InteractionRecord, InteractionType, ProteinRecord};
use crate::error::{Error, Result};
use crate::rng::{rng_from, tag};

/// Residue alphabets of the composition groups.
pub const GROUP_ALPHABETS: [&str; 4] = ["AVLIM", "DEKRH", "STNQG", "FWYPC"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub proteins: usize,
    pub pairs: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            proteins: 20,
            pairs: 60,
            min_len: 30,
            max_len: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub proteins: Vec<ProteinRecord>,
    pub interactions: Vec<InteractionRecord>,
    /// Group of each protein, aligned with `proteins`.
    pub groups: Vec<usize>,
}

/// Interaction types planted for a pair of groups; symmetric and never empty.
pub fn planted_types(ga: usize, gb: usize) -> BTreeSet<InteractionType> {
    [(ga + gb) % 7, (3 + ga * gb) % 7]
        .into_iter()
        .map(|i| InteractionType::ALL[i])
        .collect()
}

pub fn protein_id(i: usize) -> String {
    format!("SYN{i:03}")
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    let n = spec.proteins;
    let max_pairs = n * n.saturating_sub(1) / 2;
    if n < 2 || spec.pairs == 0 || spec.pairs > max_pairs {
        return Err(Error::InvalidParameter(format!(
            "cannot place {} pairs among {n} proteins",
            spec.pairs
        )));
    }
    if spec.min_len < 2 || spec.min_len > spec.max_len {
        return Err(Error::InvalidParameter("need 2 <= min_len <= max_len".into()));
    }
    let mut rng = rng_from(spec.seed, &[tag::SYNTH]);
    let groups: Vec<usize> = (0..n).map(|i| i % GROUP_ALPHABETS.len()).collect();
    let mut proteins = Vec::with_capacity(n);
    for (i, &g) in groups.iter().enumerate() {
        let alphabet: Vec<char> = GROUP_ALPHABETS[g].chars().collect();
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let sequence: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        // Random walk with 3.8 A steps.
        let mut coords = Vec::with_capacity(len);
        let mut at = [0.0f64; 3];
        for _ in 0..len {
            coords.push(at);
            let dir: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
            for k in 0..3 {
                at[k] += 3.8 * dir[k] / norm;
            }
        }
        proteins.push(ProteinRecord::new(protein_id(i), sequence, coords)?);
    }

    // Every unordered pair gets a slot; draw distinct slots.
    let all: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let chosen = sample(&mut rng, all.len(), spec.pairs).into_vec();
    let interactions = chosen
        .into_iter()
        .map(|s| {
            let (a, b) = all[s];
            InteractionRecord {
                protein_a: protein_id(a),
                protein_b: protein_id(b),
                types: planted_types(groups[a], groups[b]),
            }
        })
        .collect();
    Ok(SynthDataset {
        proteins,
        interactions,
        groups,
    })
}
