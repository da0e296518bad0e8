//! Core domain types and on-disk ingestion.

mod io;
mod properties;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_ppi, load_proteins, parse_ppi, parse_proteins};
pub(crate) use properties::hex_digest;
pub use properties::{
    featurize, AminoAcidPropertyTable, FeatureStats, ResidueFeatureMatrix, FEATURE_DIM,
};

/// The 20 canonical amino-acid one-letter codes.
pub const CANONICAL_AMINO_ACIDS: &str = "ACDEFGHIKLMNPQRSTVWY";

pub fn is_canonical(letter: char) -> bool {
    CANONICAL_AMINO_ACIDS.contains(letter)
}

/// A protein with one alpha-carbon coordinate per residue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinRecord {
    pub id: String,
    pub sequence: String,
    pub coords: Vec<[f64; 3]>,
}

impl ProteinRecord {
    pub fn new(id: impl Into<String>, sequence: impl Into<String>, coords: Vec<[f64; 3]>) -> Result<Self> {
        let rec = ProteinRecord {
            id: id.into(),
            sequence: sequence.into(),
            coords,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidProtein {
            id: self.id.clone(),
            message,
        };
        let len = self.sequence.chars().count();
        if len == 0 {
            return Err(invalid("empty sequence".into()));
        }
        if len != self.coords.len() {
            return Err(invalid(format!(
                "sequence has {len} residues but {} coordinates were given",
                self.coords.len()
            )));
        }
        if let Some((pos, c)) = self
            .sequence
            .chars()
            .enumerate()
            .find(|(_, c)| !is_canonical(*c))
        {
            return Err(invalid(format!(
                "non-canonical amino acid '{c}' at position {}",
                pos + 1
            )));
        }
        if self.coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coordinate".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// The seven interaction types, in their fixed label-column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionType {
    Reaction,
    Binding,
    Ptmod,
    Activation,
    Inhibition,
    Catalysis,
    Expression,
}

pub const NUM_INTERACTION_TYPES: usize = 7;

impl InteractionType {
    pub const ALL: [InteractionType; NUM_INTERACTION_TYPES] = [
        InteractionType::Reaction,
        InteractionType::Binding,
        InteractionType::Ptmod,
        InteractionType::Activation,
        InteractionType::Inhibition,
        InteractionType::Catalysis,
        InteractionType::Expression,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InteractionType::Reaction => "reaction",
            InteractionType::Binding => "binding",
            InteractionType::Ptmod => "ptmod",
            InteractionType::Activation => "activation",
            InteractionType::Inhibition => "inhibition",
            InteractionType::Catalysis => "catalysis",
            InteractionType::Expression => "expression",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(|t| t.as_str()).join(", ")
    }
}

impl fmt::Display for InteractionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InteractionType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// An undirected, multi-label interaction between two proteins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub protein_a: String,
    pub protein_b: String,
    pub types: BTreeSet<InteractionType>,
}

impl InteractionRecord {
    /// Multi-hot label row in the fixed type order.
    pub fn label_row(&self) -> [f64; NUM_INTERACTION_TYPES] {
        let mut row = [0.0; NUM_INTERACTION_TYPES];
        for t in &self.types {
            row[t.index()] = 1.0;
        }
        row
    }
}
