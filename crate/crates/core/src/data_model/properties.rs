use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{is_canonical, CANONICAL_AMINO_ACIDS};
use crate::error::{Error, Result};

/// Number of per-residue physicochemical features.
pub const FEATURE_DIM: usize = 7;

const BUILTIN_TABLE: &str = include_str!("../../data/aa_properties.toml");

#[derive(Debug, Deserialize)]
struct TableFile {
    version: String,
    columns: Vec<String>,
    residues: BTreeMap<String, Vec<f64>>,
}

/// Amino-acid letter to 7-vector of physicochemical properties.
#[derive(Debug, Clone, PartialEq)]
pub struct AminoAcidPropertyTable {
    version: String,
    hash: String,
    columns: Vec<String>,
    rows: BTreeMap<char, [f64; FEATURE_DIM]>,
}

impl AminoAcidPropertyTable {
    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TABLE).expect("builtin property table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: TableFile = toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        if file.columns.len() != FEATURE_DIM {
            return Err(Error::InvalidParameter(format!(
                "property table must have {FEATURE_DIM} columns, found {}",
                file.columns.len()
            )));
        }
        let mut rows = BTreeMap::new();
        for (key, values) in &file.residues {
            let mut chars = key.chars();
            let letter = match (chars.next(), chars.next()) {
                (Some(c), None) if is_canonical(c) => c,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "property table key '{key}' is not a canonical amino acid"
                    )))
                }
            };
            let row: [f64; FEATURE_DIM] = values.as_slice().try_into().map_err(|_| {
                Error::InvalidParameter(format!("row {key} must have {FEATURE_DIM} values"))
            })?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("row {key} has non-finite values")));
            }
            rows.insert(letter, row);
        }
        if rows.len() != CANONICAL_AMINO_ACIDS.len() {
            return Err(Error::InvalidParameter(format!(
                "property table must cover all 20 amino acids, found {}",
                rows.len()
            )));
        }
        let hash = hex_digest(text.as_bytes());
        Ok(AminoAcidPropertyTable {
            version: file.version,
            hash,
            columns: file.columns,
            rows,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// SHA-256 of the table source text.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn get(&self, letter: char) -> Option<&[f64; FEATURE_DIM]> {
        self.rows.get(&letter)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Per-column standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl FeatureStats {
    /// Leaves raw table values untouched.
    pub fn identity() -> Self {
        FeatureStats {
            mean: [0.0; FEATURE_DIM],
            std: [1.0; FEATURE_DIM],
        }
    }

    /// Population mean and standard deviation over every residue row of the
    /// given raw feature matrices. Constant columns get unit scale.
    pub fn fit<'a>(raw: impl IntoIterator<Item = &'a Array2<f64>>) -> Self {
        let mut sum = [0.0; FEATURE_DIM];
        let mut sq = [0.0; FEATURE_DIM];
        let mut n = 0usize;
        for m in raw {
            for row in m.rows() {
                for (c, v) in row.iter().enumerate() {
                    sum[c] += v;
                    sq[c] += v * v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Self::identity();
        }
        let mut stats = Self::identity();
        for c in 0..FEATURE_DIM {
            let mean = sum[c] / n as f64;
            let var = (sq[c] / n as f64 - mean * mean).max(0.0);
            stats.mean[c] = mean;
            stats.std[c] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
        stats
    }

    pub fn apply(&self, raw: &Array2<f64>) -> Array2<f64> {
        let mean = Array1::from(self.mean.to_vec());
        let std = Array1::from(self.std.to_vec());
        (raw - &mean.insert_axis(Axis(0))) / &std.insert_axis(Axis(0))
    }
}

/// M x 7 residue features, rows in residue order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueFeatureMatrix(pub Array2<f64>);

impl ResidueFeatureMatrix {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Look up each residue in `table` and standardize with `stats`.
pub fn featurize(
    sequence: &str,
    table: &AminoAcidPropertyTable,
    stats: &FeatureStats,
) -> Result<ResidueFeatureMatrix> {
    let letters: Vec<char> = sequence.chars().collect();
    if letters.is_empty() {
        return Err(Error::InvalidParameter("empty sequence".into()));
    }
    let mut out = Array2::zeros((letters.len(), FEATURE_DIM));
    for (i, &c) in letters.iter().enumerate() {
        let row = table
            .get(c)
            .ok_or(Error::NonCanonicalResidue {
                letter: c,
                position: i + 1,
            })?;
        for k in 0..FEATURE_DIM {
            out[[i, k]] = (row[k] - stats.mean[k]) / stats.std[k];
        }
    }
    Ok(ResidueFeatureMatrix(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pinned digest of data/aa_properties.toml. Changing the fixture must
    /// come with a version bump and an update here.
    const BUILTIN_SHA256: &str = "79a7317492a8823850493048e045718c13dbe67c6539cdda01e602ecbb566995";

    #[test]
    fn builtin_table_is_complete_and_pinned() {
        let t = AminoAcidPropertyTable::builtin();
        assert_eq!(t.len(), 20);
        assert_eq!(t.version(), "1");
        assert_eq!(t.columns().len(), FEATURE_DIM);
        for c in CANONICAL_AMINO_ACIDS.chars() {
            assert!(t.get(c).unwrap().iter().all(|v| v.is_finite()));
        }
        assert_eq!(t.hash(), BUILTIN_SHA256);
    }

    #[test]
    fn identical_residues_identical_rows() {
        let t = AminoAcidPropertyTable::builtin();
        let m = featurize("GG", &t, &FeatureStats::identity()).unwrap();
        assert_eq!(m.values().dim(), (2, 7));
        assert_eq!(m.values().row(0), m.values().row(1));
        assert_eq!(m.values().row(0).to_vec(), t.get('G').unwrap().to_vec());
    }

    #[test]
    fn shape_law() {
        let t = AminoAcidPropertyTable::builtin();
        for len in 1..30 {
            let seq: String = CANONICAL_AMINO_ACIDS.chars().cycle().take(len).collect();
            assert_eq!(featurize(&seq, &t, &FeatureStats::identity()).unwrap().rows(), len);
        }
    }

    #[test]
    fn non_canonical_position_reported() {
        let t = AminoAcidPropertyTable::builtin();
        match featurize("GXG", &t, &FeatureStats::identity()) {
            Err(Error::NonCanonicalResidue { letter, position }) => {
                assert_eq!(letter, 'X');
                assert_eq!(position, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn standardization_zero_mean_unit_variance() {
        let t = AminoAcidPropertyTable::builtin();
        let raw = featurize("ACDEFGHIKLMNPQRSTVWYAAGG", &t, &FeatureStats::identity()).unwrap();
        let stats = FeatureStats::fit([raw.values()]);
        let z = stats.apply(raw.values());
        for col in z.columns() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.mapv(|v| (v - mean).powi(2)).sum() / n;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
        let direct = featurize("ACDEFGHIKLMNPQRSTVWYAAGG", &t, &stats).unwrap();
        assert!((direct.values() - &z).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn featurize_is_pure() {
        let t = AminoAcidPropertyTable::builtin();
        let stats = FeatureStats {
            mean: [1.0; 7],
            std: [3.0; 7],
        };
        let a = featurize("MKVLA", &t, &stats).unwrap();
        let b = featurize("MKVLA", &t, &stats).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_incomplete_table() {
        let text = "version = \"x\"\ncolumns = [\"a\",\"b\",\"c\",\"d\",\"e\",\"f\",\"g\"]\n[residues]\nA = [1,2,3,4,5,6,7]\n";
        assert!(AminoAcidPropertyTable::parse(text).is_err());
    }
}
