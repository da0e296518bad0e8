use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::{InteractionRecord, InteractionType, ProteinRecord};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProteinLine {
    id: String,
    sequence: String,
    coords: Vec<[f64; 3]>,
}

/// Read a JSON-lines protein file: one `{"id", "sequence", "coords"}` object
/// per line. Blank lines are skipped.
pub fn load_proteins(path: impl AsRef<Path>) -> Result<Vec<ProteinRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_proteins(&text)
}

pub fn parse_proteins(text: &str) -> Result<Vec<ProteinRecord>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: ProteinLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(ProteinRecord::new(parsed.id, parsed.sequence, parsed.coords)?);
    }
    Ok(out)
}

/// Read a tab-separated `protein_a  protein_b  type` file with a header row.
/// Rows naming the same unordered pair are merged into one multi-label record,
/// in order of the pair's first appearance.
pub fn load_ppi(path: impl AsRef<Path>) -> Result<Vec<InteractionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ppi(&text)
}

pub fn parse_ppi(text: &str) -> Result<Vec<InteractionRecord>> {
    let mut records: Vec<InteractionRecord> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut seen_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let (a, b, ty) = (fields[0], fields[1], fields[2]);
        if a == b {
            return Err(Error::SelfInteraction {
                id: a.to_string(),
                line: line_no,
            });
        }
        let ty: InteractionType = ty.parse().map_err(|found| Error::UnknownInteractionType {
            found,
            line: line_no,
            valid: InteractionType::valid_names(),
        })?;
        let key = if a < b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        match index.get(&key) {
            Some(&i) => {
                records[i].types.insert(ty);
            }
            None => {
                index.insert(key, records.len());
                records.push(InteractionRecord {
                    protein_a: a.to_string(),
                    protein_b: b.to_string(),
                    types: BTreeSet::from([ty]),
                });
            }
        }
    }
    Ok(records)
}
