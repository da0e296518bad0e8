//! Text outputs: JSON checkpoints and reports, tab-separated logs, predictions
//! and embedding tables. Floats are written in shortest round-trip form, so
//! re-reading a table reproduces the values bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::stage1::Stage1Row;
use super::stage2::{PairPrediction, Stage2Row};
use crate::data_model::{InteractionRecord, InteractionType, ProteinRecord};
use crate::error::{Error, Result};

fn write(path: &Path, body: String) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write(path.as_ref(), serde_json::to_string_pretty(value)?)
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// JSON-lines protein file, readable by `load_proteins`.
pub fn write_proteins(path: impl AsRef<Path>, proteins: &[ProteinRecord]) -> Result<()> {
    let mut out = String::new();
    for p in proteins {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    write(path.as_ref(), out)
}

/// Tab-separated interaction file, one row per pair and type.
pub fn write_ppi(path: impl AsRef<Path>, records: &[InteractionRecord]) -> Result<()> {
    let mut out = String::from("protein_a\tprotein_b\ttype\n");
    for r in records {
        for t in &r.types {
            let _ = writeln!(out, "{}\t{}\t{t}", r.protein_a, r.protein_b);
        }
    }
    write(path.as_ref(), out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn stage1_log_tsv(rows: &[Stage1Row]) -> String {
    let mut out = String::from("epoch\ttotal\tl_re\tl_msre\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.epoch, r.total, opt(r.l_re), opt(r.l_msre));
    }
    out
}

pub fn stage2_log_tsv(rows: &[Stage2Row]) -> String {
    let mut out = String::from("epoch\ttotal\tl_in\tl_con_alpha\tl_con_beta\ttrain_f1\tval_f1\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.epoch,
            r.total,
            r.l_in,
            opt(r.l_con_alpha),
            opt(r.l_con_beta),
            r.train_f1,
            r.val_f1
        );
    }
    out
}

pub fn write_stage1_log(path: impl AsRef<Path>, rows: &[Stage1Row]) -> Result<()> {
    write(path.as_ref(), stage1_log_tsv(rows))
}

pub fn write_stage2_log(path: impl AsRef<Path>, rows: &[Stage2Row]) -> Result<()> {
    write(path.as_ref(), stage2_log_tsv(rows))
}

pub fn predictions_tsv(rows: &[PairPrediction]) -> String {
    let mut out = String::from("protein_a\tprotein_b");
    for t in InteractionType::ALL {
        let _ = write!(out, "\tprob_{t}");
    }
    for t in InteractionType::ALL {
        let _ = write!(out, "\tpred_{t}");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&r.protein_a);
        out.push('\t');
        out.push_str(&r.protein_b);
        for p in &r.probabilities {
            let _ = write!(out, "\t{p}");
        }
        for p in &r.predicted {
            let _ = write!(out, "\t{p}");
        }
        out.push('\n');
    }
    out
}

pub fn write_predictions(path: impl AsRef<Path>, rows: &[PairPrediction]) -> Result<()> {
    write(path.as_ref(), predictions_tsv(rows))
}

/// `id  v1  v2 ...` per row, no header.
pub fn write_embeddings<'a>(
    path: impl AsRef<Path>,
    rows: impl IntoIterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    let mut out = String::new();
    for (id, values) in rows {
        out.push_str(id);
        for v in values {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    write(path.as_ref(), out)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_string();
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("bad value '{f}': {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if out.insert(id.clone(), values).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("duplicate protein {id}"),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{load_ppi, load_proteins};
    use crate::harness::synth::{generate, SynthSpec};

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate(&SynthSpec::default()).unwrap();
        write_proteins(dir.path().join("p.jsonl"), &d.proteins).unwrap();
        write_ppi(dir.path().join("ppi.tsv"), &d.interactions).unwrap();
        assert_eq!(load_proteins(dir.path().join("p.jsonl")).unwrap(), d.proteins);
        assert_eq!(load_ppi(dir.path().join("ppi.tsv")).unwrap(), d.interactions);
    }

    #[test]
    fn embeddings_roundtrip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let a = vec![0.1 + 0.2, -1e-300, 3.0];
        let b = vec![f64::MIN_POSITIVE, 2.5, -0.0];
        let path = dir.path().join("sub/emb.tsv");
        write_embeddings(&path, [("A", a.as_slice()), ("B", b.as_slice())]).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back["A"], a);
        assert_eq!(back["B"].iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn prediction_rows() {
        let rows = vec![PairPrediction {
            protein_a: "A".into(),
            protein_b: "B".into(),
            probabilities: vec![0.5; 7],
            predicted: vec![1; 7],
        }];
        let text = predictions_tsv(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0].split('\t').count(), 16);
        assert_eq!(lines[1].split('\t').count(), 16);
        assert!(lines[0].starts_with("protein_a\tprotein_b\tprob_reaction"));
    }
}
