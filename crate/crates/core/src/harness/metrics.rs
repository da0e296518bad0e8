//! Multi-label evaluation. Predictions and labels are 0/1 matrices with one
//! row per pair and one column per interaction type; any value above 0.5
//! counts as positive.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splitter::SubsetTag;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Counts {
    fn add(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    fn over<'a>(pred: impl Iterator<Item = &'a f64>, truth: impl Iterator<Item = &'a f64>) -> Counts {
        let mut c = Counts::default();
        for (&p, &t) in pred.zip(truth) {
            c.add(p > 0.5, t > 0.5);
        }
        c
    }

    /// `2 TP / (2 TP + FP + FN)`, or 1 when there are no positives at all.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(Error::Shape(format!("predictions {:?} vs labels {:?}", a.dim(), b.dim())))
    }
}

/// Confusion counts pooled over every cell.
pub fn micro_counts(pred: &Array2<f64>, labels: &Array2<f64>) -> Result<Counts> {
    same_shape(pred, labels)?;
    Ok(Counts::over(pred.iter(), labels.iter()))
}

/// Micro-averaged F1. Defined as 1 when neither labels nor predictions
/// contain a positive.
pub fn micro_f1(pred: &Array2<f64>, labels: &Array2<f64>) -> Result<f64> {
    Ok(micro_counts(pred, labels)?.f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub accuracy: f64,
    pub f1: f64,
    /// Column had no positive label and no positive prediction, so `f1` is 1
    /// by convention.
    pub f1_by_convention: bool,
}

/// Accuracy and binary F1 for every label column.
pub fn per_type_metrics(pred: &Array2<f64>, labels: &Array2<f64>) -> Result<Vec<TypeMetrics>> {
    same_shape(pred, labels)?;
    Ok(pred
        .columns()
        .into_iter()
        .zip(labels.columns())
        .map(|(p, y): (ArrayView1<f64>, ArrayView1<f64>)| {
            let c = Counts::over(p.iter(), y.iter());
            let n = c.total();
            TypeMetrics {
                accuracy: if n == 0 { 1.0 } else { (c.tp + c.tn) as f64 / n as f64 },
                f1: c.f1(),
                f1_by_convention: c.tp + c.fp + c.fn_ == 0,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Micro-averaged precision/recall at every distinct probability, in
/// descending threshold order. A cell is positive when its probability is
/// at least the threshold. Recall is 1 when there are no positive labels.
pub fn pr_curve(prob: &Array2<f64>, labels: &Array2<f64>) -> Result<Vec<PrPoint>> {
    same_shape(prob, labels)?;
    if let Some(p) = prob.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")));
    }
    let mut cells: Vec<(f64, bool)> = prob.iter().zip(labels).map(|(&p, &y)| (p, y > 0.5)).collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let positives = cells.iter().filter(|c| c.1).count();
    let mut out = Vec::new();
    let (mut tp, mut predicted) = (0usize, 0usize);
    let mut i = 0;
    while i < cells.len() {
        let t = cells[i].0;
        while i < cells.len() && cells[i].0 == t {
            predicted += 1;
            tp += cells[i].1 as usize;
            i += 1;
        }
        out.push(PrPoint {
            threshold: t,
            precision: tp as f64 / predicted as f64,
            recall: if positives == 0 { 1.0 } else { tp as f64 / positives as f64 },
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub tag: SubsetTag,
    pub count: usize,
    pub fraction: f64,
    /// Absent when the subset is empty.
    pub micro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub subsets: Vec<SubsetScore>,
    /// Subset micro-F1 values weighted by subset size.
    pub weighted_f1: f64,
}

/// Micro-F1 within each of BS, ES and NS. `tags[p]` belongs to row `p`.
pub fn subset_report(pred: &Array2<f64>, labels: &Array2<f64>, tags: &[SubsetTag]) -> Result<SubsetReport> {
    same_shape(pred, labels)?;
    if tags.len() != pred.nrows() {
        return Err(Error::Shape(format!("{} tags for {} pairs", tags.len(), pred.nrows())));
    }
    let n = tags.len();
    let mut subsets = Vec::new();
    let mut weighted = 0.0;
    for tag in [SubsetTag::BS, SubsetTag::ES, SubsetTag::NS] {
        let rows: Vec<usize> = (0..n).filter(|&i| tags[i] == tag).collect();
        let micro = if rows.is_empty() {
            None
        } else {
            let p = pred.select(ndarray::Axis(0), &rows);
            let y = labels.select(ndarray::Axis(0), &rows);
            Some(micro_f1(&p, &y)?)
        };
        let fraction = if n == 0 { 0.0 } else { rows.len() as f64 / n as f64 };
        weighted += fraction * micro.unwrap_or(0.0);
        subsets.push(SubsetScore {
            tag,
            count: rows.len(),
            fraction,
            micro_f1: micro,
        });
    }
    Ok(SubsetReport {
        subsets,
        weighted_f1: weighted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pairs: usize,
    pub micro_f1: f64,
    pub per_type: Vec<TypeMetrics>,
    pub pr_curve: Vec<PrPoint>,
    pub subsets: Option<SubsetReport>,
}

impl MetricsReport {
    pub fn build(
        prob: &Array2<f64>,
        pred: &Array2<f64>,
        labels: &Array2<f64>,
        tags: Option<&[SubsetTag]>,
    ) -> Result<Self> {
        Ok(MetricsReport {
            pairs: labels.nrows(),
            micro_f1: micro_f1(pred, labels)?,
            per_type: per_type_metrics(pred, labels)?,
            pr_curve: pr_curve(prob, labels)?,
            subsets: tags.map(|t| subset_report(pred, labels, t)).transpose()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn worked_example() {
        let y = array![[1.0, 0.0], [1.0, 1.0]];
        let p = array![[1.0, 1.0], [1.0, 0.0]];
        let c = micro_counts(&p, &y).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 1));
        assert!((micro_f1(&p, &y).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_edge_cases() {
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(micro_f1(&y, &y).unwrap(), 1.0);
        assert_eq!(micro_f1(&Array2::zeros((2, 2)), &y).unwrap(), 0.0);
        assert_eq!(micro_f1(&Array2::zeros((2, 2)), &Array2::zeros((2, 2))).unwrap(), 1.0);
        assert!(micro_f1(&Array2::zeros((2, 3)), &y).is_err());
    }

    #[test]
    fn per_type_perfect_and_inverted() {
        let y = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let mut p = y.clone();
        p[[0, 1]] = 1.0;
        p[[1, 1]] = 0.0;
        let m = per_type_metrics(&p, &y).unwrap();
        assert_eq!((m[0].accuracy, m[0].f1), (1.0, 1.0));
        assert_eq!(m[1].accuracy, 0.0);
        assert!(m[2].f1_by_convention && m[2].f1 == 1.0);
        assert!(!m[0].f1_by_convention);
    }

    #[test]
    fn pr_separated_and_constant() {
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        let prob = array![[0.9, 0.1], [0.2, 0.8]];
        let curve = pr_curve(&prob, &y).unwrap();
        assert!(curve.iter().any(|p| p.precision == 1.0 && p.recall == 1.0));
        assert!(curve.windows(2).all(|w| w[0].recall <= w[1].recall && w[0].threshold > w[1].threshold));

        let flat = Array2::from_elem((2, 2), 0.3);
        let curve = pr_curve(&flat, &y).unwrap();
        assert_eq!(curve.len(), 1);
        assert_eq!(curve[0].precision, 0.5);
        assert_eq!(curve[0].recall, 1.0);
        assert!(pr_curve(&Array2::from_elem((2, 2), 1.5), &y).is_err());
    }

    #[test]
    fn subsets() {
        let y = array![[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let p = array![[1.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        let tags = [SubsetTag::BS, SubsetTag::BS, SubsetTag::NS];
        let r = subset_report(&p, &y, &tags).unwrap();
        let bs = &r.subsets[0];
        assert_eq!(bs.count, 2);
        assert!((bs.micro_f1.unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(r.subsets[1].micro_f1, None);
        assert!((r.subsets[2].micro_f1.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.weighted_f1 - (2.0 / 3.0 * 0.8 + 1.0 / 3.0 * 2.0 / 3.0)).abs() < 1e-12);

        let all_bs = [SubsetTag::BS; 3];
        let r = subset_report(&p, &y, &all_bs).unwrap();
        assert_eq!(r.subsets[0].micro_f1.unwrap(), micro_f1(&p, &y).unwrap());
        assert_eq!(r.subsets[0].fraction, 1.0);
    }
}
