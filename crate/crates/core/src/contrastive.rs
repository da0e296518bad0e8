//! Perturbed interaction-graph views and the cross-view InfoNCE objective.
//!
//! A view zeroes feature entries with probability `rho` and rewires
//! `floor(rho * |R|)` distinct edge slots to uniformly drawn endpoints. Node
//! and edge perturbation draw from separate streams derived from the view
//! seed, so disabling one leaves the other unchanged.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_builder::EdgeList;
use crate::interaction_model::InteractionModel;
use crate::nn::losses;
use crate::rng::{rng_from, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum View {
    Alpha,
    Beta,
}

impl View {
    fn tag(self) -> u64 {
        match self {
            View::Alpha => tag::VIEW_ALPHA,
            View::Beta => tag::VIEW_BETA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub rho: f64,
    pub seed: u64,
    pub view: View,
}

impl PerturbSpec {
    pub fn new(rho: f64, seed: u64, view: View) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!("perturbation rate {rho} outside [0, 1]")));
        }
        Ok(PerturbSpec { rho, seed, view })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedView {
    pub features: Array2<f64>,
    pub edges: EdgeList,
    pub view: View,
    pub seed: u64,
    pub node_rho: f64,
    pub edge_rho: f64,
    /// Keep mask applied to the features (0 marks a zeroed entry).
    pub node_mask: Array2<f64>,
    /// Sorted edge slots that were rewired.
    pub rewired: Vec<usize>,
}

impl PerturbedView {
    pub fn zeroed_count(&self) -> usize {
        self.node_mask.iter().filter(|&&v| v == 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub tau: f64,
    pub gamma_in_con: f64,
    /// Applied as optimizer weight decay.
    pub lambda_in_con: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            tau: 0.6,
            gamma_in_con: 0.6,
            lambda_in_con: 1e-4,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("temperature {} must be positive", self.tau)));
        }
        if self.gamma_in_con < 0.0 || self.lambda_in_con < 0.0 {
            return Err(Error::InvalidParameter("contrastive weights must be non-negative".into()));
        }
        Ok(())
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("perturbation rate {rho} outside [0, 1]")))
    }
}

/// Zero each entry independently with probability `rho`. Returns the
/// perturbed features and the keep mask.
pub fn perturb_nodes(h: &Array2<f64>, spec: &PerturbSpec) -> Result<(Array2<f64>, Array2<f64>)> {
    check_rho(spec.rho)?;
    if spec.rho == 0.0 {
        return Ok((h.clone(), Array2::ones(h.dim())));
    }
    let mut rng = rng_from(spec.seed, &[spec.view.tag(), 0]);
    let mask = Array2::from_shape_fn(h.dim(), |_| if rng.random::<f64>() < spec.rho { 0.0 } else { 1.0 });
    Ok((h * &mask, mask))
}

/// Rewire `floor(rho * |R|)` distinct slots; each chosen slot gets a source
/// and a target drawn uniformly from `0..node_count`. Self loops and
/// duplicates are kept. Returns the new list and the sorted rewired slots.
pub fn perturb_edges(edges: &EdgeList, node_count: usize, spec: &PerturbSpec) -> Result<(EdgeList, Vec<usize>)> {
    check_rho(spec.rho)?;
    edges.validate(node_count)?;
    let count = (spec.rho * edges.len() as f64).floor() as usize;
    if count == 0 {
        return Ok((edges.clone(), Vec::new()));
    }
    let mut rng = rng_from(spec.seed, &[spec.view.tag(), 1]);
    let mut slots = sample(&mut rng, edges.len(), count).into_vec();
    slots.sort_unstable();
    let mut out = edges.clone();
    for &s in &slots {
        out.sources[s] = rng.random_range(0..node_count);
        out.targets[s] = rng.random_range(0..node_count);
    }
    Ok((out, slots))
}

/// Build one view with separate node and edge rates.
pub fn make_view(
    h: &Array2<f64>,
    edges: &EdgeList,
    view: View,
    seed: u64,
    node_rho: f64,
    edge_rho: f64,
) -> Result<PerturbedView> {
    let (features, node_mask) = perturb_nodes(h, &PerturbSpec::new(node_rho, seed, view)?)?;
    let (edges, rewired) = perturb_edges(edges, h.nrows(), &PerturbSpec::new(edge_rho, seed, view)?)?;
    Ok(PerturbedView {
        features,
        edges,
        view,
        seed,
        node_rho,
        edge_rho,
        node_mask,
        rewired,
    })
}

/// Eval-mode encodings of both views with the one shared parameter set.
pub fn encode_views(
    model: &InteractionModel,
    alpha: &PerturbedView,
    beta: &PerturbedView,
) -> Result<(Array2<f64>, Array2<f64>)> {
    Ok((
        model.encode(&alpha.features, &alpha.edges)?,
        model.encode(&beta.features, &beta.edges)?,
    ))
}

/// `-(1/N) sum_i log(exp(<a_i, b_i>/tau) / sum_{j != i} exp(<a_i, b_j>/tau))`.
pub fn info_nce(h_e: &Array2<f64>, h_v: &Array2<f64>, tau: f64) -> Result<f64> {
    if h_e.dim() != h_v.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", h_e.dim(), h_v.dim())));
    }
    if h_e.nrows() < 2 {
        return Err(Error::InvalidParameter("InfoNCE needs at least two proteins".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature {tau} must be positive")));
    }
    Ok(losses::info_nce_with_weights(h_e, h_v, tau).0)
}

pub fn loss_con(l_alpha: f64, l_beta: f64) -> f64 {
    l_alpha + l_beta
}

/// `L_IN + gamma_in_con * L_CON`; the norm penalty lives in the optimizer.
pub fn stage2_loss(l_in: f64, l_con: f64, cfg: &ContrastiveConfig) -> f64 {
    l_in + cfg.gamma_in_con * l_con
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction_model::InteractionConfig;
    use ndarray::{array, Axis};

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from(seed, &[55]);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn ring(n: usize) -> EdgeList {
        EdgeList::from_pairs((0..n).flat_map(|i| [(i, (i + 1) % n), ((i + 1) % n, i)]))
    }

    #[test]
    fn node_perturbation_limits() {
        let h = random(10, 4, 1);
        let (same, mask) = perturb_nodes(&h, &PerturbSpec::new(0.0, 3, View::Alpha).unwrap()).unwrap();
        assert_eq!(same, h);
        assert!(mask.iter().all(|&v| v == 1.0));
        let (zero, _) = perturb_nodes(&h, &PerturbSpec::new(1.0, 3, View::Alpha).unwrap()).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        assert!(PerturbSpec::new(1.5, 0, View::Beta).is_err());
    }

    #[test]
    fn node_perturbation_rate() {
        // 3 sigma of Binomial(10^4, 0.25) / 10^4 is 0.013
        let h = Array2::ones((100, 100));
        for seed in 0..5 {
            let (_, mask) = perturb_nodes(&h, &PerturbSpec::new(0.25, seed, View::Alpha).unwrap()).unwrap();
            let frac = mask.iter().filter(|&&v| v == 0.0).count() as f64 / 1e4;
            assert!((0.235..=0.265).contains(&frac), "{frac}");
        }
    }

    #[test]
    fn edge_perturbation_counts() {
        let edges = ring(50);
        assert_eq!(edges.len(), 100);
        let (same, slots) = perturb_edges(&edges, 50, &PerturbSpec::new(0.0, 1, View::Alpha).unwrap()).unwrap();
        assert_eq!(same, edges);
        assert!(slots.is_empty());

        let (out, slots) = perturb_edges(&edges, 50, &PerturbSpec::new(0.25, 1, View::Alpha).unwrap()).unwrap();
        assert_eq!(slots.len(), 25);
        assert_eq!(out.len(), edges.len());
        for s in 0..edges.len() {
            if slots.binary_search(&s).is_err() {
                assert_eq!((out.sources[s], out.targets[s]), (edges.sources[s], edges.targets[s]));
            }
        }
        out.validate(50).unwrap();

        let (_, all) = perturb_edges(&edges, 50, &PerturbSpec::new(1.0, 1, View::Alpha).unwrap()).unwrap();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn views_are_independent() {
        let h = random(100, 100, 2);
        let edges = ring(100);
        let a = make_view(&h, &edges, View::Alpha, 7, 0.25, 0.25).unwrap();
        let b = make_view(&h, &edges, View::Beta, 7, 0.25, 0.25).unwrap();
        assert_ne!(a.node_mask, b.node_mask);
        assert_ne!(a.rewired, b.rewired);
        // edge rewiring does not depend on the node rate
        let c = make_view(&h, &edges, View::Alpha, 7, 0.0, 0.25).unwrap();
        assert_eq!(a.edges, c.edges);
        assert_eq!(c.features, h);
    }

    #[test]
    fn shared_encoder_on_unperturbed_views() {
        let model = InteractionModel::new(InteractionConfig { hidden: 5, layers: 2 }, 3, 1).unwrap();
        let h = random(6, 3, 4);
        let edges = ring(6);
        let a = make_view(&h, &edges, View::Alpha, 1, 0.0, 0.0).unwrap();
        let b = make_view(&h, &edges, View::Beta, 2, 0.0, 0.0).unwrap();
        let (ea, eb) = encode_views(&model, &a, &b).unwrap();
        let base = model.encode(&h, &edges).unwrap();
        assert_eq!(ea, base);
        assert_eq!(eb, base);
    }

    #[test]
    fn info_nce_identical_rows() {
        let h = Array2::from_elem((5, 3), 0.7);
        assert!((info_nce(&h, &h, 0.5).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn info_nce_two_rows_by_hand() {
        let h = array![[1.0, 0.0], [0.0, 1.0]];
        assert!((info_nce(&h, &h, 1.0).unwrap() + 1.0).abs() < 1e-12);
        assert!(info_nce(&h.slice(ndarray::s![..1, ..]).to_owned(), &h.slice(ndarray::s![..1, ..]).to_owned(), 1.0).is_err());
        assert!(info_nce(&h, &h, 0.0).is_err());
    }

    #[test]
    fn info_nce_large_tau() {
        let a = random(6, 4, 5);
        let b = random(6, 4, 6);
        assert!((info_nce(&a, &b, 1e9).unwrap() - 5f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn info_nce_permutation_invariant() {
        let a = random(5, 3, 8);
        let b = random(5, 3, 9);
        let perm = [3, 0, 4, 2, 1];
        let l1 = info_nce(&a, &b, 0.3).unwrap();
        let l2 = info_nce(&a.select(Axis(0), &perm), &b.select(Axis(0), &perm), 0.3).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn loss_combinations() {
        assert_eq!(loss_con(0.0, 0.0), 0.0);
        assert_eq!(loss_con(0.3, 0.0), 0.3);
        assert_eq!(loss_con(0.3, 1.1), loss_con(1.1, 0.3));
        let cfg = ContrastiveConfig {
            gamma_in_con: 0.5,
            ..Default::default()
        };
        assert!((stage2_loss(1.0, 0.4, &cfg) - 1.2).abs() < 1e-15);
        let off = ContrastiveConfig {
            gamma_in_con: 0.0,
            ..Default::default()
        };
        assert_eq!(stage2_loss(0.8, 3.0, &off), 0.8);
        assert_eq!(stage2_loss(0.0, 0.0, &cfg), 0.0);
    }
}
