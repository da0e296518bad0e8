//! Two-stage protein-protein interaction prediction.
//!
//! Stage 1 pretrains a heterogeneous graph-attention autoencoder on residue
//! structure graphs with standard and masked feature reconstruction, and pools
//! residue embeddings into one vector per protein. Stage 2 runs a GIN over the
//! protein interaction graph, fuses pair embeddings by sum and product, and
//! trains a multi-label classifier jointly with a two-view contrastive
//! objective over perturbed copies of the interaction graph.

pub mod contrastive;
pub mod data_model;
pub mod error;
pub mod exec;
pub mod graph_builder;
pub mod harness;
pub mod interaction_model;
pub mod nn;
pub mod residue_encoder;
pub mod rng;
pub mod splitter;

pub use error::{Error, Result};
pub use exec::Exec;
