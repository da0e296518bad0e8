use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ppi_core::harness::{AblationFlags, RunConfig};
use ppi_core::splitter::SplitScheme;

#[derive(Parser, Debug)]
#[command(name = "ppi", version, about = "Two-stage protein-protein interaction prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a planted synthetic dataset.
    SynthData(SynthArgs),
    /// Build residue structure graphs and fill the graph cache.
    BuildGraphs(RunArgs),
    /// Partition interaction pairs into train/val/test.
    Split(SplitArgs),
    /// Stage 1: pretrain the residue autoencoder and pool protein embeddings.
    Pretrain(TrainArgs),
    /// Stage 2: train the interaction model (runs stage 1 unless embeddings are given).
    Train(TrainArgs),
    /// Score a trained interaction model on one split subset.
    Evaluate(EvaluateArgs),
    /// Run the ablation grid.
    Ablate(AblateArgs),
    /// Write protein embeddings from a stage-1 checkpoint or a stage-2 model.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub proteins: usize,
    #[arg(long, default_value_t = 60)]
    pub pairs: usize,
    #[arg(long, default_value_t = 30)]
    pub min_len: usize,
    #[arg(long, default_value_t = 50)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Where to write the split JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Pooled stage-1 embeddings to train on instead of pretraining (train only).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Stage-2 model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Pooled stage-1 embeddings the model was trained on.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    pub set: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// One grid cell as comma-separated flag names; repeat for more cells.
    /// Without any cell only the baseline runs.
    #[arg(long = "cell")]
    pub cells: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Stage-1 checkpoint JSON; exports pooled residue embeddings.
    #[arg(long, conflicts_with = "model")]
    pub checkpoint: Option<PathBuf>,
    /// Stage-2 model JSON; exports GIN embeddings (needs `--embeddings`).
    #[arg(long, requires = "embeddings")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags mirroring `RunConfig`. Each one overrides the value loaded from
/// `--config` (or the defaults).
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the small single-core configuration.
    #[arg(long)]
    pub desk: bool,
    /// Preset hyperparameters for shs27k, shs148k or string (uses the split scheme).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Run everything on the calling thread.
    #[arg(long)]
    pub sequential: bool,

    #[arg(long)]
    pub proteins: Option<PathBuf>,
    #[arg(long)]
    pub ppi: Option<PathBuf>,
    #[arg(long)]
    pub properties: Option<PathBuf>,
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    #[arg(long)]
    pub graph_cache: Option<PathBuf>,

    /// random, bfs or dfs.
    #[arg(long)]
    pub scheme: Option<SplitScheme>,
    #[arg(long)]
    pub split_seed: Option<u64>,

    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,

    #[arg(long)]
    pub s1_epochs: Option<usize>,
    #[arg(long)]
    pub s1_batch_size: Option<usize>,
    #[arg(long)]
    pub s1_dropout: Option<f64>,
    #[arg(long)]
    pub mask_rate: Option<f64>,
    #[arg(long)]
    pub s1_hidden: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub head_dim: Option<usize>,
    #[arg(long)]
    pub s1_layers: Option<usize>,
    #[arg(long)]
    pub gamma_str: Option<f64>,
    #[arg(long)]
    pub lambda_str: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,

    #[arg(long)]
    pub s2_epochs: Option<usize>,
    #[arg(long)]
    pub s2_dropout: Option<f64>,
    #[arg(long)]
    pub s2_hidden: Option<usize>,
    #[arg(long)]
    pub s2_layers: Option<usize>,
    #[arg(long)]
    pub perturb_rate: Option<f64>,
    #[arg(long)]
    pub node_perturb_rate: Option<f64>,
    #[arg(long)]
    pub edge_perturb_rate: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma_in_con: Option<f64>,
    #[arg(long)]
    pub lambda_in_con: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Ablation flag (no_L_RE, no_L_MSRE, no_recon, no_con_alpha, no_con_beta,
    /// no_con, no_node_perturb, no_edge_perturb, no_perturb); repeatable.
    #[arg(long = "ablation")]
    pub ablation: Vec<String>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunArgs {
    pub fn resolve(&self, require_seed: bool) -> Result<RunConfig> {
        if require_seed && self.seed.is_none() {
            bail!("--seed is required for this command");
        }
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None if self.desk => RunConfig::desk_scale(),
            None => RunConfig::default(),
        };
        if let Some(scheme) = self.scheme {
            cfg.split.scheme = scheme;
        }
        if let Some(dataset) = &self.preset {
            let scheme = cfg.split.scheme;
            cfg.apply_preset(dataset, scheme)?;
        }
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.learning_rate, self.lr);
        if self.sequential {
            cfg.parallel = false;
        }

        let d = &mut cfg.data;
        for (slot, value) in [
            (&mut d.proteins, &self.proteins),
            (&mut d.ppi, &self.ppi),
            (&mut d.properties, &self.properties),
            (&mut d.split_file, &self.split_file),
            (&mut d.graph_cache, &self.graph_cache),
        ] {
            if value.is_some() {
                slot.clone_from(value);
            }
        }
        set(&mut cfg.split.seed, self.split_seed);
        set(&mut cfg.graph.radius, self.radius);
        set(&mut cfg.graph.k, self.k);

        let s1 = &mut cfg.stage1;
        set(&mut s1.epochs, self.s1_epochs);
        set(&mut s1.batch_size, self.s1_batch_size);
        set(&mut s1.dropout, self.s1_dropout);
        set(&mut s1.mask_rate, self.mask_rate);
        set(&mut s1.encoder.hidden, self.s1_hidden);
        set(&mut s1.encoder.heads, self.heads);
        set(&mut s1.encoder.head_dim, self.head_dim);
        set(&mut s1.encoder.layers, self.s1_layers);
        set(&mut s1.loss.gamma_str, self.gamma_str);
        set(&mut s1.loss.lambda_str, self.lambda_str);
        set(&mut s1.loss.delta, self.delta);

        let s2 = &mut cfg.stage2;
        set(&mut s2.epochs, self.s2_epochs);
        set(&mut s2.dropout, self.s2_dropout);
        set(&mut s2.model.hidden, self.s2_hidden);
        set(&mut s2.model.layers, self.s2_layers);
        set(&mut s2.perturb_rate, self.perturb_rate);
        if self.node_perturb_rate.is_some() {
            s2.node_perturb_rate = self.node_perturb_rate;
        }
        if self.edge_perturb_rate.is_some() {
            s2.edge_perturb_rate = self.edge_perturb_rate;
        }
        set(&mut s2.contrastive.tau, self.tau);
        set(&mut s2.contrastive.gamma_in_con, self.gamma_in_con);
        set(&mut s2.contrastive.lambda_in_con, self.lambda_in_con);
        set(&mut s2.threshold, self.threshold);

        if !self.ablation.is_empty() {
            let extra = AblationFlags::from_names(&self.ablation)?;
            cfg.ablation = merge(cfg.ablation, extra);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(a: AblationFlags, b: AblationFlags) -> AblationFlags {
    let names: Vec<&str> = a.names().into_iter().chain(b.names()).collect();
    AblationFlags::from_names(&names).expect("names come from valid flags")
}

/// Parse one `--cell` value.
pub fn parse_cell(cell: &str) -> Result<AblationFlags> {
    let names: Vec<&str> = cell.split(',').map(str::trim).filter(|s| !s.is_empty() && *s != "baseline").collect();
    Ok(AblationFlags::from_names(&names)?)
}
