use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contrastive::ContrastiveConfig;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph_builder::{DEFAULT_K, DEFAULT_RADIUS};
use crate::interaction_model::{InteractionConfig, DEFAULT_THRESHOLD};
use crate::residue_encoder::{EncoderConfig, Stage1LossWeights};
use crate::splitter::SplitScheme;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub proteins: Option<PathBuf>,
    pub ppi: Option<PathBuf>,
    /// Property table; the bundled one when absent.
    pub properties: Option<PathBuf>,
    /// Precomputed split file; generated from `split` when absent.
    pub split_file: Option<PathBuf>,
    pub graph_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub scheme: SplitScheme,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            scheme: SplitScheme::Random,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub radius: f64,
    pub k: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            radius: DEFAULT_RADIUS,
            k: DEFAULT_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub encoder: EncoderConfig,
    pub epochs: usize,
    /// Proteins per optimizer step.
    pub batch_size: usize,
    pub dropout: f64,
    pub mask_rate: f64,
    pub loss: Stage1LossWeights,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            encoder: EncoderConfig::default(),
            epochs: 50,
            batch_size: 128,
            dropout: 0.2,
            mask_rate: 0.25,
            loss: Stage1LossWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    pub model: InteractionConfig,
    pub epochs: usize,
    pub dropout: f64,
    /// Shared node and edge perturbation rate of both views.
    pub perturb_rate: f64,
    /// Overrides `perturb_rate` for feature zeroing.
    pub node_perturb_rate: Option<f64>,
    /// Overrides `perturb_rate` for edge rewiring.
    pub edge_perturb_rate: Option<f64>,
    pub contrastive: ContrastiveConfig,
    pub threshold: f64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            model: InteractionConfig::default(),
            epochs: 800,
            dropout: 0.2,
            perturb_rate: 0.1,
            node_perturb_rate: None,
            edge_perturb_rate: None,
            contrastive: ContrastiveConfig::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Ablation switches. Several flags may imply the same effective setting;
/// use the accessor methods rather than the raw fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub no_l_re: bool,
    pub no_l_msre: bool,
    pub no_recon: bool,
    pub no_con_alpha: bool,
    pub no_con_beta: bool,
    pub no_con: bool,
    pub no_node_perturb: bool,
    pub no_edge_perturb: bool,
    pub no_perturb: bool,
}

pub const ABLATION_NAMES: [&str; 9] = [
    "no_L_RE",
    "no_L_MSRE",
    "no_recon",
    "no_con_alpha",
    "no_con_beta",
    "no_con",
    "no_node_perturb",
    "no_edge_perturb",
    "no_perturb",
];

impl AblationFlags {
    fn slots(&mut self) -> [&mut bool; 9] {
        [
            &mut self.no_l_re,
            &mut self.no_l_msre,
            &mut self.no_recon,
            &mut self.no_con_alpha,
            &mut self.no_con_beta,
            &mut self.no_con,
            &mut self.no_node_perturb,
            &mut self.no_edge_perturb,
            &mut self.no_perturb,
        ]
    }

    /// Parse flag names, case-insensitively, e.g. `["no_recon"]`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut flags = AblationFlags::default();
        for name in names {
            let name = name.as_ref();
            let pos = ABLATION_NAMES
                .iter()
                .position(|n| n.eq_ignore_ascii_case(name))
                .ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "unknown ablation flag '{name}' (expected one of {})",
                        ABLATION_NAMES.join(", ")
                    ))
                })?;
            *flags.slots()[pos] = true;
        }
        Ok(flags)
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut copy = *self;
        copy.slots()
            .into_iter()
            .zip(ABLATION_NAMES)
            .filter(|(on, _)| **on)
            .map(|(_, n)| n)
            .collect()
    }

    pub fn use_l_re(&self) -> bool {
        !(self.no_recon || self.no_l_re)
    }

    pub fn use_l_msre(&self) -> bool {
        !(self.no_recon || self.no_l_msre)
    }

    pub fn con_alpha(&self) -> bool {
        !(self.no_con || self.no_con_alpha)
    }

    pub fn con_beta(&self) -> bool {
        !(self.no_con || self.no_con_beta)
    }

    pub fn node_perturb(&self) -> bool {
        !(self.no_perturb || self.no_node_perturb)
    }

    pub fn edge_perturb(&self) -> bool {
        !(self.no_perturb || self.no_edge_perturb)
    }
}

impl fmt::Display for AblationFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.names();
        if names.is_empty() {
            f.write_str("baseline")
        } else {
            f.write_str(&names.join("+"))
        }
    }
}

/// Everything a run depends on. Serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub learning_rate: f64,
    /// Run graph kernels on the rayon pool. Results are identical either way.
    pub parallel: bool,
    pub data: DataPaths,
    pub split: SplitConfig,
    pub graph: GraphConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub ablation: AblationFlags,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            learning_rate: 1e-3,
            parallel: true,
            data: DataPaths::default(),
            split: SplitConfig::default(),
            graph: GraphConfig::default(),
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            ablation: AblationFlags::default(),
        }
    }
}

/// Per-dataset, per-scheme hyperparameter presets:
/// dropout, mask rate, scale factor, perturbation rate, temperature,
/// gamma_str, gamma_in_con.
const PRESETS: [(&str, SplitScheme, [f64; 7]); 9] = [
    ("shs27k", SplitScheme::Random, [0.2, 0.25, 1.5, 0.1, 0.6, 0.5, 0.6]),
    ("shs27k", SplitScheme::Bfs, [0.2, 0.25, 1.5, 0.1, 0.1, 0.5, 0.5]),
    ("shs27k", SplitScheme::Dfs, [0.2, 0.25, 1.5, 0.25, 0.2, 0.5, 0.6]),
    ("shs148k", SplitScheme::Random, [0.3, 0.25, 1.5, 0.1, 0.4, 0.5, 0.6]),
    ("shs148k", SplitScheme::Bfs, [0.2, 0.25, 1.5, 0.25, 0.2, 0.5, 0.5]),
    ("shs148k", SplitScheme::Dfs, [0.2, 0.25, 1.5, 0.25, 0.2, 0.5, 0.5]),
    ("string", SplitScheme::Random, [0.1, 0.25, 1.5, 0.1, 0.2, 0.5, 0.5]),
    ("string", SplitScheme::Bfs, [0.2, 0.25, 1.5, 0.25, 0.2, 0.5, 0.5]),
    ("string", SplitScheme::Dfs, [0.2, 0.25, 1.5, 0.25, 0.2, 0.5, 0.5]),
];

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Apply the preset hyperparameters for `dataset` (shs27k, shs148k or
    /// string) under `scheme`.
    pub fn apply_preset(&mut self, dataset: &str, scheme: SplitScheme) -> Result<()> {
        let (_, _, v) = PRESETS
            .iter()
            .find(|(d, s, _)| d.eq_ignore_ascii_case(dataset) && *s == scheme)
            .ok_or_else(|| Error::InvalidParameter(format!("no preset for {dataset}/{scheme}")))?;
        self.split.scheme = scheme;
        self.stage1.dropout = v[0];
        self.stage2.dropout = v[0];
        self.stage1.mask_rate = v[1];
        self.stage1.loss.delta = v[2];
        self.stage2.perturb_rate = v[3];
        self.stage2.contrastive.tau = v[4];
        self.stage1.loss.gamma_str = v[5];
        self.stage2.contrastive.gamma_in_con = v[6];
        Ok(())
    }

    /// Small widths and epoch budgets for single-core runs on the synthetic
    /// dataset. Stage 2 drops dropout and uses a warmer
    /// contrastive temperature, since unnormalized similarities of a few
    /// dozen proteins otherwise swamp the interaction loss. Loss weights and
    /// optimizer settings keep their defaults.
    pub fn desk_scale() -> Self {
        let mut c = RunConfig::default();
        c.stage1.encoder = EncoderConfig {
            hidden: 32,
            heads: 2,
            head_dim: 32,
            layers: 2,
        };
        c.stage1.epochs = 30;
        c.stage2.dropout = 0.0;
        c.stage2.contrastive.tau = 5.0;
        c.stage2.model = InteractionConfig { hidden: 64, layers: 3 };
        c.stage2.epochs = 200;
        c
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    pub fn node_perturb_rate(&self) -> f64 {
        if self.ablation.node_perturb() {
            self.stage2.node_perturb_rate.unwrap_or(self.stage2.perturb_rate)
        } else {
            0.0
        }
    }

    pub fn edge_perturb_rate(&self) -> f64 {
        if self.ablation.edge_perturb() {
            self.stage2.edge_perturb_rate.unwrap_or(self.stage2.perturb_rate)
        } else {
            0.0
        }
    }

    /// Whether stage 2 builds contrastive views at all.
    pub fn contrastive_active(&self) -> bool {
        self.stage2.contrastive.gamma_in_con > 0.0 && (self.ablation.con_alpha() || self.ablation.con_beta())
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("stage1.dropout", self.stage1.dropout),
            ("stage1.mask_rate", self.stage1.mask_rate),
            ("stage2.dropout", self.stage2.dropout),
            ("stage2.perturb_rate", self.stage2.perturb_rate),
            ("stage2.node_perturb_rate", self.stage2.node_perturb_rate.unwrap_or(0.0)),
            ("stage2.edge_perturb_rate", self.stage2.edge_perturb_rate.unwrap_or(0.0)),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidParameter(format!("{name} = {r} outside [0, 1]")));
            }
        }
        if self.stage1.dropout >= 1.0 || self.stage2.dropout >= 1.0 {
            return Err(Error::InvalidParameter("dropout rate must be below 1".into()));
        }
        if self.stage1.epochs == 0 || self.stage2.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if self.stage1.batch_size == 0 {
            return Err(Error::InvalidParameter("stage1.batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.stage2.threshold > 0.0 && self.stage2.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!("threshold {} outside (0, 1)", self.stage2.threshold)));
        }
        let w = &self.stage1.loss;
        if w.gamma_str < 0.0 || w.lambda_str < 0.0 || w.delta <= 0.0 {
            return Err(Error::InvalidParameter("stage-1 loss weights out of range".into()));
        }
        self.stage1.encoder.validate()?;
        self.stage2.model.validate()?;
        self.stage2.contrastive.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(c.stage1.mask_rate, 0.25);
        assert_eq!(c.stage1.loss.delta, 1.5);
        assert_eq!(c.stage1.loss.lambda_str, 1e-4);
        assert_eq!(c.stage1.epochs, 50);
        assert_eq!(c.stage2.epochs, 800);
        assert_eq!(c.stage2.model.hidden, 1024);
        assert_eq!(c.stage2.model.layers, 3);
        assert_eq!(c.stage1.encoder.layers, 4);
        assert_eq!(c.stage1.encoder.heads, 5);
    }

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let mut c = RunConfig::default();
        c.seed = 42;
        c.ablation.no_con = true;
        let text = toml::to_string_pretty(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: RunConfig = toml::from_str("seed = 3\n[stage2]\nepochs = 10\n").unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.stage2.epochs, 10);
        assert_eq!(partial.stage1, Stage1Config::default());
    }

    #[test]
    fn presets() {
        let mut c = RunConfig::default();
        c.apply_preset("SHS27k", SplitScheme::Dfs).unwrap();
        assert_eq!(c.stage2.perturb_rate, 0.25);
        assert_eq!(c.stage2.contrastive.tau, 0.2);
        assert_eq!(c.stage2.contrastive.gamma_in_con, 0.6);
        assert!(c.apply_preset("yeast", SplitScheme::Bfs).is_err());
    }

    #[test]
    fn validation_rejects_bad_rates() {
        let mut c = RunConfig::default();
        c.stage1.mask_rate = 1.2;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.stage2.epochs = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn flag_mapping() {
        let f = AblationFlags::from_names(&["no_recon"]).unwrap();
        assert!(!f.use_l_re() && !f.use_l_msre());
        let f = AblationFlags::from_names(&["NO_L_MSRE"]).unwrap();
        assert!(f.use_l_re() && !f.use_l_msre());
        let a = AblationFlags::from_names(&["no_con"]).unwrap();
        let b = AblationFlags::from_names(&["no_con_alpha", "no_con_beta"]).unwrap();
        assert_eq!((a.con_alpha(), a.con_beta()), (b.con_alpha(), b.con_beta()));
        let p = AblationFlags::from_names(&["no_perturb"]).unwrap();
        assert!(p.con_alpha() && p.con_beta() && !p.node_perturb() && !p.edge_perturb());
        assert_eq!(AblationFlags::default().to_string(), "baseline");
        assert_eq!(b.to_string(), "no_con_alpha+no_con_beta");
        assert!(AblationFlags::from_names(&["bogus"]).is_err());
        assert_eq!(AblationFlags::from_names(&b.names()).unwrap(), b);
    }

    #[test]
    fn perturb_rates_follow_flags() {
        let mut c = RunConfig::default();
        c.stage2.edge_perturb_rate = Some(0.3);
        assert_eq!((c.node_perturb_rate(), c.edge_perturb_rate()), (0.1, 0.3));
        c.ablation.no_node_perturb = true;
        assert_eq!(c.node_perturb_rate(), 0.0);
        c.stage2.contrastive.gamma_in_con = 0.0;
        assert!(!c.contrastive_active());
    }
}
