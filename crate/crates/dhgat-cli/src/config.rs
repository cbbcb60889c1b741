//! Declarative experiment configuration, read from TOML. Unknown keys are
//! rejected so a typo cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dhgat_core::graph::LatticeMode;
use dhgat_core::liar::Attr;
use dhgat_core::model::{LossWeights, ModelDims};
use dhgat_core::rng::fnv1a;
use dhgat_core::train::TrainConfig;

use crate::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// The tab-separated political statement corpus.
    Liar,
    /// A seeded planted-partition graph; no files needed.
    Synthetic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: Source,
    /// Directory holding the corpus TSV files. The `DHGAT_LIAR_DIR`
    /// environment variable takes precedence when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub liar_dir: Option<String>,
    pub split_file: String,
    /// Pretrained statement embeddings, keyed by record id (text format)
    /// or positional (binary format). Without it, statements are hashed
    /// into `embedding_dim` buckets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_file: Option<String>,
    pub embedding_dim: usize,
    // Planted-graph knobs, ignored for the corpus source.
    pub nodes: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub signal: f64,
    pub noise: f64,
    pub kin_degree: usize,
    pub foil_degree: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: Source::Synthetic,
            liar_dir: None,
            split_file: String::from("train.tsv"),
            embedding_file: None,
            embedding_dim: 300,
            nodes: 200,
            classes: 6,
            feature_dim: 16,
            signal: 0.4,
            noise: 1.0,
            kin_degree: 6,
            foil_degree: 6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    /// Relation names: statement attributes (`speaker`, `context`,
    /// `subject`, `party`, `job-title`, `state`) and/or `knn`.
    pub relations: Vec<String>,
    pub knn_k: usize,
    /// Sample down attribute cliques above this degree before
    /// re-symmetrizing; unset keeps every edge.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree_cap: Option<usize>,
    pub lattice: LatticeChoice,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            relations: vec![String::from("speaker"), String::from("context")],
            knn_k: 5,
            degree_cap: None,
            lattice: LatticeChoice::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeChoice {
    /// Every subset of the relations.
    Full,
    /// Empty set, singletons, and the full set only.
    Restricted,
}

impl LatticeChoice {
    pub fn mode(self) -> LatticeMode {
        match self {
            LatticeChoice::Full => LatticeMode::Full,
            LatticeChoice::Restricted => LatticeMode::Restricted,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub heads: Vec<usize>,
    pub mlp_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: vec![256, 128], heads: vec![4, 1], mlp_hidden: vec![64] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub model: ModelKind,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub tau_start: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_end: Option<f64>,
    pub seed: u64,
    pub labeled_frac: f64,
    pub ce_weight: f64,
    pub ordinal_weight: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::standard(1);
        TrainSection {
            model: ModelKind::Dhgat,
            epochs: t.epochs,
            lr: t.lr,
            weight_decay: t.weight_decay,
            dropout: t.dropout,
            tau_start: t.tau_start,
            tau_end: t.tau_end,
            seed: 1,
            labeled_frac: 0.3,
            ce_weight: t.loss.ce,
            ordinal_weight: t.loss.ordinal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dhgat,
    Gat,
    Gcn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dhgat => "dhgat",
            ModelKind::Gat => "gat",
            ModelKind::Gcn => "gcn",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labeled_fracs: Option<Vec<f64>>,
    /// Alternative relation subsets to compare; defaults to the single
    /// set under `[graph]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relation_sets: Option<Vec<Vec<String>>>,
    pub models: Vec<ModelKind>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            seeds: vec![1, 2, 3],
            labeled_fracs: None,
            relation_sets: None,
            models: vec![ModelKind::Dhgat, ModelKind::Gat, ModelKind::Gcn],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(cfg)
    }

    /// Field-level checks beyond what deserialization enforces; returns
    /// the offending key in the message.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let t = &self.train;
        if t.epochs == 0 {
            return Err(String::from("train.epochs must be positive"));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(format!("train.lr must be a positive number, got {}", t.lr));
        }
        if !(0.0..1.0).contains(&t.dropout) {
            return Err(format!("train.dropout must be in [0,1), got {}", t.dropout));
        }
        if !(t.tau_start > 0.0) {
            return Err(format!("train.tau_start must be positive, got {}", t.tau_start));
        }
        if let Some(te) = t.tau_end {
            if !(te > 0.0) {
                return Err(format!("train.tau_end must be positive, got {te}"));
            }
        }
        if !(t.labeled_frac > 0.0 && t.labeled_frac < 1.0) {
            return Err(format!(
                "train.labeled_frac must be in (0,1), got {}",
                t.labeled_frac
            ));
        }
        if t.ce_weight < 0.0 || t.ordinal_weight < 0.0 {
            return Err(String::from(
                "train.ce_weight and train.ordinal_weight must be non-negative",
            ));
        }
        let m = &self.model;
        if m.hidden.is_empty() || m.hidden.len() != m.heads.len() {
            return Err(format!(
                "model.hidden ({}) and model.heads ({}) must be non-empty and equal length",
                m.hidden.len(),
                m.heads.len()
            ));
        }
        for (i, (&h, &k)) in m.hidden.iter().zip(&m.heads).enumerate() {
            if h == 0 || k == 0 || h % k != 0 {
                return Err(format!(
                    "model.hidden[{i}] = {h} must be a positive multiple of model.heads[{i}] = {k}"
                ));
            }
        }
        let g = &self.graph;
        if g.relations.is_empty() {
            return Err(String::from("graph.relations must name at least one relation"));
        }
        let mut seen: Vec<&str> = Vec::new();
        for name in &g.relations {
            if seen.contains(&name.as_str()) {
                return Err(format!("graph.relations repeats {name:?}"));
            }
            seen.push(name);
            if self.data.source == Source::Liar && parse_relation(name).is_none() {
                return Err(format!(
                    "graph.relations: {name:?} is not an attribute or \"knn\""
                ));
            }
        }
        if g.relations.iter().any(|r| r == "knn") && g.knn_k == 0 {
            return Err(String::from("graph.knn_k must be positive when \"knn\" is used"));
        }
        if g.degree_cap == Some(0) {
            return Err(String::from("graph.degree_cap must be positive when set"));
        }
        let d = &self.data;
        if d.source == Source::Synthetic {
            if d.classes < 2 || d.nodes < 2 * d.classes {
                return Err(format!(
                    "data.nodes = {} too small for data.classes = {}",
                    d.nodes, d.classes
                ));
            }
            if d.feature_dim == 0 {
                return Err(String::from("data.feature_dim must be positive"));
            }
        }
        if d.embedding_dim == 0 {
            return Err(String::from("data.embedding_dim must be positive"));
        }
        if let Some(s) = &self.sweep {
            if s.seeds.is_empty() {
                return Err(String::from("sweep.seeds must not be empty"));
            }
            if s.models.is_empty() {
                return Err(String::from("sweep.models must not be empty"));
            }
            if let Some(fr) = &s.labeled_fracs {
                for &f in fr {
                    if !(f > 0.0 && f < 1.0) {
                        return Err(format!("sweep.labeled_fracs entry {f} outside (0,1)"));
                    }
                }
            }
            if let Some(sets) = &s.relation_sets {
                for set in sets {
                    if set.is_empty() {
                        return Err(String::from("sweep.relation_sets contains an empty set"));
                    }
                    if d.source == Source::Liar {
                        for name in set {
                            if parse_relation(name).is_none() {
                                return Err(format!(
                                    "sweep.relation_sets: {name:?} is not an attribute or \"knn\""
                                ));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn model_dims(&self, in_dim: usize, classes: usize) -> ModelDims {
        ModelDims {
            in_dim,
            hidden: self.model.hidden.clone(),
            heads: self.model.heads.clone(),
            classes,
            mlp_hidden: self.model.mlp_hidden.clone(),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            lr: t.lr,
            weight_decay: t.weight_decay,
            dropout: t.dropout,
            tau_start: t.tau_start,
            tau_end: t.tau_end,
            loss: LossWeights { ce: t.ce_weight, ordinal: t.ordinal_weight },
            seed,
        }
    }

    /// Corpus directory after applying the environment override.
    pub fn liar_dir(&self) -> Option<PathBuf> {
        if let Ok(dir) = std::env::var("DHGAT_LIAR_DIR") {
            if !dir.is_empty() {
                return Some(PathBuf::from(dir));
            }
        }
        self.data.liar_dir.as_ref().map(PathBuf::from)
    }

    /// Stable hash of the canonical serialized form, stored in
    /// checkpoints so evaluation can refuse a mismatched config.
    pub fn hash(&self) -> u64 {
        let canon = toml::to_string(self).expect("config serializes");
        fnv1a(canon.as_bytes())
    }
}

/// A relation name from the config: either a statement attribute or the
/// embedding nearest-neighbor graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationSpec {
    Attribute(Attr),
    Knn,
}

pub fn parse_relation(name: &str) -> Option<RelationSpec> {
    if name == "knn" {
        return Some(RelationSpec::Knn);
    }
    Attr::ALL
        .iter()
        .find(|a| a.name() == name)
        .map(|&a| RelationSpec::Attribute(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> std::result::Result<ExperimentConfig, String> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_synthetic_config_parses_with_defaults() {
        let cfg = parse("[data]\nsource = \"synthetic\"\n").unwrap();
        assert_eq!(cfg.train.epochs, 200);
        assert_eq!(cfg.model.hidden, vec![256, 128]);
        assert_eq!(cfg.graph.lattice, LatticeChoice::Full);
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = parse("[data]\nsource = \"synthetic\"\n[train]\nlearning_rate = 0.1\n")
            .unwrap_err();
        assert!(err.contains("learning_rate"), "error should name the key: {err}");
    }

    #[test]
    fn bad_ranges_name_the_offending_key() {
        let err =
            parse("[data]\nsource = \"synthetic\"\n[train]\ndropout = 1.0\n").unwrap_err();
        assert!(err.contains("train.dropout"), "{err}");
        let err = parse(
            "[data]\nsource = \"liar\"\n[graph]\nrelations = [\"speeker\"]\n",
        )
        .unwrap_err();
        assert!(err.contains("speeker"), "{err}");
        let err = parse(
            "[data]\nsource = \"synthetic\"\n[model]\nhidden = [7]\nheads = [2]\n",
        )
        .unwrap_err();
        assert!(err.contains("model.hidden[0]"), "{err}");
    }

    #[test]
    fn hash_is_insensitive_to_formatting_but_not_values() {
        let a = parse("[data]\nsource = \"synthetic\"\nnodes = 100\n").unwrap();
        let b = parse("[data]\nnodes   = 100\nsource  = \"synthetic\"\n").unwrap();
        let c = parse("[data]\nsource = \"synthetic\"\nnodes = 101\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn relation_names_round_trip() {
        for a in Attr::ALL {
            assert_eq!(parse_relation(a.name()), Some(RelationSpec::Attribute(a)));
        }
        assert_eq!(parse_relation("knn"), Some(RelationSpec::Knn));
        assert_eq!(parse_relation("banana"), None);
    }
}
