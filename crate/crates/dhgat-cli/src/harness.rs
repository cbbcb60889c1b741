//! Experiment orchestration: load a dataset, build its relations, train
//! one model or a whole sweep grid, and collect metrics.

use serde::{Deserialize, Serialize};

use dhgat_core::embed::knn_relation;
use dhgat_core::graph::{
    build_attribute_relation, HeteroGraph, NeighborhoodLattice, UnionGraph,
};
use dhgat_core::layers::GcnGraph;
use dhgat_core::liar::Dataset;
use dhgat_core::metrics::{mean_std, Confusion, MetricsSummary};
use dhgat_core::model::{
    predictions, DhgatModel, GatBaseline, GcnBaseline, LayerTrace,
};
use dhgat_core::split::stratified_split;
use dhgat_core::synth::{planted_graph, SynthConfig};
use dhgat_core::tape::ParamSet;
use dhgat_core::tensor::Matrix;
use dhgat_core::train::{train_dhgat, train_gat, train_gcn, EpochRecord};

use crate::config::{parse_relation, ExperimentConfig, ModelKind, RelationSpec, Source};
use crate::embedfile;
use crate::ingest;
use crate::{CliError, Result};

pub struct LoadedData {
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub classes: usize,
    pub hg: HeteroGraph,
    /// Where the features came from, for the report: `hashed(<dim>)` or
    /// `file:<path>`.
    pub feature_source: String,
    /// Kept for rebuilding relations during sweeps; absent for the
    /// synthetic source.
    pub dataset: Option<Dataset>,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    match cfg.data.source {
        Source::Synthetic => {
            let d = &cfg.data;
            let synth = SynthConfig {
                nodes: d.nodes,
                classes: d.classes,
                dim: d.feature_dim,
                signal: d.signal,
                noise: d.noise,
                kin_degree: d.kin_degree,
                foil_degree: d.foil_degree,
                seed: cfg.train.seed,
            };
            let data = planted_graph(&synth);
            Ok(LoadedData {
                features: data.features,
                labels: data.labels,
                classes: d.classes,
                hg: data.graph,
                feature_source: format!("planted({})", d.feature_dim),
                dataset: None,
            })
        }
        Source::Liar => {
            let dir = cfg.liar_dir().ok_or_else(|| {
                CliError::Usage(String::from(
                    "corpus source needs data.liar_dir or the DHGAT_LIAR_DIR environment variable",
                ))
            })?;
            let path = dir.join(&cfg.data.split_file);
            let dataset = ingest::read_liar_file(&path)?;
            let (features, feature_source) = match &cfg.data.embedding_file {
                Some(f) => {
                    let p = std::path::PathBuf::from(f);
                    let p = if p.is_absolute() { p } else { dir.join(p) };
                    (embedfile::load_embedding_file(&p, &dataset)?, format!("file:{f}"))
                }
                None => (
                    embedfile::hashed_features(&dataset, cfg.data.embedding_dim, cfg.train.seed),
                    format!("hashed({})", cfg.data.embedding_dim),
                ),
            };
            let hg =
                build_relations(&dataset, &features, cfg, &cfg.graph.relations)?;
            let labels = dataset.labels();
            Ok(LoadedData {
                features,
                labels,
                classes: dhgat_core::liar::CLASS_COUNT,
                hg,
                feature_source,
                dataset: Some(dataset),
            })
        }
    }
}

fn build_relations(
    dataset: &Dataset,
    features: &Matrix,
    cfg: &ExperimentConfig,
    names: &[String],
) -> Result<HeteroGraph> {
    let n = dataset.len();
    let mut hg = HeteroGraph::new(n);
    for name in names {
        let spec = parse_relation(name).ok_or_else(|| {
            CliError::Usage(format!("unknown relation {name:?}"))
        })?;
        let csr = match spec {
            RelationSpec::Attribute(attr) => build_attribute_relation(
                n,
                &dataset.attribute_values(attr),
                cfg.graph.degree_cap,
                cfg.train.seed,
                name,
            )?,
            RelationSpec::Knn => knn_relation(features, cfg.graph.knn_k),
        };
        hg.add_relation(name, csr)?;
    }
    Ok(hg)
}

/// The relation structure for one sweep cell. The corpus source rebuilds
/// from the dataset; the synthetic source selects among the planted
/// relations by name.
pub fn relations_for(
    cfg: &ExperimentConfig,
    data: &LoadedData,
    names: &[String],
) -> Result<HeteroGraph> {
    if names == data.hg.registry.names() {
        return Ok(data.hg.clone());
    }
    if let Some(dataset) = &data.dataset {
        return build_relations(dataset, &data.features, cfg, names);
    }
    let mut hg = HeteroGraph::new(data.hg.n);
    for name in names {
        let id = data.hg.registry.lookup(name).ok_or_else(|| {
            CliError::Usage(format!(
                "relation {name:?} not in the planted graph (has {:?})",
                data.hg.registry.names()
            ))
        })?;
        hg.add_relation(name, data.hg.relation(id).clone())?;
    }
    Ok(hg)
}

pub struct RunResult {
    pub summary: MetricsSummary,
    pub confusion: Confusion,
    pub curve: Vec<EpochRecord>,
    /// Final evaluation-time selections; empty for the baselines.
    pub traces: Vec<LayerTrace>,
    pub lattice: NeighborhoodLattice,
    pub labeled: usize,
    pub evaluated: usize,
    pub params: ParamSet,
}

pub fn run_one(
    cfg: &ExperimentConfig,
    data: &LoadedData,
    hg: &HeteroGraph,
    kind: ModelKind,
    seed: u64,
    labeled_frac: f64,
) -> Result<RunResult> {
    let lattice =
        NeighborhoodLattice::build(hg.relation_count(), cfg.graph.lattice.mode())?;
    let union = UnionGraph::build(hg, &lattice);
    let split = stratified_split(&data.labels, data.classes, labeled_frac, seed)?;
    let labels = split.labeled_labels(&data.labels);
    let dims = cfg.model_dims(data.features.cols(), data.classes);
    let tcfg = cfg.train_config(seed);

    let mut params = ParamSet::new();
    let outcome = match kind {
        ModelKind::Dhgat => {
            let model = DhgatModel::init(&mut params, dims, lattice.len(), seed)?;
            train_dhgat(&model, &mut params, &data.features, &union, &split.labeled, &labels, &tcfg)?
        }
        ModelKind::Gat => {
            let model = GatBaseline::init(&mut params, dims, seed)?;
            train_gat(&model, &mut params, &data.features, &union, &split.labeled, &labels, &tcfg)?
        }
        ModelKind::Gcn => {
            let model = GcnBaseline::init(&mut params, dims, seed)?;
            let graph = GcnGraph::from_attention(&union.att);
            train_gcn(&model, &mut params, &data.features, &graph, &split.labeled, &labels, &tcfg)?
        }
    };

    let preds = predictions(&outcome.eval_probs);
    let truth: Vec<u8> =
        split.unlabeled.iter().map(|&u| data.labels[u as usize]).collect();
    let got: Vec<u8> = split.unlabeled.iter().map(|&u| preds[u as usize]).collect();
    let confusion = Confusion::from_pairs(&truth, &got, data.classes);
    Ok(RunResult {
        summary: MetricsSummary::from_confusion(&confusion),
        confusion,
        curve: outcome.curve,
        traces: outcome.final_traces,
        lattice,
        labeled: split.labeled.len(),
        evaluated: split.unlabeled.len(),
        params,
    })
}

/// Per layer, the fraction of nodes whose chosen neighborhood type
/// includes the given relation.
pub fn fraction_containing(
    traces: &[LayerTrace],
    lattice: &NeighborhoodLattice,
    relation_bit: u16,
) -> Vec<f64> {
    traces
        .iter()
        .map(|t| {
            if t.chosen.is_empty() {
                return 0.0;
            }
            let hits = t
                .chosen
                .iter()
                .filter(|&&c| lattice.mask(c as usize) & relation_bit != 0)
                .count();
            hits as f64 / t.chosen.len() as f64
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub relations: Vec<String>,
    pub labeled_frac: f64,
    pub model: String,
    pub seeds: Vec<u64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    pub ordinal_mae_mean: f64,
    pub ordinal_mae_std: f64,
}

pub fn run_sweep(cfg: &ExperimentConfig, data: &LoadedData) -> Result<Vec<SweepCell>> {
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let sets = sweep
        .relation_sets
        .clone()
        .unwrap_or_else(|| vec![data.hg.registry.names().to_vec()]);
    let fracs =
        sweep.labeled_fracs.clone().unwrap_or_else(|| vec![cfg.train.labeled_frac]);
    let mut cells = Vec::new();
    for set in &sets {
        let hg = relations_for(cfg, data, set)?;
        for &frac in &fracs {
            for &model in &sweep.models {
                let mut acc = Vec::new();
                let mut f1 = Vec::new();
                let mut mae = Vec::new();
                for &seed in &sweep.seeds {
                    let r = run_one(cfg, data, &hg, model, seed, frac)?;
                    acc.push(r.summary.accuracy);
                    f1.push(r.summary.macro_f1);
                    mae.push(r.summary.ordinal_mae);
                }
                let (am, asd) = mean_std(&acc);
                let (fm, fsd) = mean_std(&f1);
                let (mm, msd) = mean_std(&mae);
                cells.push(SweepCell {
                    relations: set.clone(),
                    labeled_frac: frac,
                    model: model.name().to_string(),
                    seeds: sweep.seeds.clone(),
                    accuracy_mean: am,
                    accuracy_std: asd,
                    macro_f1_mean: fm,
                    macro_f1_std: fsd,
                    ordinal_mae_mean: mm,
                    ordinal_mae_std: msd,
                });
            }
        }
    }
    Ok(cells)
}

pub fn render_sweep_table(cells: &[SweepCell]) -> String {
    let mut out = String::from(
        "relations                      frac   model  accuracy          macro-f1          ordinal-mae\n",
    );
    for c in cells {
        out.push_str(&format!(
            "{:<30} {:<6.2} {:<6} {:.4} +/- {:.4}  {:.4} +/- {:.4}  {:.4} +/- {:.4}\n",
            c.relations.join("+"),
            c.labeled_frac,
            c.model,
            c.accuracy_mean,
            c.accuracy_std,
            c.macro_f1_mean,
            c.macro_f1_std,
            c.ordinal_mae_mean,
            c.ordinal_mae_std,
        ));
    }
    out
}
