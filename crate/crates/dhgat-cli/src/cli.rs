//! Subcommand definitions and their implementations.

use std::path::PathBuf;
use std::rc::Rc;
use std::time::Instant;

use clap::{Parser, Subcommand};

use dhgat_core::gradcheck::grad_check;
use dhgat_core::graph::{LatticeMode, NeighborhoodLattice, UnionGraph};
use dhgat_core::layers::Gatv2Layer;
use dhgat_core::model::{supervised_loss, DhgatModel, ForwardCtx, SelectionMode};
use dhgat_core::split::stratified_split;
use dhgat_core::synth::{planted_graph, SynthConfig};
use dhgat_core::tape::ParamSet;
use dhgat_core::train::TrainConfig;

use crate::config::{ExperimentConfig, ModelKind};
use crate::harness;
use crate::report::{self, MetricsFile, OutDir, RunFile};
use crate::{checkpoint, graphio, CliError, Result};

#[derive(Parser)]
#[command(
    name = "dhgat",
    version,
    about = "Heterogeneous graph classifier with per-node neighborhood-type selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Build the relation graph for a config and write it as text.
    BuildGraph {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (DHGAT_OUT_DIR overrides).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model and write metrics, curves, traces, and a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate a checkpoint without training.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every cell of the sweep grid and write aggregated metrics.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients against central finite differences on a
    /// seeded fixture.
    Gradcheck {
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Summarize which neighborhood types a trained model selected.
    InspectTrace {
        #[arg(long)]
        trace: PathBuf,
        /// Restrict to one layer.
        #[arg(long)]
        layer: Option<usize>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::BuildGraph { config, out } => build_graph(&config, out.as_deref()),
        Cmd::Train { config, out } => train(&config, out.as_deref()),
        Cmd::Evaluate { config, checkpoint, out } => {
            evaluate(&config, &checkpoint, out.as_deref())
        }
        Cmd::Sweep { config, out } => sweep(&config, out.as_deref()),
        Cmd::Gradcheck { seed, tolerance } => gradcheck(seed, tolerance),
        Cmd::InspectTrace { trace, layer } => inspect_trace(&trace, layer),
    }
}

fn build_graph(config: &std::path::Path, out: Option<&std::path::Path>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let data = harness::load_data(&cfg)?;
    let dir = OutDir::resolve(out, "runs/graph")?;
    graphio::write_graph(&dir.file("graph.txt"), &data.hg)?;
    println!("nodes: {}", data.hg.n);
    for (i, name) in data.hg.registry.names().iter().enumerate() {
        let csr = data.hg.relation(dhgat_core::graph::RelationId(i as u16));
        println!("relation {name}: {} edges", csr.edge_count());
    }
    println!("features: {}", data.feature_source);
    println!("wrote {}", dir.file("graph.txt").display());
    Ok(())
}

fn metrics_file(
    cfg: &ExperimentConfig,
    data: &harness::LoadedData,
    r: &harness::RunResult,
    kind: ModelKind,
) -> MetricsFile {
    MetricsFile {
        model: kind.name().to_string(),
        seed: cfg.train.seed,
        labeled_frac: cfg.train.labeled_frac,
        classes: data.classes,
        nodes: data.hg.n,
        labeled: r.labeled,
        evaluated: r.evaluated,
        relations: data.hg.registry.names().to_vec(),
        feature_source: data.feature_source.clone(),
        epochs: r.curve.len(),
        final_loss: r.curve.last().map(|e| e.loss).unwrap_or(f64::NAN),
        accuracy: r.summary.accuracy,
        macro_f1: r.summary.macro_f1,
        ordinal_mae: r.summary.ordinal_mae,
        per_class_f1: r.summary.per_class_f1.clone(),
    }
}

fn train(config: &std::path::Path, out: Option<&std::path::Path>) -> Result<()> {
    let started = Instant::now();
    let cfg = ExperimentConfig::load(config)?;
    let data = harness::load_data(&cfg)?;
    let kind = cfg.train.model;
    let r = harness::run_one(
        &cfg,
        &data,
        &data.hg,
        kind,
        cfg.train.seed,
        cfg.train.labeled_frac,
    )?;
    let dir = OutDir::resolve(out, "runs/train")?;
    dir.write_config_echo(&cfg)?;
    dir.write_metrics(&metrics_file(&cfg, &data, &r, kind))?;
    dir.write_loss_curve(&r.curve)?;
    dir.write_confusion(&r.confusion)?;
    if !r.traces.is_empty() {
        dir.write_trace(&r.traces, &r.lattice, data.hg.registry.names())?;
    }
    checkpoint::save(&dir.file("checkpoint.bin"), cfg.train.seed, cfg.hash(), &r.params)?;
    dir.write_run(&RunFile {
        command: String::from("train"),
        config_hash_hex: format!("{:016x}", cfg.hash()),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        waivers: Vec::new(),
    })?;
    println!(
        "{} seed {}: accuracy {:.4}, macro-f1 {:.4}, ordinal-mae {:.4} ({} labeled / {} evaluated)",
        kind.name(),
        cfg.train.seed,
        r.summary.accuracy,
        r.summary.macro_f1,
        r.summary.ordinal_mae,
        r.labeled,
        r.evaluated,
    );
    println!("wrote {}", dir.path.display());
    Ok(())
}

fn evaluate(
    config: &std::path::Path,
    ck_path: &std::path::Path,
    out: Option<&std::path::Path>,
) -> Result<()> {
    let started = Instant::now();
    let cfg = ExperimentConfig::load(config)?;
    let ck = checkpoint::load(ck_path)?;
    if ck.config_hash != cfg.hash() {
        return Err(CliError::Checkpoint {
            path: ck_path.to_path_buf(),
            message: format!(
                "config hash {:016x} does not match the checkpoint's {:016x}",
                cfg.hash(),
                ck.config_hash
            ),
        });
    }
    let data = harness::load_data(&cfg)?;
    let lattice = NeighborhoodLattice::build(
        data.hg.relation_count(),
        cfg.graph.lattice.mode(),
    )?;
    let union = UnionGraph::build(&data.hg, &lattice);
    let dims = cfg.model_dims(data.features.cols(), data.classes);
    let kind = cfg.train.model;

    let mut params = ParamSet::new();
    let (probs, traces) = match kind {
        ModelKind::Dhgat => {
            let model = DhgatModel::init(&mut params, dims, lattice.len(), ck.seed)?;
            checkpoint::apply(ck_path, &ck, &mut params)?;
            dhgat_core::train::eval_dhgat(&model, &params, &data.features, &union, ck.seed)
        }
        ModelKind::Gat => {
            let model = dhgat_core::model::GatBaseline::init(&mut params, dims, ck.seed)?;
            checkpoint::apply(ck_path, &ck, &mut params)?;
            let p = dhgat_core::train::eval_gat(&model, &params, &data.features, &union, ck.seed);
            (p, Vec::new())
        }
        ModelKind::Gcn => {
            let model = dhgat_core::model::GcnBaseline::init(&mut params, dims, ck.seed)?;
            checkpoint::apply(ck_path, &ck, &mut params)?;
            let graph = dhgat_core::layers::GcnGraph::from_attention(&union.att);
            let p = dhgat_core::train::eval_gcn(&model, &params, &data.features, &graph, ck.seed);
            (p, Vec::new())
        }
    };

    let split =
        stratified_split(&data.labels, data.classes, cfg.train.labeled_frac, ck.seed)?;
    let preds = dhgat_core::model::predictions(&probs);
    let truth: Vec<u8> =
        split.unlabeled.iter().map(|&u| data.labels[u as usize]).collect();
    let got: Vec<u8> = split.unlabeled.iter().map(|&u| preds[u as usize]).collect();
    let confusion = dhgat_core::metrics::Confusion::from_pairs(&truth, &got, data.classes);
    let summary = dhgat_core::metrics::MetricsSummary::from_confusion(&confusion);

    let dir = OutDir::resolve(out, "runs/evaluate")?;
    dir.write_confusion(&confusion)?;
    if !traces.is_empty() {
        dir.write_trace(&traces, &lattice, data.hg.registry.names())?;
    }
    dir.write_run(&RunFile {
        command: String::from("evaluate"),
        config_hash_hex: format!("{:016x}", cfg.hash()),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        waivers: Vec::new(),
    })?;
    println!(
        "{} checkpoint seed {}: accuracy {:.4}, macro-f1 {:.4}, ordinal-mae {:.4}",
        kind.name(),
        ck.seed,
        summary.accuracy,
        summary.macro_f1,
        summary.ordinal_mae,
    );
    Ok(())
}

fn sweep(config: &std::path::Path, out: Option<&std::path::Path>) -> Result<()> {
    let started = Instant::now();
    let cfg = ExperimentConfig::load(config)?;
    let data = harness::load_data(&cfg)?;
    let cells = harness::run_sweep(&cfg, &data)?;
    let dir = OutDir::resolve(out, "runs/sweep")?;
    dir.write_config_echo(&cfg)?;
    let mut text = serde_json::to_string_pretty(&cells).expect("cells serialize");
    text.push('\n');
    std::fs::write(dir.file("sweep.json"), &text)
        .map_err(|e| CliError::io(dir.file("sweep.json"), e))?;
    dir.write_run(&RunFile {
        command: String::from("sweep"),
        config_hash_hex: format!("{:016x}", cfg.hash()),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        waivers: Vec::new(),
    })?;
    print!("{}", harness::render_sweep_table(&cells));
    println!("wrote {}", dir.file("sweep.json").display());
    Ok(())
}

fn gradcheck(seed: u64, tolerance: f64) -> Result<()> {
    let mut synth = SynthConfig::standard(seed);
    synth.nodes = 24;
    synth.dim = 6;
    synth.kin_degree = 3;
    synth.foil_degree = 3;
    let data = planted_graph(&synth);
    let lattice = NeighborhoodLattice::build(2, LatticeMode::Full).unwrap();
    let union = UnionGraph::build(&data.graph, &lattice);
    let features = data.features.clone();
    let mut failures = Vec::new();

    {
        let mut params = ParamSet::new();
        let layer = Gatv2Layer::init(&mut params, "att", 6, 4, 2, seed);
        let att = union.att.clone();
        let x = features.clone();
        let report = grad_check(&mut params, tolerance, seed, |t, p| {
            let x0 = t.input(x.clone());
            let h = layer.forward(t, p, x0, &att, None, true);
            t.mean_all(h)
        });
        println!("attention layer: {}", report.render());
        if !report.passed() {
            failures.push(format!("attention layer\n{}", report.render()));
        }
    }

    {
        let mut params = ParamSet::new();
        let dims = dhgat_core::model::ModelDims {
            in_dim: 6,
            hidden: vec![8, 8],
            heads: vec![2, 1],
            classes: synth.classes,
            mlp_hidden: vec![6],
        };
        let model = DhgatModel::init(&mut params, dims, lattice.len(), seed)?;
        let split = stratified_split(&data.labels, synth.classes, 0.5, seed)?;
        let labeled = Rc::new(split.labeled.clone());
        let labels = Rc::new(split.labeled_labels(&data.labels));
        let tcfg = TrainConfig::standard(seed);
        let x = features.clone();
        let u = union.clone();
        let report = grad_check(&mut params, tolerance, seed, move |t, p| {
            let x0 = t.input(x.clone());
            let ctx = ForwardCtx { seed, epoch: 0, dropout: 0.25 };
            let out = model.forward(t, p, x0, &u, SelectionMode::Relaxed { tau: 1.0 }, &ctx);
            supervised_loss(t, out.probs, &labeled, &labels, tcfg.loss).expect("labeled set non-empty")
        });
        println!("full model (relaxed selection): {}", report.render());
        if !report.passed() {
            failures.push(format!("full model\n{}", report.render()));
        }
    }

    if failures.is_empty() {
        println!("all gradient checks passed at tolerance {tolerance:e}");
        Ok(())
    } else {
        Err(CliError::GradCheck(failures.join("\n")))
    }
}

fn inspect_trace(path: &std::path::Path, layer: Option<usize>) -> Result<()> {
    let parsed = report::read_trace(path)?;
    let layers: Vec<usize> = {
        let mut l: Vec<usize> = parsed.rows.iter().map(|r| r.layer).collect();
        l.sort_unstable();
        l.dedup();
        l
    };
    for l in layers {
        if layer.is_some() && layer != Some(l) {
            continue;
        }
        let rows: Vec<_> = parsed.rows.iter().filter(|r| r.layer == l).collect();
        let total = rows.len();
        println!("layer {l}: {total} nodes");
        let mut by_mask: std::collections::BTreeMap<u16, usize> = std::collections::BTreeMap::new();
        for r in &rows {
            *by_mask.entry(r.chosen_mask).or_default() += 1;
        }
        for (mask, count) in &by_mask {
            let names = describe_mask(*mask, &parsed.relation_names);
            println!(
                "  {names:<30} {count:>6}  ({:.1}%)",
                100.0 * *count as f64 / total as f64
            );
        }
        for (i, name) in parsed.relation_names.iter().enumerate() {
            let hits = rows.iter().filter(|r| r.chosen_mask & (1 << i) != 0).count();
            println!(
                "  containing {name:<19} {hits:>6}  ({:.1}%)",
                100.0 * hits as f64 / total as f64
            );
        }
    }
    Ok(())
}

fn describe_mask(mask: u16, names: &[String]) -> String {
    if mask == 0 {
        return String::from("{}");
    }
    let parts: Vec<&str> = (0..16)
        .filter(|i| mask & (1 << i) != 0)
        .map(|i| names.get(i as usize).map(String::as_str).unwrap_or("?"))
        .collect();
    format!("{{{}}}", parts.join(","))
}
