mod args;

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;

use args::{parse_cell, AblateArgs, Cli, Command, EvaluateArgs, ExportArgs, RunArgs, SplitArgs, SynthArgs, TrainArgs};
use ppi_core::data_model::{load_ppi, load_proteins, InteractionRecord, ProteinRecord};
use ppi_core::graph_builder::build_interaction_graph;
use ppi_core::harness::stage1::Stage1Checkpoint;
use ppi_core::harness::stage2::protein_embeddings;
use ppi_core::harness::{evaluate, io, pipeline, run_ablation_grid, synth, train_stage1, train_stage2, EvalSet, RunConfig};
use ppi_core::interaction_model::InteractionModel;
use ppi_core::splitter::{classify_subsets, SplitSpec, SubsetTag};

struct Dataset {
    proteins: Vec<ProteinRecord>,
    interactions: Vec<InteractionRecord>,
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let proteins_path = cfg.data.proteins.as_ref().ok_or_else(|| anyhow!("--proteins is required"))?;
    let mut proteins = load_proteins(proteins_path).with_context(|| format!("reading {}", proteins_path.display()))?;
    proteins.sort_by(|a, b| a.id.cmp(&b.id));
    let interactions = match &cfg.data.ppi {
        Some(p) => load_ppi(p).with_context(|| format!("reading {}", p.display()))?,
        None => Vec::new(),
    };
    Ok(Dataset { proteins, interactions })
}

fn require_interactions(d: &Dataset) -> Result<()> {
    if d.interactions.is_empty() {
        bail!("--ppi is required and must list at least one pair");
    }
    Ok(())
}

/// The configured split file, or a fresh split from the config.
fn resolve_split(cfg: &RunConfig, d: &Dataset) -> Result<SplitSpec> {
    let topo = pipeline::topology(&d.proteins, &d.interactions)?;
    let split = match &cfg.data.split_file {
        Some(p) => SplitSpec::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => pipeline::make_split(&topo, cfg.split.scheme, cfg.split.seed)?,
    };
    split.validate(topo.pair_count())?;
    Ok(split)
}

fn write_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    cfg.save(out.join("config.toml"))?;
    Ok(())
}

fn synth_data(a: &SynthArgs) -> Result<()> {
    let data = synth::generate(&synth::SynthSpec {
        proteins: a.proteins,
        pairs: a.pairs,
        min_len: a.min_len,
        max_len: a.max_len,
        seed: a.seed,
    })?;
    io::write_proteins(a.out.join("proteins.jsonl"), &data.proteins)?;
    io::write_ppi(a.out.join("ppi.tsv"), &data.interactions)?;
    println!(
        "wrote {} proteins and {} pairs to {}",
        data.proteins.len(),
        data.interactions.len(),
        a.out.display()
    );
    Ok(())
}

fn build_graphs(a: &RunArgs) -> Result<()> {
    let cfg = a.resolve(false)?;
    if cfg.data.graph_cache.is_none() {
        bail!("--graph-cache is required");
    }
    let d = load_dataset(&cfg)?;
    let table = pipeline::property_table(&cfg)?;
    let graphs = pipeline::structure_graphs(&d.proteins, &table, &cfg)?;
    let residues: usize = graphs.iter().map(|g| g.node_count()).sum();
    println!("{} graphs, {residues} residues, cached in {}", graphs.len(), cfg.data.graph_cache.unwrap().display());
    Ok(())
}

fn split(a: &SplitArgs) -> Result<()> {
    let cfg = a.run.resolve(false)?;
    let d = load_dataset(&cfg)?;
    require_interactions(&d)?;
    let topo = pipeline::topology(&d.proteins, &d.interactions)?;
    let split = pipeline::make_split(&topo, cfg.split.scheme, cfg.split.seed)?;
    split.save(&a.out)?;
    let (tr, va, te) = split.sizes();
    let tags = classify_subsets(&split, &topo);
    let count = |t: SubsetTag| tags.iter().filter(|&&x| x == t).count();
    println!(
        "{} split: train {tr}, val {va}, test {te} (BS {}, ES {}, NS {})",
        cfg.split.scheme,
        count(SubsetTag::BS),
        count(SubsetTag::ES),
        count(SubsetTag::NS)
    );
    Ok(())
}

fn pooled_rows(pooled: &BTreeMap<String, Vec<f64>>) -> Vec<(&str, &[f64])> {
    pooled.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect()
}

fn run_stage1(cfg: &RunConfig, d: &Dataset) -> Result<ppi_core::harness::Stage1Output> {
    let split = resolve_split(cfg, d)?;
    let topo = pipeline::topology(&d.proteins, &d.interactions)?;
    let table = pipeline::property_table(cfg)?;
    let graphs = pipeline::structure_graphs(&d.proteins, &table, cfg)?;
    let mask = pipeline::training_protein_mask(&topo, &split);
    let stats = ppi_core::data_model::FeatureStats::fit(
        graphs.iter().zip(&mask).filter(|(_, &t)| t).map(|(g, _)| g.features.values()),
    );
    let ids: Vec<String> = d.proteins.iter().map(|p| p.id.clone()).collect();
    Ok(train_stage1(&ids, &graphs, stats, cfg)?)
}

fn pretrain(a: &TrainArgs) -> Result<()> {
    let cfg = a.run.resolve(true)?;
    let d = load_dataset(&cfg)?;
    require_interactions(&d)?;
    write_config(&cfg, &a.out)?;
    let out = run_stage1(&cfg, &d)?;
    io::save_json(a.out.join("stage1_checkpoint.json"), &out.checkpoint)?;
    io::write_stage1_log(a.out.join("stage1_log.tsv"), &out.log)?;
    io::write_embeddings(a.out.join("pooled_embeddings.tsv"), pooled_rows(&out.pooled))?;
    if let Some(last) = out.log.last() {
        println!("stage 1 finished after {} epochs, final loss {:.6}", out.log.len(), last.total);
    } else {
        println!("stage 1 skipped; pooled embeddings come from the untrained encoder");
    }
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.run.resolve(true)?;
    let d = load_dataset(&cfg)?;
    require_interactions(&d)?;
    write_config(&cfg, &a.out)?;
    let split = resolve_split(&cfg, &d)?;
    let pooled = match &a.embeddings {
        Some(p) => io::read_embeddings(p)?,
        None => {
            let s1 = run_stage1(&cfg, &d)?;
            io::save_json(a.out.join("stage1_checkpoint.json"), &s1.checkpoint)?;
            io::write_stage1_log(a.out.join("stage1_log.tsv"), &s1.log)?;
            io::write_embeddings(a.out.join("pooled_embeddings.tsv"), pooled_rows(&s1.pooled))?;
            s1.pooled
        }
    };
    let graph = build_interaction_graph(&d.interactions, &pooled)?;
    let s2 = train_stage2(&graph, &split, &cfg)?;
    io::write_stage2_log(a.out.join("stage2_log.tsv"), &s2.log)?;
    io::save_json(a.out.join("model.json"), &s2.best)?;
    io::save_json(a.out.join("views.json"), &s2.provenance)?;
    split.save(a.out.join("split.json"))?;
    for (name, set) in [("val", EvalSet::Val), ("test", EvalSet::Test)] {
        let ev = evaluate(&s2.best, &graph, &split, set, cfg.stage2.threshold)?;
        io::save_json(a.out.join(format!("{name}_report.json")), &ev.report)?;
        io::write_predictions(a.out.join(format!("{name}_predictions.tsv")), &ev.predictions)?;
        println!("{name}: {} pairs, micro-F1 {:.4}", ev.report.pairs, ev.report.micro_f1);
    }
    println!("best epoch {} (val micro-F1 {:.4})", s2.best_epoch, s2.best_val_f1);
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let cfg = a.run.resolve(false)?;
    let d = load_dataset(&cfg)?;
    require_interactions(&d)?;
    let split = resolve_split(&cfg, &d)?;
    let set = match a.set.to_ascii_lowercase().as_str() {
        "train" => EvalSet::Train,
        "val" => EvalSet::Val,
        "test" => EvalSet::Test,
        other => bail!("unknown set '{other}' (expected train, val or test)"),
    };
    let model: InteractionModel = io::load_json(&a.model)?;
    let pooled = io::read_embeddings(&a.embeddings)?;
    let graph = build_interaction_graph(&d.interactions, &pooled)?;
    let ev = evaluate(&model, &graph, &split, set, cfg.stage2.threshold)?;
    io::save_json(a.out.join("report.json"), &ev.report)?;
    io::write_predictions(a.out.join("predictions.tsv"), &ev.predictions)?;
    let pr: String = ev
        .report
        .pr_curve
        .iter()
        .map(|p| format!("{}\t{}\t{}\n", p.threshold, p.precision, p.recall))
        .collect();
    std::fs::write(a.out.join("pr_curve.tsv"), format!("threshold\tprecision\trecall\n{pr}"))?;
    let per_type: String = ev
        .report
        .per_type
        .iter()
        .zip(ppi_core::data_model::InteractionType::ALL)
        .map(|(m, t)| format!("{t}\t{}\t{}\n", m.accuracy, m.f1))
        .collect();
    std::fs::write(a.out.join("per_type.tsv"), format!("type\taccuracy\tf1\n{per_type}"))?;
    println!("{}: {} pairs, micro-F1 {:.4}", a.set, ev.report.pairs, ev.report.micro_f1);
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let cfg = a.run.resolve(true)?;
    let d = load_dataset(&cfg)?;
    require_interactions(&d)?;
    write_config(&cfg, &a.out)?;
    let split = resolve_split(&cfg, &d)?;
    let cells = a.cells.iter().map(|c| parse_cell(c)).collect::<Result<Vec<_>>>()?;
    let grid = run_ablation_grid(&d.proteins, &d.interactions, Some(&split), &cfg, &cells)?;
    io::save_json(a.out.join("ablation.json"), &grid)?;
    let mut table = String::from("cell\tbest_epoch\tval_micro_f1\ttest_micro_f1\n");
    for c in &grid {
        table.push_str(&format!("{}\t{}\t{}\t{}\n", c.label, c.best_epoch, c.val_micro_f1, c.test.micro_f1));
        println!("{:<32} val {:.4}  test {:.4}", c.label, c.val_micro_f1, c.test.micro_f1);
    }
    std::fs::write(a.out.join("ablation.tsv"), table)?;
    Ok(())
}

fn export_embeddings(a: &ExportArgs) -> Result<()> {
    let cfg = a.run.resolve(false)?;
    let d = load_dataset(&cfg)?;
    if let Some(path) = &a.checkpoint {
        let ckpt: Stage1Checkpoint = io::load_json(path)?;
        let table = pipeline::property_table(&cfg)?;
        let graphs = pipeline::structure_graphs(&d.proteins, &table, &cfg)?;
        let exec = cfg.exec();
        let rows = exec.map(&graphs, |g| ckpt.model.pooled(&g.standardized(&ckpt.stats)).to_vec());
        io::write_embeddings(&a.out, d.proteins.iter().map(|p| p.id.as_str()).zip(rows.iter().map(Vec::as_slice)))?;
        println!("wrote {} stage-1 embeddings to {}", rows.len(), a.out.display());
        return Ok(());
    }
    let (Some(model_path), Some(emb_path)) = (&a.model, &a.embeddings) else {
        bail!("pass --checkpoint, or --model together with --embeddings");
    };
    require_interactions(&d)?;
    let split = resolve_split(&cfg, &d)?;
    let model: InteractionModel = io::load_json(model_path)?;
    let graph = build_interaction_graph(&d.interactions, &io::read_embeddings(emb_path)?)?;
    let h = protein_embeddings(&model, &graph, &split)?;
    let rows: Vec<Vec<f64>> = h.rows().into_iter().map(|r| r.to_vec()).collect();
    io::write_embeddings(
        &a.out,
        graph.topology.protein_ids.iter().map(String::as_str).zip(rows.iter().map(Vec::as_slice)),
    )?;
    println!("wrote {} stage-2 embeddings to {}", rows.len(), a.out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::BuildGraphs(a) => build_graphs(a),
        Command::Split(a) => split(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ablate(a) => ablate(a),
        Command::ExportEmbeddings(a) => export_embeddings(a),
    }
}
