//! Subcommand pipelines. Every file written goes under the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hemi::dataset::{ingest, write_dataset, Dataset, FeatureSource};
use hemi::eval::metrics::f1_scores;
use hemi::eval::{
    cluster_eval, link_eval, mask_edges, probe_classify, write_metrics, EdgeMask, MetricRow,
};
use hemi::graph::{compose_all, MetaPathGraph, MetaPathSpec};
use hemi::model::{checkpoint, embed, EmbeddingSet, HemiConfig, ModelInputs};
use hemi::synthetic::{make_synthetic, TARGET};
use hemi::tensor::{io, Tensor};
use hemi::train::{train_augmented_lp, train_augmented_nc, train_selfsup_with, TrainReport};

use crate::config::{ConfigError, RunConfig, Task};

pub struct Run {
    pub config: RunConfig,
    pub quiet: bool,
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn out_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Two-column aligned table on stdout.
fn print_table(title: &str, rows: &[(String, String)]) {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    println!("{title}");
    for (k, v) in rows {
        println!("  {k:<width$}  {v}");
    }
}

fn metric_table(title: &str, rows: &[MetricRow]) {
    let lines: Vec<(String, String)> = rows
        .iter()
        .map(|r| {
            (
                format!("{} {} [{}]", r.task, r.metric, r.scope),
                format!("{:.4} ± {:.4}", r.value, r.stddev),
            )
        })
        .collect();
    print_table(title, &lines);
}

fn save_metrics(dir: &Path, name: &str, rows: &[MetricRow]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut buf = Vec::new();
    write_metrics(&mut buf, rows)?;
    fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let paths = config.dataset_paths()?;
    Ok(ingest(&paths, &config.target()?)?)
}

fn compose(dataset: &Dataset, metapaths: &[String]) -> Result<Vec<MetaPathGraph>> {
    let specs = metapaths
        .iter()
        .map(|m| MetaPathSpec::parse(m, &dataset.graph).map(|s| s.with_name(m.clone())))
        .collect::<hemi::Result<Vec<_>>>()?;
    Ok(compose_all(&dataset.graph, &specs)?)
}

fn save_embeddings(dir: &Path, stem: &str, z: &Tensor) -> Result<()> {
    io::save(z, &dir.join(format!("{stem}.bin")))?;
    io::save_tsv(z, &dir.join(format!("{stem}.tsv")))?;
    Ok(())
}

fn load_embeddings(path: &Path) -> Result<Tensor> {
    let z = if path.extension().is_some_and(|e| e == "tsv") {
        io::load_tsv(path)?
    } else {
        io::load(path)?
    };
    Ok(z)
}

fn attention_tsv(metapaths: &[String], set: &EmbeddingSet) -> String {
    let mut out = String::from("metapath\tbeta\n");
    for (m, b) in metapaths.iter().zip(&set.beta) {
        out.push_str(&format!("{m}\t{b}\n"));
    }
    out
}

fn train_logged(
    ctx: &Run,
    inputs: &ModelInputs,
    hemi: &HemiConfig,
) -> Result<hemi::train::Trained> {
    let quiet = ctx.quiet;
    let every = (hemi.epochs / 20).max(1);
    Ok(train_selfsup_with(inputs, hemi, &mut |epoch, loss| {
        if !quiet && (epoch == 1 || epoch % every == 0) {
            eprintln!("epoch {epoch:>5}  loss {loss:.6}");
        }
    })?)
}

fn report_rows(report: &TrainReport) -> Vec<(String, String)> {
    vec![
        ("epochs run".into(), report.epochs_run().to_string()),
        ("best epoch".into(), report.best_epoch.to_string()),
        ("best loss".into(), format!("{:.6}", report.best_loss)),
        ("stopped by".into(), report.stop.as_str().into()),
        ("seconds".into(), format!("{:.2}", report.seconds)),
        ("seed".into(), report.seed.to_string()),
    ]
}

/// Labeled target nodes and their class ids, in node order.
fn labeled(dataset: &Dataset) -> Result<(Vec<usize>, Vec<usize>, usize)> {
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| config_error("this command needs a labels file"))?;
    Ok((labels.nodes(), labels.classes_of_nodes(), labels.num_classes()))
}

pub fn ingest_check(ctx: &Run) -> Result<()> {
    let dataset = load_dataset(&ctx.config)?;
    let g = &dataset.graph;
    let mut rows: Vec<(String, String)> = Vec::new();
    for (i, t) in g.node_types().iter().enumerate() {
        let mark = if hemi::graph::NodeTypeId(i) == g.target_type() { " (target)" } else { "" };
        rows.push((format!("type {}{mark}", t.name), format!("{} nodes", t.count)));
    }
    for (i, r) in g.relations().iter().enumerate() {
        rows.push((
            format!("relation {}", r.name),
            format!("{} edges", g.edges(hemi::graph::RelationId(i)).len()),
        ));
    }
    let source = match dataset.feature_source {
        FeatureSource::Identity => "identity",
        FeatureSource::File => "file",
        FeatureSource::Partial => "file with identity fill",
    };
    rows.push((
        "features".into(),
        format!("{} x {} ({source})", dataset.features.rows(), dataset.features.cols()),
    ));
    if let Some(l) = &dataset.labels {
        rows.push(("labels".into(), format!("{} nodes, {} classes", l.assigned.len(), l.num_classes())));
    }
    if ctx.config.get("metapaths").is_some() {
        let metapaths = ctx.config.metapaths()?;
        for (m, graph) in metapaths.iter().zip(compose(&dataset, &metapaths)?) {
            rows.push((format!("meta-path {m}"), format!("{} undirected edges", graph.undirected_edges().len())));
        }
    }
    print_table("dataset", &rows);
    Ok(())
}

pub fn make_synthetic_cmd(ctx: &Run) -> Result<()> {
    let spec = ctx.config.synthetic()?;
    let dataset = make_synthetic(&spec)?;
    let dir = out_dir(&ctx.config)?;
    write_dataset(&dir, &dataset)?;
    let conf = format!(
        "# planted-partition graph, seed {}\ndata_dir = .\ntarget = {TARGET}\nmetapaths = {}\n",
        spec.seed,
        spec.metapaths().join(", ")
    );
    write_file(&dir.join("hemi.conf"), &conf)?;
    let mut rows = vec![
        ("directory".into(), dir.display().to_string()),
        ("papers".into(), (spec.blocks * spec.papers_per_block).to_string()),
        ("blocks".into(), spec.blocks.to_string()),
    ];
    for (r, m) in spec.relations.iter().zip(spec.metapaths()) {
        rows.push((format!("relation {}", r.name), format!("meta-path {m}")));
    }
    print_table("synthetic dataset", &rows);
    Ok(())
}

pub fn train(ctx: &Run) -> Result<()> {
    let config = &ctx.config;
    let hemi = config.hemi()?;
    let metapaths = config.metapaths()?;
    let dataset = load_dataset(config)?;
    let inputs = ModelInputs::new(&compose(&dataset, &metapaths)?, dataset.features.clone())?;
    let trained = train_logged(ctx, &inputs, &hemi)?;

    let dir = out_dir(config)?;
    save_embeddings(&dir, "embeddings", &trained.embeddings.fused)?;
    checkpoint::save(&config.checkpoint(), &trained.params, &metapaths, hemi.lambda)?;
    write_file(&dir.join("train_report.tsv"), &trained.report.to_tsv())?;
    write_file(&dir.join("attention.tsv"), &attention_tsv(&metapaths, &trained.embeddings))?;

    let mut rows = report_rows(&trained.report);
    for (m, b) in metapaths.iter().zip(&trained.embeddings.beta) {
        rows.push((format!("beta {m}"), format!("{b:.4}")));
    }
    rows.push(("output".into(), dir.display().to_string()));
    print_table("training", &rows);
    Ok(())
}

pub fn embed_cmd(ctx: &Run) -> Result<()> {
    let config = &ctx.config;
    let (params, manifest) = checkpoint::load(&config.checkpoint())?;
    let dataset = load_dataset(config)?;
    if params.in_dim() != dataset.features.cols() {
        return Err(hemi::Error::Data(format!(
            "checkpoint expects {} input features, dataset has {}",
            params.in_dim(),
            dataset.features.cols()
        ))
        .into());
    }
    let inputs = ModelInputs::new(&compose(&dataset, &manifest.metapaths)?, dataset.features.clone())?;
    let set = embed(&params, &inputs)?;
    let dir = out_dir(config)?;
    save_embeddings(&dir, "embeddings", &set.fused)?;
    write_file(&dir.join("attention.tsv"), &attention_tsv(&manifest.metapaths, &set))?;
    print_table(
        "embedding",
        &[
            ("nodes".into(), set.fused.rows().to_string()),
            ("dimension".into(), set.fused.cols().to_string()),
            ("output".into(), dir.join("embeddings.tsv").display().to_string()),
        ],
    );
    Ok(())
}

fn embeddings_for(config: &RunConfig, dataset: &Dataset) -> Result<Tensor> {
    let path = config.embeddings();
    let z = load_embeddings(&path)?;
    if z.rows() != dataset.graph.target_count() {
        return Err(hemi::Error::Data(format!(
            "{} has {} rows for {} target nodes",
            path.display(),
            z.rows(),
            dataset.graph.target_count()
        ))
        .into());
    }
    Ok(z)
}

pub fn eval_classify(ctx: &Run) -> Result<()> {
    let config = &ctx.config;
    let dataset = load_dataset(config)?;
    let z = embeddings_for(config, &dataset)?;
    let (nodes, classes, _) = labeled(&dataset)?;
    let z = z.select_rows(&nodes);
    let positions: Vec<usize> = (0..nodes.len()).collect();
    let split = config.split()?.split(&positions)?;
    let result = probe_classify(&z, &classes, &split, &config.probe()?)?;
    let rows = result.rows();
    let path = save_metrics(&out_dir(config)?, "metrics_classify.tsv", &rows)?;
    metric_table(&format!("classification ({})", path.display()), &rows);
    Ok(())
}

pub fn eval_cluster(ctx: &Run) -> Result<()> {
    let config = &ctx.config;
    let dataset = load_dataset(config)?;
    let z = embeddings_for(config, &dataset)?;
    let (nodes, classes, num_classes) = labeled(&dataset)?;
    let k = config.clusters()?.unwrap_or(num_classes);
    let result = cluster_eval(&z.select_rows(&nodes), &classes, k, config.cluster_runs()?, config.seed()?)?;
    let rows = result.rows();
    let path = save_metrics(&out_dir(config)?, "metrics_cluster.tsv", &rows)?;
    metric_table(&format!("clustering ({})", path.display()), &rows);
    Ok(())
}

fn masked(config: &RunConfig) -> Result<(Dataset, Vec<String>, EdgeMask, ModelInputs)> {
    let metapaths = config.metapaths()?;
    let dataset = load_dataset(config)?;
    let graphs = compose(&dataset, &metapaths)?;
    let mask = mask_edges(&graphs, &config.mask()?, config.seed()?)?;
    let inputs = ModelInputs::new(&mask.residual_graphs(), dataset.features.clone())?;
    Ok((dataset, metapaths, mask, inputs))
}

pub fn eval_linkpred(ctx: &Run) -> Result<()> {
    let config = &ctx.config;
    let hemi = config.hemi_for(true)?;
    let (_, _, mask, inputs) = masked(config)?;
    let trained = train_logged(ctx, &inputs, &hemi)?;
    let result = link_eval(&trained.embeddings.fused, &mask)?;
    let rows = result.rows();
    let dir = out_dir(config)?;
    save_embeddings(&dir, "embeddings_linkpred", &trained.embeddings.fused)?;
    write_file(&dir.join("train_report_linkpred.tsv"), &trained.report.to_tsv())?;
    let path = save_metrics(&dir, "metrics_linkpred.tsv", &rows)?;
    metric_table(&format!("link prediction ({})", path.display()), &rows);
    Ok(())
}

pub fn train_augmented(ctx: &Run) -> Result<()> {
    let config = &ctx.config;
    let weight = config.hemi_weight()?;
    let dir;
    let (augmented, rows, metapaths) = match config.task()? {
        Task::NodeClassification => {
            let hemi = config.hemi()?;
            let metapaths = config.metapaths()?;
            let dataset = load_dataset(config)?;
            let (nodes, classes, num_classes) = labeled(&dataset)?;
            let inputs = ModelInputs::new(&compose(&dataset, &metapaths)?, dataset.features.clone())?;
            let positions: Vec<usize> = (0..nodes.len()).collect();
            let split = config.split()?.split(&positions)?;
            let train: Vec<(usize, usize)> =
                split.train.iter().map(|&i| (nodes[i], classes[i])).collect();
            let model = train_augmented_nc(&inputs, &train, num_classes, &hemi, weight)?;
            let h = model.task_embeddings(&inputs)?;
            let truth: Vec<usize> = split.test.iter().map(|&i| classes[i]).collect();
            let pred: Vec<usize> = split.test.iter().map(|&i| argmax(h.row(nodes[i]))).collect();
            let (ma, mi) = f1_scores(&truth, &pred)?;
            dir = out_dir(config)?;
            save_embeddings(&dir, "task_embeddings", &h)?;
            let rows = vec![
                MetricRow::new("augmented_nc", "macro_f1", "test", ma, 0.0),
                MetricRow::new("augmented_nc", "micro_f1", "test", mi, 0.0),
            ];
            (model, rows, metapaths)
        }
        Task::LinkPrediction => {
            let hemi = config.hemi_for(true)?;
            let (_, metapaths, mask, inputs) = masked(config)?;
            let model = train_augmented_lp(&inputs, &mask.training_edges(), &hemi, weight)?;
            let h = model.task_embeddings(&inputs)?;
            let mut rows = link_eval(&h, &mask)?.rows();
            for r in &mut rows {
                r.task = "augmented_lp".into();
            }
            dir = out_dir(config)?;
            save_embeddings(&dir, "task_embeddings", &h)?;
            (model, rows, metapaths)
        }
    };
    let ckpt = dir.join("checkpoint_augmented");
    checkpoint::save(&ckpt, &augmented.params, &metapaths, config.hemi()?.lambda)?;
    io::save(&augmented.w_task, &ckpt.join("w_task.bin"))?;
    write_file(&dir.join("train_report_augmented.tsv"), &augmented.report.to_tsv())?;
    let path = save_metrics(&dir, "metrics_augmented.tsv", &rows)?;
    print_table("training", &report_rows(&augmented.report));
    metric_table(&format!("augmented ({})", path.display()), &rows);
    Ok(())
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}
