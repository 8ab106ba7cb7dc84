//! Downstream evaluation of frozen embeddings.

mod classify;
mod cluster;
mod linkpred;
pub mod metrics;

use std::io::Write;

pub use classify::{probe_classify, ProbeConfig, ProbeResult, Split, SplitSpec};
pub use cluster::{cluster_eval, kmeans, ClusterResult};
pub use linkpred::{
    link_eval, link_scores, mask_counts, mask_edges, EdgeMask, LinkResult, LinkScore, MaskFractions,
    MetaPathMask,
};

/// One row of a metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub task: String,
    pub metric: String,
    pub scope: String,
    pub value: f64,
    pub stddev: f64,
}

impl MetricRow {
    pub fn new(task: &str, metric: &str, scope: &str, value: f64, stddev: f64) -> Self {
        MetricRow {
            task: task.into(),
            metric: metric.into(),
            scope: scope.into(),
            value,
            stddev,
        }
    }
}

pub const METRICS_HEADER: &str = "task\tmetric\tscope\tvalue\tstddev";

pub fn write_metrics<W: Write>(mut out: W, rows: &[MetricRow]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(out, "{}\t{}\t{}\t{}\t{}", r.task, r.metric, r.scope, r.value, r.stddev)?;
    }
    Ok(())
}

impl ProbeResult {
    pub fn rows(&self) -> Vec<MetricRow> {
        vec![
            MetricRow::new("classify", "macro_f1", "all", self.macro_f1, self.macro_std),
            MetricRow::new("classify", "micro_f1", "all", self.micro_f1, self.micro_std),
        ]
    }
}

impl ClusterResult {
    pub fn rows(&self) -> Vec<MetricRow> {
        vec![
            MetricRow::new("cluster", "nmi", "all", self.nmi, self.nmi_std),
            MetricRow::new("cluster", "ari", "all", self.ari, self.ari_std),
        ]
    }
}

impl LinkResult {
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        for s in &self.per_metapath {
            rows.push(MetricRow::new("linkpred", "auc", &s.name, s.auc, 0.0));
            rows.push(MetricRow::new("linkpred", "ap", &s.name, s.ap, 0.0));
        }
        rows.push(MetricRow::new("linkpred", "auc", "macro", self.mean_auc, self.auc_std));
        rows.push(MetricRow::new("linkpred", "ap", "macro", self.mean_ap, self.ap_std));
        rows
    }
}
