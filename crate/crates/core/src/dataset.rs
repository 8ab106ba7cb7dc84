//! Typed-graph dataset files.
//!
//! All files are UTF-8 and tab-separated. Blank lines and lines starting
//! with `#` are skipped.
//!
//! * nodes: `node_id<TAB>type_name`; indices are dense per type in file order
//! * relations: `relation_name<TAB>src_type<TAB>dst_type`
//! * edges: `src_id<TAB>relation_name<TAB>dst_id`
//! * features (optional): `node_id<TAB>f1<TAB>f2...` for target nodes
//! * labels (optional): `node_id<TAB>class_name` for target nodes

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeType, NodeTypeId, Relation};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPaths {
    pub nodes: PathBuf,
    pub relations: PathBuf,
    pub edges: PathBuf,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl DatasetPaths {
    /// The file names [`write_dataset`] uses inside `dir`. Optional files are
    /// included only if they exist.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        DatasetPaths {
            nodes: dir.join("nodes.tsv"),
            relations: dir.join("relations.tsv"),
            edges: dir.join("edges.tsv"),
            features: opt("features.tsv"),
            labels: opt("labels.tsv"),
        }
    }
}

/// Where the feature matrix came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSource {
    Identity,
    File,
    /// File rows plus one-hot indicator columns for the nodes it missed.
    Partial,
}

/// Class assignments for a subset of target nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    pub classes: Vec<String>,
    /// `(target index, class id)`, sorted by node.
    pub assigned: Vec<(usize, usize)>,
}

impl Labels {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn nodes(&self) -> Vec<usize> {
        self.assigned.iter().map(|&(v, _)| v).collect()
    }

    pub fn classes_of_nodes(&self) -> Vec<usize> {
        self.assigned.iter().map(|&(_, c)| c).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: HeteroGraph,
    /// External ids per node type, indexed by dense position.
    pub node_ids: Vec<Vec<String>>,
    pub features: Tensor,
    pub feature_source: FeatureSource,
    pub labels: Option<Labels>,
}

struct Lines {
    path: PathBuf,
    text: String,
}

impl Lines {
    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(Lines {
            path: path.to_path_buf(),
            text,
        })
    }

    fn fields(&self) -> impl Iterator<Item = (usize, Vec<&str>)> {
        self.text.lines().enumerate().filter_map(|(i, l)| {
            let l = l.trim_end_matches('\r');
            if l.trim().is_empty() || l.starts_with('#') {
                None
            } else {
                Some((i + 1, l.split('\t').collect()))
            }
        })
    }

    fn err(&self, line: usize, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            reason: reason.into(),
        }
    }

    fn expect(&self, line: usize, fields: &[&str], n: usize) -> Result<()> {
        if fields.len() != n {
            return Err(self.err(line, format!("expected {n} fields, found {}", fields.len())));
        }
        Ok(())
    }
}

/// Reads a dataset. `target` names the node type to embed.
pub fn ingest(paths: &DatasetPaths, target: &str) -> Result<Dataset> {
    let nodes = Lines::read(&paths.nodes)?;
    let mut types: Vec<NodeType> = Vec::new();
    let mut type_index: HashMap<String, usize> = HashMap::new();
    let mut node_ids: Vec<Vec<String>> = Vec::new();
    let mut lookup: HashMap<String, (usize, usize)> = HashMap::new();
    for (line, f) in nodes.fields() {
        nodes.expect(line, &f, 2)?;
        let t = *type_index.entry(f[1].to_string()).or_insert_with(|| {
            types.push(NodeType {
                name: f[1].to_string(),
                count: 0,
            });
            node_ids.push(Vec::new());
            types.len() - 1
        });
        let idx = types[t].count;
        if lookup.insert(f[0].to_string(), (t, idx)).is_some() {
            return Err(nodes.err(line, format!("duplicate node id `{}`", f[0])));
        }
        types[t].count += 1;
        node_ids[t].push(f[0].to_string());
    }
    let target = *type_index
        .get(target)
        .ok_or_else(|| Error::Data(format!("target type `{target}` has no nodes")))?;

    let rels = Lines::read(&paths.relations)?;
    let mut relations: Vec<Relation> = Vec::new();
    let mut rel_index: HashMap<String, usize> = HashMap::new();
    for (line, f) in rels.fields() {
        rels.expect(line, &f, 3)?;
        let ty = |name: &str| {
            type_index
                .get(name)
                .copied()
                .ok_or_else(|| rels.err(line, format!("unknown node type `{name}`")))
        };
        let (src, dst) = (ty(f[1])?, ty(f[2])?);
        if rel_index.insert(f[0].to_string(), relations.len()).is_some() {
            return Err(rels.err(line, format!("duplicate relation `{}`", f[0])));
        }
        relations.push(Relation {
            name: f[0].to_string(),
            src: NodeTypeId(src),
            dst: NodeTypeId(dst),
        });
    }

    let edge_lines = Lines::read(&paths.edges)?;
    let mut edges = vec![Vec::new(); relations.len()];
    for (line, f) in edge_lines.fields() {
        edge_lines.expect(line, &f, 3)?;
        let r = *rel_index
            .get(f[1])
            .ok_or_else(|| edge_lines.err(line, format!("unknown relation `{}`", f[1])))?;
        let node = |id: &str, want: NodeTypeId| -> Result<usize> {
            let &(t, i) = lookup
                .get(id)
                .ok_or_else(|| edge_lines.err(line, format!("unknown node `{id}`")))?;
            if t != want.0 {
                return Err(edge_lines.err(
                    line,
                    format!(
                        "node `{id}` has type `{}`, relation `{}` expects `{}`",
                        types[t].name, f[1], types[want.0].name
                    ),
                ));
            }
            Ok(i)
        };
        let rel = &relations[r];
        edges[r].push((node(f[0], rel.src)?, node(f[2], rel.dst)?));
    }

    let n = types[target].count;
    let graph = HeteroGraph::new(types, relations, edges, NodeTypeId(target))?;

    let (features, feature_source) = match &paths.features {
        None => (Tensor::identity(n), FeatureSource::Identity),
        Some(p) => read_features(p, &lookup, target, n)?,
    };
    let labels = match &paths.labels {
        None => None,
        Some(p) => Some(read_labels(p, &lookup, target)?),
    };
    Ok(Dataset {
        graph,
        node_ids,
        features,
        feature_source,
        labels,
    })
}

fn read_features(
    path: &Path,
    lookup: &HashMap<String, (usize, usize)>,
    target: usize,
    n: usize,
) -> Result<(Tensor, FeatureSource)> {
    let lines = Lines::read(path)?;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut width = None;
    for (line, f) in lines.fields() {
        let &(t, i) = lookup
            .get(f[0])
            .ok_or_else(|| lines.err(line, format!("unknown node `{}`", f[0])))?;
        if t != target {
            continue;
        }
        let values = f[1..]
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| lines.err(line, format!("bad feature value `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(lines.err(line, "feature row without values"));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(lines.err(
                    line,
                    format!("ragged feature row: {} values, expected {w}", values.len()),
                ))
            }
            _ => {}
        }
        if rows[i].replace(values).is_some() {
            return Err(lines.err(line, format!("duplicate feature row for `{}`", f[0])));
        }
    }
    let Some(width) = width else {
        return Ok((Tensor::identity(n), FeatureSource::Identity));
    };
    if rows.iter().all(Option::is_some) {
        let data = rows.into_iter().flatten().flatten().collect();
        return Ok((Tensor::new(vec![n, width], data)?, FeatureSource::File));
    }
    let cols = width + n;
    let mut out = Tensor::zeros(&[n, cols]);
    for (i, row) in rows.iter().enumerate() {
        match row {
            Some(values) => {
                for (k, &v) in values.iter().enumerate() {
                    out.set(i, k, v);
                }
            }
            None => out.set(i, width + i, 1.0),
        }
    }
    Ok((out, FeatureSource::Partial))
}

fn read_labels(
    path: &Path,
    lookup: &HashMap<String, (usize, usize)>,
    target: usize,
) -> Result<Labels> {
    let lines = Lines::read(path)?;
    let mut classes: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut assigned: Vec<(usize, usize)> = Vec::new();
    for (line, f) in lines.fields() {
        lines.expect(line, &f, 2)?;
        let &(t, i) = lookup
            .get(f[0])
            .ok_or_else(|| lines.err(line, format!("unknown node `{}`", f[0])))?;
        if t != target {
            return Err(lines.err(line, format!("node `{}` is not a target node", f[0])));
        }
        let c = *class_index.entry(f[1].to_string()).or_insert_with(|| {
            classes.push(f[1].to_string());
            classes.len() - 1
        });
        assigned.push((i, c));
    }
    assigned.sort_unstable();
    if let Some(w) = assigned.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Data(format!(
            "{}: node index {} labeled twice",
            path.display(),
            w[0].0
        )));
    }
    Ok(Labels { classes, assigned })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

/// Writes `dataset` in the layout [`DatasetPaths::in_dir`] expects. The
/// features file is omitted for identity features.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<DatasetPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let g = &dataset.graph;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e: std::io::Error| Error::io(format!("writing {}", path.display()), e)
    };
    let paths = DatasetPaths {
        nodes: dir.join("nodes.tsv"),
        relations: dir.join("relations.tsv"),
        edges: dir.join("edges.tsv"),
        features: (dataset.feature_source != FeatureSource::Identity)
            .then(|| dir.join("features.tsv")),
        labels: dataset.labels.as_ref().map(|_| dir.join("labels.tsv")),
    };

    let mut w = create(&paths.nodes)?;
    for (t, ids) in g.node_types().iter().zip(&dataset.node_ids) {
        for id in ids {
            writeln!(w, "{id}\t{}", t.name).map_err(io(&paths.nodes))?;
        }
    }
    w.flush().map_err(io(&paths.nodes))?;

    let mut w = create(&paths.relations)?;
    for r in g.relations() {
        writeln!(w, "{}\t{}\t{}", r.name, g.type_name(r.src), g.type_name(r.dst))
            .map_err(io(&paths.relations))?;
    }
    w.flush().map_err(io(&paths.relations))?;

    let mut w = create(&paths.edges)?;
    for (k, r) in g.relations().iter().enumerate() {
        let (src_ids, dst_ids) = (&dataset.node_ids[r.src.0], &dataset.node_ids[r.dst.0]);
        for &(s, d) in g.edges(crate::graph::RelationId(k)) {
            writeln!(w, "{}\t{}\t{}", src_ids[s], r.name, dst_ids[d]).map_err(io(&paths.edges))?;
        }
    }
    w.flush().map_err(io(&paths.edges))?;

    let target_ids = &dataset.node_ids[g.target_type().0];
    if let Some(p) = &paths.features {
        let mut w = create(p)?;
        for (i, id) in target_ids.iter().enumerate() {
            write!(w, "{id}").map_err(io(p))?;
            for v in dataset.features.row(i) {
                write!(w, "\t{v:?}").map_err(io(p))?;
            }
            writeln!(w).map_err(io(p))?;
        }
        w.flush().map_err(io(p))?;
    }
    if let (Some(p), Some(labels)) = (&paths.labels, &dataset.labels) {
        let mut w = create(p)?;
        // grouped by class so re-reading assigns the same class ids
        let mut rows = labels.assigned.clone();
        rows.sort_by_key(|&(v, c)| (c, v));
        for (v, c) in rows {
            writeln!(w, "{}\t{}", target_ids[v], labels.classes[c]).map_err(io(p))?;
        }
        w.flush().map_err(io(p))?;
    }
    Ok(paths)
}
