use std::fmt;
use std::thread;

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeTypeId, RelationId};
use crate::tensor::SparseMatrix;

/// One hop of a meta-path: a relation, optionally traversed dst → src.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Step {
    pub relation: RelationId,
    pub reversed: bool,
}

/// A composite relation given as a sequence of oriented relation hops.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MetaPathSpec {
    pub name: String,
    pub steps: Vec<Step>,
}

impl MetaPathSpec {
    /// Parses `rel1.~rel2...`; `~` marks a hop traversed in reverse.
    /// The name defaults to the source text.
    pub fn parse(text: &str, graph: &HeteroGraph) -> Result<Self> {
        let text = text.trim();
        let err = |reason: String| Error::MetaPath {
            name: text.to_string(),
            reason,
        };
        if text.is_empty() {
            return Err(err("empty meta-path".into()));
        }
        let steps = text
            .split('.')
            .map(|tok| {
                let (reversed, name) = match tok.strip_prefix('~') {
                    Some(rest) => (true, rest),
                    None => (false, tok),
                };
                graph
                    .relation_id(name)
                    .map(|relation| Step { relation, reversed })
                    .ok_or_else(|| err(format!("unknown relation `{name}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetaPathSpec {
            name: text.to_string(),
            steps,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// The same path walked backwards.
    pub fn reversed(&self) -> MetaPathSpec {
        MetaPathSpec {
            name: format!("rev({})", self.name),
            steps: self
                .steps
                .iter()
                .rev()
                .map(|s| Step {
                    relation: s.relation,
                    reversed: !s.reversed,
                })
                .collect(),
        }
    }

    /// Textual form accepted by [`MetaPathSpec::parse`].
    pub fn to_text(&self, graph: &HeteroGraph) -> String {
        self.steps
            .iter()
            .map(|s| {
                let name = &graph.relation(s.relation).name;
                if s.reversed {
                    format!("~{name}")
                } else {
                    name.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(".")
    }
}

impl fmt::Display for MetaPathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn oriented(graph: &HeteroGraph, step: Step) -> (NodeTypeId, NodeTypeId) {
    let rel = graph.relation(step.relation);
    if step.reversed {
        (rel.dst, rel.src)
    } else {
        (rel.src, rel.dst)
    }
}

/// Checks that consecutive hops compose and that the path starts and ends
/// at the target type.
pub fn validate_metapath(graph: &HeteroGraph, spec: &MetaPathSpec) -> Result<()> {
    let err = |reason: String| Error::MetaPath {
        name: spec.name.clone(),
        reason,
    };
    let Some(first) = spec.steps.first() else {
        return Err(err("empty meta-path".into()));
    };
    if let Some(s) = spec
        .steps
        .iter()
        .find(|s| s.relation.0 >= graph.relations().len())
    {
        return Err(err(format!("unknown relation id {}", s.relation.0)));
    }
    for (i, pair) in spec.steps.windows(2).enumerate() {
        let (_, dst) = oriented(graph, pair[0]);
        let (src, _) = oriented(graph, pair[1]);
        if dst != src {
            return Err(err(format!(
                "hops {} and {} do not compose: {} != {}",
                i,
                i + 1,
                graph.type_name(dst),
                graph.type_name(src)
            )));
        }
    }
    let target = graph.target_type();
    let (start, _) = oriented(graph, *first);
    let (_, end) = oriented(graph, *spec.steps.last().expect("non-empty"));
    if start != target {
        return Err(err(format!(
            "starts at {} but the target type is {}",
            graph.type_name(start),
            graph.type_name(target)
        )));
    }
    if end != target {
        return Err(err(format!(
            "ends at {} but the target type is {}",
            graph.type_name(end),
            graph.type_name(target)
        )));
    }
    Ok(())
}

/// Binary symmetric adjacency over target nodes induced by a meta-path.
///
/// Rows are sorted neighbor lists. The diagonal holds only what the
/// composition produced; self-membership is added by [`MetaPathGraph::neighbors`]
/// and by GCN normalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaPathGraph {
    pub metapath: MetaPathSpec,
    rows: Vec<Vec<usize>>,
}

impl MetaPathGraph {
    /// Builds from undirected pairs; the result is symmetrized.
    pub fn from_pairs(
        metapath: MetaPathSpec,
        n: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for (u, v) in pairs {
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!(
                    "pair ({u}, {v}) outside {n} nodes"
                )));
            }
            rows[u].push(v);
            if u != v {
                rows[v].push(u);
            }
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        Ok(MetaPathGraph { metapath, rows })
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    pub fn contains(&self, v: usize, u: usize) -> bool {
        self.rows[v].binary_search(&u).is_ok()
    }

    /// Stored row of `v`, without the implicit self.
    pub fn row(&self, v: usize) -> &[usize] {
        &self.rows[v]
    }

    /// Meta-path neighbors of `v`, which always include `v` itself.
    pub fn neighbors(&self, v: usize) -> Result<Vec<usize>> {
        let row = self.rows.get(v).ok_or_else(|| {
            Error::InvalidArgument(format!("node {v} outside {} nodes", self.rows.len()))
        })?;
        let mut out = row.clone();
        if let Err(pos) = out.binary_search(&v) {
            out.insert(pos, v);
        }
        Ok(out)
    }

    /// Number of stored (directed) entries, diagonal included.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Off-diagonal edges as `(u, v)` with `u < v`, sorted.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(u, row)| row.iter().all(|&v| self.contains(v, u)))
    }

    /// Dense 0/1 matrix, for tests and small inspections.
    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        let n = self.rows.len();
        self.rows
            .iter()
            .map(|row| {
                let mut d = vec![false; n];
                for &u in row {
                    d[u] = true;
                }
                d
            })
            .collect()
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        let n = self.rows.len();
        let triplets = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(v, row)| row.iter().map(move |&u| (v, u, 1.0)))
            .collect();
        SparseMatrix::from_triplets(n, n, triplets).expect("rows are sorted and unique")
    }
}

/// Oriented adjacency lists of one hop.
fn hop_lists(graph: &HeteroGraph, step: Step) -> Vec<Vec<usize>> {
    let (src, _) = oriented(graph, step);
    let mut lists = vec![Vec::new(); graph.node_count(src)];
    for &(s, d) in graph.edges(step.relation) {
        if step.reversed {
            lists[d].push(s);
        } else {
            lists[s].push(d);
        }
    }
    lists
}

/// Boolean reachability through the oriented hop sequence, symmetrized.
///
/// Row by row this is the sparse boolean product `A_1 · A_2 · … · A_l`
/// thresholded at one: each hop maps a frontier of node indices through the
/// hop's adjacency lists and deduplicates.
pub fn compose_metapath(graph: &HeteroGraph, spec: &MetaPathSpec) -> Result<MetaPathGraph> {
    validate_metapath(graph, spec)?;
    let hops: Vec<Vec<Vec<usize>>> = spec.steps.iter().map(|&s| hop_lists(graph, s)).collect();
    let n = graph.target_count();

    let widest = graph.node_types().iter().map(|t| t.count).max().unwrap_or(0);
    let mut stamp = vec![usize::MAX; widest];
    let mut pairs = Vec::new();
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    let mut round = 0usize;
    for v in 0..n {
        frontier.clear();
        frontier.push(v);
        for hop in &hops {
            next.clear();
            for &x in &frontier {
                for &y in &hop[x] {
                    if stamp[y] != round {
                        stamp[y] = round;
                        next.push(y);
                    }
                }
            }
            round += 1;
            std::mem::swap(&mut frontier, &mut next);
            if frontier.is_empty() {
                break;
            }
        }
        pairs.extend(frontier.iter().map(|&u| (v, u)));
    }
    MetaPathGraph::from_pairs(spec.clone(), n, pairs)
}

/// Composes several meta-paths, one thread each.
pub fn compose_all(graph: &HeteroGraph, specs: &[MetaPathSpec]) -> Result<Vec<MetaPathGraph>> {
    thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|spec| scope.spawn(move || compose_metapath(graph, spec)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("composition thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::HeteroGraphBuilder;

    /// Papers, one author type, writes: paper → author, cites: paper → paper.
    fn paper_author(papers: usize, authors: usize, writes: &[(usize, usize)]) -> HeteroGraph {
        let mut b = HeteroGraphBuilder::new();
        let p = b.node_type("paper", papers);
        let a = b.node_type("author", authors);
        let pa = b.relation("writes", p, a);
        let pp = b.relation("cites", p, p);
        b.edges(pa, writes);
        b.edge(pp, 0, 1);
        b.build(p).unwrap()
    }

    #[test]
    fn relation_with_its_reverse_is_valid() {
        let g = paper_author(2, 1, &[]);
        let spec = MetaPathSpec::parse("writes.~writes", &g).unwrap();
        validate_metapath(&g, &spec).unwrap();
    }

    #[test]
    fn non_composable_pair_is_reported() {
        let g = paper_author(2, 1, &[]);
        let spec = MetaPathSpec::parse("writes.writes", &g).unwrap();
        let err = validate_metapath(&g, &spec).unwrap_err().to_string();
        assert!(err.contains("hops 0 and 1"), "{err}");
        assert!(err.contains("author != paper"), "{err}");
    }

    #[test]
    fn single_cite_relation_is_valid() {
        let g = paper_author(2, 1, &[]);
        validate_metapath(&g, &MetaPathSpec::parse("cites", &g).unwrap()).unwrap();
    }

    #[test]
    fn wrong_endpoint_is_reported() {
        let g = paper_author(2, 1, &[]);
        let err = validate_metapath(&g, &MetaPathSpec::parse("writes", &g).unwrap())
            .unwrap_err()
            .to_string();
        assert!(err.contains("ends at author"), "{err}");
    }

    #[test]
    fn unknown_relation_fails_to_parse() {
        let g = paper_author(2, 1, &[]);
        assert!(MetaPathSpec::parse("writes.~edits", &g).is_err());
    }

    #[test]
    fn shared_author_gives_full_block() {
        let g = paper_author(2, 1, &[(0, 0), (1, 0)]);
        let spec = MetaPathSpec::parse("writes.~writes", &g).unwrap();
        let mpg = compose_metapath(&g, &spec).unwrap();
        assert_eq!(mpg.to_dense(), vec![vec![true, true], vec![true, true]]);
        assert_eq!(mpg.neighbors(0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn no_edges_gives_empty_adjacency() {
        let g = paper_author(2, 1, &[]);
        let spec = MetaPathSpec::parse("writes.~writes", &g).unwrap();
        let mpg = compose_metapath(&g, &spec).unwrap();
        assert_eq!(mpg.nnz(), 0);
        assert_eq!(mpg.neighbors(0).unwrap(), vec![0]);
    }

    #[test]
    fn two_author_blocks() {
        let g = paper_author(3, 2, &[(0, 0), (1, 0), (2, 1)]);
        let spec = MetaPathSpec::parse("writes.~writes", &g).unwrap();
        let mpg = compose_metapath(&g, &spec).unwrap();
        assert_eq!(
            mpg.to_dense(),
            vec![
                vec![true, true, false],
                vec![true, true, false],
                vec![false, false, true],
            ]
        );
        assert_eq!(mpg.neighbors(2).unwrap(), vec![2]);
        assert!(mpg.neighbors(3).is_err());
    }

    #[test]
    fn directed_relation_is_symmetrized() {
        let g = paper_author(3, 1, &[]);
        let mpg = compose_metapath(&g, &MetaPathSpec::parse("cites", &g).unwrap()).unwrap();
        assert!(mpg.contains(0, 1) && mpg.contains(1, 0));
        assert!(mpg.is_symmetric());
        assert_eq!(mpg.undirected_edges(), vec![(0, 1)]);
    }

    #[test]
    fn compose_all_matches_sequential() {
        let g = paper_author(3, 2, &[(0, 0), (1, 0), (2, 1)]);
        let specs = vec![
            MetaPathSpec::parse("writes.~writes", &g).unwrap(),
            MetaPathSpec::parse("cites", &g).unwrap(),
        ];
        let all = compose_all(&g, &specs).unwrap();
        for (spec, got) in specs.iter().zip(&all) {
            assert_eq!(&compose_metapath(&g, spec).unwrap(), got);
        }
    }

    #[test]
    fn text_round_trip() {
        let g = paper_author(2, 1, &[]);
        let spec = MetaPathSpec::parse("writes.~writes", &g).unwrap();
        assert_eq!(spec.to_text(&g), "writes.~writes");
        assert_eq!(spec.reversed().to_text(&g), "writes.~writes");
    }
}
