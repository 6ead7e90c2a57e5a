//! Logical problem instances for maximum independent set.
//!
//! A [`Graph`] holds dense vertex ids `0..n` and a deduplicated set of
//! undirected edges. [`validate`] gates instances against the architecture's
//! problem class (max degree 3, planar) and [`max_independent_sets`] is the
//! exact oracle every encoding check is measured against.

use std::collections::{BTreeMap, BTreeSet};

use rustworkx_core::petgraph::graph::UnGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph with dense vertex ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    labels: BTreeMap<usize, String>,
}

impl Graph {
    /// Builds a graph, normalising each edge to `(min, max)` and collapsing
    /// duplicates.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on vertex {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {u}-{v} has an endpoint outside 0..{n}"
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Graph {
            n,
            edges: set.into_iter().collect(),
            labels: BTreeMap::new(),
        })
    }

    pub fn with_labels(mut self, labels: BTreeMap<usize, String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// Sorted `(u, v)` pairs with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> &BTreeMap<usize, String> {
        &self.labels
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// True when no edge joins two members of `set`.
    pub fn is_independent(&self, set: &[usize]) -> bool {
        let members: BTreeSet<usize> = set.iter().copied().collect();
        !self
            .edges
            .iter()
            .any(|(u, v)| members.contains(u) && members.contains(v))
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &w in &adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Induced subgraph on `vertices`, relabelled to `0..vertices.len()`.
    pub fn induced(&self, vertices: &[usize]) -> Graph {
        let index: BTreeMap<usize, usize> =
            vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let edges = self
            .edges
            .iter()
            .filter_map(|(u, v)| Some((*index.get(u)?, *index.get(v)?)))
            .collect::<Vec<_>>();
        Graph::new(vertices.len(), edges).expect("induced subgraph of a valid graph is valid")
    }
}

// ---------------------------------------------------------------------------
// Text and JSON formats

/// Parses the edge-list format: `p <n>` header, `e <u> <v>` edge lines,
/// `#` comments.
pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut n: Option<usize> = None;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let tag = toks.next().unwrap_or("");
        let nums = toks
            .map(|t| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("expected a non-negative integer, found `{t}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        match (tag, n) {
            ("p", None) => {
                if nums.len() != 1 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "header must be `p <vertex_count>`".into(),
                    });
                }
                n = Some(nums[0]);
            }
            ("p", Some(_)) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "duplicate `p` header".into(),
                })
            }
            (_, None) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "first line must be `p <vertex_count>`".into(),
                })
            }
            ("e", Some(count)) => {
                if nums.len() != 2 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "edge line must be `e <u> <v>`".into(),
                    });
                }
                let (u, v) = (nums[0], nums[1]);
                if u >= count || v >= count {
                    return Err(Error::Range {
                        line: line_no,
                        message: format!("edge {u}-{v} outside vertex range 0..{count}"),
                    });
                }
                if u == v {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("self-loop on vertex {u}"),
                    });
                }
                edges.push((u, v));
            }
            (other, Some(_)) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown line tag `{other}`"),
                })
            }
        }
    }
    let n = n.ok_or(Error::Parse {
        line: 0,
        message: "missing `p <vertex_count>` header".into(),
    })?;
    Graph::new(n, edges)
}

pub fn serialize_graph(g: &Graph) -> String {
    let mut out = format!("p {}\n", g.n);
    for (u, v) in &g.edges {
        out.push_str(&format!("e {u} {v}\n"));
    }
    out
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    labels: BTreeMap<usize, String>,
}

impl Serialize for Graph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphJson {
            n: self.n,
            edges: self.edges.clone(),
            labels: self.labels.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = GraphJson::deserialize(d)?;
        Graph::new(raw.n, raw.edges)
            .map(|g| g.with_labels(raw.labels))
            .map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Planarity {
    Planar,
    Nonplanar,
    NotChecked,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub max_degree: usize,
    pub is_degree3_ok: bool,
    pub planarity: Planarity,
    /// Which test decided planarity.
    pub planarity_method: String,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.is_degree3_ok && self.planarity == Planarity::Planar
    }
}

pub fn validate(g: &Graph) -> ValidationReport {
    let degrees = g.degrees();
    let max_degree = degrees.iter().copied().max().unwrap_or(0);
    let mut messages = Vec::new();
    let is_degree3_ok = max_degree <= 3;
    if !is_degree3_ok {
        let offenders: Vec<_> = (0..g.n).filter(|&v| degrees[v] > 3).collect();
        messages.push(format!("vertices with degree > 3: {offenders:?}"));
    }

    let n = g.n;
    let m = g.edges.len();
    let (planarity, method) = if n >= 3 && m > 3 * n - 6 {
        messages.push(format!("Euler bound violated: |E| = {m} > 3|V| - 6 = {}", 3 * n - 6));
        (Planarity::Nonplanar, "euler-bound")
    } else {
        let pg = UnGraph::<(), ()>::from_edges(g.edges.iter().map(|&(u, v)| (u as u32, v as u32)));
        // from_edges only creates nodes up to the largest endpoint; isolated
        // trailing vertices cannot affect planarity.
        if rustworkx_core::planar::is_planar(&pg) {
            (Planarity::Planar, "left-right")
        } else {
            messages.push("left-right planarity test found no planar embedding".into());
            (Planarity::Nonplanar, "left-right")
        }
    };

    ValidationReport {
        max_degree,
        is_degree3_ok,
        planarity,
        planarity_method: method.into(),
        messages,
    }
}

// ---------------------------------------------------------------------------
// Exact MIS oracle

pub const DEFAULT_MIS_CAP: usize = 32;
pub const DEFAULT_MAX_SETS: usize = 1_000_000;
const EXHAUSTIVE_BELOW: usize = 20;

#[derive(Debug, Clone)]
pub struct MisOptions {
    pub vertex_cap: usize,
    /// Below 20 vertices, use plain subset enumeration instead of
    /// branch-and-bound so the fast path can be checked against it.
    pub verify_exhaustive: bool,
    /// Cap on the number of enumerated sets after combining components.
    pub max_sets: usize,
}

impl Default for MisOptions {
    fn default() -> Self {
        MisOptions {
            vertex_cap: DEFAULT_MIS_CAP,
            verify_exhaustive: false,
            max_sets: DEFAULT_MAX_SETS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisResult {
    pub size: usize,
    /// Every maximum independent set, each sorted, listed lexicographically.
    pub sets: Vec<Vec<usize>>,
    pub node_visits: u64,
    /// Set when the cross product over components exceeded `max_sets`.
    pub truncated: bool,
}

pub fn max_independent_sets(g: &Graph) -> Result<MisResult> {
    max_independent_sets_with(g, &MisOptions::default())
}

pub fn max_independent_sets_with(g: &Graph, opts: &MisOptions) -> Result<MisResult> {
    let cap = opts.vertex_cap.min(64);
    if g.n > cap {
        return Err(Error::SizeLimit {
            what: "vertex count",
            actual: g.n,
            limit: cap,
        });
    }

    let mut node_visits = 0u64;
    let mut per_component: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut size = 0;
    for comp in g.components() {
        let sub = g.induced(&comp);
        let (best, local_sets) = if opts.verify_exhaustive && sub.n < EXHAUSTIVE_BELOW {
            exhaustive_mis(&sub, &mut node_visits)
        } else {
            BranchAndBound::new(&sub).run(&mut node_visits)
        };
        size += best;
        let mapped = local_sets
            .into_iter()
            .map(|mask| (0..sub.n).filter(|i| mask >> i & 1 == 1).map(|i| comp[i]).collect())
            .collect();
        per_component.push(mapped);
    }

    let (mut sets, truncated) = cross_product(&per_component, opts.max_sets.max(1));
    for s in &mut sets {
        s.sort_unstable();
    }
    sets.sort();
    Ok(MisResult {
        size,
        sets,
        node_visits,
        truncated,
    })
}

fn cross_product(parts: &[Vec<Vec<usize>>], cap: usize) -> (Vec<Vec<usize>>, bool) {
    let mut acc: Vec<Vec<usize>> = vec![Vec::new()];
    let mut truncated = false;
    for part in parts {
        let mut next = Vec::with_capacity((acc.len() * part.len()).min(cap));
        'outer: for prefix in &acc {
            for choice in part {
                if next.len() == cap {
                    truncated = true;
                    break 'outer;
                }
                let mut s = prefix.clone();
                s.extend_from_slice(choice);
                next.push(s);
            }
        }
        acc = next;
    }
    (acc, truncated)
}

fn adjacency_masks(g: &Graph) -> Vec<u64> {
    let mut adj = vec![0u64; g.n];
    for &(u, v) in &g.edges {
        adj[u] |= 1 << v;
        adj[v] |= 1 << u;
    }
    adj
}

/// Plain enumeration of all `2^n` subsets.
fn exhaustive_mis(g: &Graph, visits: &mut u64) -> (usize, Vec<u64>) {
    let adj = adjacency_masks(g);
    let mut best = 0;
    let mut sets = Vec::new();
    for mask in 0u64..(1u64 << g.n) {
        *visits += 1;
        let independent = (0..g.n).all(|v| mask >> v & 1 == 0 || adj[v] & mask == 0);
        if !independent {
            continue;
        }
        let size = mask.count_ones() as usize;
        if size > best {
            best = size;
            sets.clear();
        }
        if size == best {
            sets.push(mask);
        }
    }
    (best, sets)
}

/// Include/exclude search over vertex bitmasks that keeps every set tying the
/// incumbent, pruned by a matching-based upper bound.
struct BranchAndBound {
    n: usize,
    adj: Vec<u64>,
    best: usize,
    sets: Vec<u64>,
}

impl BranchAndBound {
    fn new(g: &Graph) -> Self {
        let adj = adjacency_masks(g);
        let mut bb = BranchAndBound {
            n: g.n,
            adj,
            best: 0,
            sets: Vec::new(),
        };
        bb.best = bb.greedy_lower_bound();
        bb
    }

    fn full_mask(&self) -> u64 {
        if self.n == 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        }
    }

    fn greedy_lower_bound(&self) -> usize {
        let mut cand = self.full_mask();
        let mut size = 0;
        while cand != 0 {
            let v = iter_bits(cand)
                .min_by_key(|&v| (self.adj[v] & cand).count_ones())
                .unwrap();
            size += 1;
            cand &= !(self.adj[v] | 1 << v);
        }
        size
    }

    /// `|C| - |M|` for a greedy maximal matching `M` inside `C`.
    fn upper_bound(&self, cand: u64) -> usize {
        let mut rest = cand;
        let mut matched = 0;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= !(1 << v);
            let nb = self.adj[v] & rest;
            if nb != 0 {
                let w = nb.trailing_zeros() as usize;
                rest &= !(1 << w);
                matched += 1;
            }
        }
        cand.count_ones() as usize - matched
    }

    fn run(mut self, visits: &mut u64) -> (usize, Vec<u64>) {
        // The greedy bound is achievable, so collecting ties at that size is
        // sound; larger sets reset the list.
        let full = self.full_mask();
        self.search(0, 0, full, visits);
        (self.best, self.sets)
    }

    fn search(&mut self, chosen: u64, size: usize, mut cand: u64, visits: &mut u64) {
        *visits += 1;
        // Vertices with no remaining neighbours belong to every maximum
        // extension.
        let mut chosen = chosen;
        let mut size = size;
        loop {
            let isolated = iter_bits(cand)
                .filter(|&v| self.adj[v] & cand == 0)
                .fold(0u64, |m, v| m | 1 << v);
            if isolated == 0 {
                break;
            }
            chosen |= isolated;
            size += isolated.count_ones() as usize;
            cand &= !isolated;
        }
        if cand == 0 {
            if size > self.best {
                self.best = size;
                self.sets.clear();
            }
            if size == self.best {
                self.sets.push(chosen);
            }
            return;
        }
        if size + self.upper_bound(cand) < self.best {
            return;
        }
        let v = iter_bits(cand)
            .max_by_key(|&v| ((self.adj[v] & cand).count_ones(), std::cmp::Reverse(v)))
            .unwrap();
        self.search(chosen | 1 << v, size + 1, cand & !(self.adj[v] | 1 << v), visits);
        self.search(chosen, size, cand & !(1 << v), visits);
    }
}

fn iter_bits(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let v = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(v)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k4() -> Graph {
        Graph::new(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap()
    }

    #[test]
    fn parses_k4() {
        let g = parse_graph("# K4\np 4\ne 0 1\ne 0 2\ne 0 3\ne 1 2\ne 1 3\ne 2 3\n").unwrap();
        assert_eq!(g, k4());
        assert_eq!(g.edges().len(), 6);
    }

    #[test]
    fn duplicate_edge_lines_collapse() {
        let g = parse_graph("p 2\ne 0 1\ne 1 0\ne 0 1 # again\n").unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn range_error_names_line() {
        match parse_graph("p 3\ne 0 5\n") {
            Err(Error::Range { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected range error, got {other:?}"),
        }
        // Edge-first document: the header check fires on line 1.
        match parse_graph("e 0 5\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_parse_error() {
        match parse_graph("p 3\ne 0 x\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_graph("p 3\nq 1 2\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn json_mirror() {
        let g = k4();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"n":4,"edges":[[0,1],[0,2],[0,3],[1,2],[1,3],[2,3]]}"#);
        let back: Graph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Graph>(r#"{"n":2,"edges":[[0,2]]}"#).is_err());
    }

    #[test]
    fn validate_examples() {
        let r = validate(&k4());
        assert_eq!(r.max_degree, 3);
        assert!(r.is_degree3_ok);
        assert_eq!(r.planarity, Planarity::Planar);

        let k5 = Graph::new(5, (0..5).flat_map(|u| (u + 1..5).map(move |v| (u, v)))).unwrap();
        let r = validate(&k5);
        assert_eq!(r.planarity, Planarity::Nonplanar);
        assert_eq!(r.planarity_method, "euler-bound");

        let star = Graph::new(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let r = validate(&star);
        assert_eq!(r.max_degree, 4);
        assert!(!r.is_degree3_ok);
    }

    #[test]
    fn k33_needs_the_full_test() {
        // 9 edges <= 3*6-6 = 12, so only the combinatorial test rejects it.
        let k33 = Graph::new(6, (0..3).flat_map(|u| (3..6).map(move |v| (u, v)))).unwrap();
        let r = validate(&k33);
        assert_eq!(r.planarity, Planarity::Nonplanar);
        assert_eq!(r.planarity_method, "left-right");
    }

    #[test]
    fn mis_examples() {
        let r = max_independent_sets(&k4()).unwrap();
        assert_eq!(r.size, 1);
        assert_eq!(r.sets, vec![vec![0], vec![1], vec![2], vec![3]]);

        let edge = Graph::new(2, [(0, 1)]).unwrap();
        let r = max_independent_sets(&edge).unwrap();
        assert_eq!(r.sets, vec![vec![0], vec![1]]);

        let c5 = Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]).unwrap();
        let r = max_independent_sets(&c5).unwrap();
        assert_eq!(r.size, 2);
        assert_eq!(
            r.sets,
            vec![vec![0, 2], vec![0, 3], vec![1, 3], vec![1, 4], vec![2, 4]]
        );
    }

    #[test]
    fn disconnected_graphs_combine_components() {
        // Two disjoint edges plus an isolated vertex.
        let g = Graph::new(5, [(0, 1), (2, 3)]).unwrap();
        let r = max_independent_sets(&g).unwrap();
        assert_eq!(r.size, 3);
        assert_eq!(
            r.sets,
            vec![vec![0, 2, 4], vec![0, 3, 4], vec![1, 2, 4], vec![1, 3, 4]]
        );
        assert!(!r.truncated);

        let opts = MisOptions {
            max_sets: 3,
            ..MisOptions::default()
        };
        let r = max_independent_sets_with(&g, &opts).unwrap();
        assert!(r.truncated);
        assert_eq!(r.sets.len(), 3);
    }

    #[test]
    fn size_cap() {
        let g = Graph::new(40, []).unwrap();
        assert!(matches!(
            max_independent_sets(&g),
            Err(Error::SizeLimit { actual: 40, .. })
        ));
    }

    #[test]
    fn empty_graph() {
        let r = max_independent_sets(&Graph::new(0, []).unwrap()).unwrap();
        assert_eq!(r.size, 0);
        assert_eq!(r.sets, vec![Vec::<usize>::new()]);
    }
}
