//! Triangular-lattice embedding of logical graphs.
//!
//! Each logical vertex gets one computational site. A graph edge whose
//! endpoints are not lattice neighbours is realised by a chain of dummy sites
//! belonging to the lower-indexed endpoint, joined to one another by
//! ferromagnetic couplings, with a single antiferromagnetic hop onto the
//! higher-indexed endpoint's computational site. Redundancy clusters add
//! further ferromagnetically locked dummies per vertex so that a readout can
//! be majority-decoded.
//!
//! Sites use "odd-r" offset coordinates: odd rows are shifted half a cell to
//! the right, giving every interior site six neighbours.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::ising::IsingModel;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub r: usize,
    pub c: usize,
}

impl Site {
    pub const fn new(r: usize, c: usize) -> Self {
        Site { r, c }
    }

    fn cube(self) -> (i64, i64, i64) {
        let r = self.r as i64;
        let x = self.c as i64 - (r - (r & 1)) / 2;
        let z = r;
        (x, -x - z, z)
    }

    /// Hop distance on the triangular lattice (ignoring defects).
    pub fn distance(self, other: Site) -> usize {
        let (a, b) = (self.cube(), other.cube());
        (a.0 - b.0)
            .abs()
            .max((a.1 - b.1).abs())
            .max((a.2 - b.2).abs()) as usize
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.r, self.c)
    }
}

fn edge_key(a: Site, b: Site) -> (Site, Site) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriangularLattice {
    pub rows: usize,
    pub cols: usize,
    pub defects: BTreeSet<Site>,
}

impl TriangularLattice {
    pub fn new(rows: usize, cols: usize) -> Self {
        TriangularLattice {
            rows,
            cols,
            defects: BTreeSet::new(),
        }
    }

    pub fn with_defects(mut self, defects: impl IntoIterator<Item = Site>) -> Self {
        self.defects.extend(defects);
        self
    }

    pub fn contains(&self, s: Site) -> bool {
        s.r < self.rows && s.c < self.cols
    }

    pub fn is_usable(&self, s: Site) -> bool {
        self.contains(s) && !self.defects.contains(&s)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Site::new(r, c)))
    }

    /// In-bounds neighbours (defective ones included), in a fixed order.
    pub fn neighbors(&self, s: Site) -> Vec<Site> {
        let (r, c) = (s.r as i64, s.c as i64);
        let shift = if s.r.is_multiple_of(2) { -1 } else { 0 };
        let cand = [
            (r, c - 1),
            (r, c + 1),
            (r - 1, c + shift),
            (r - 1, c + shift + 1),
            (r + 1, c + shift),
            (r + 1, c + shift + 1),
        ];
        cand.into_iter()
            .filter(|&(rr, cc)| rr >= 0 && cc >= 0)
            .map(|(rr, cc)| Site::new(rr as usize, cc as usize))
            .filter(|&n| self.contains(n))
            .collect()
    }

    pub fn are_adjacent(&self, a: Site, b: Site) -> bool {
        self.contains(a) && self.contains(b) && a.distance(b) == 1
    }

    fn center(&self) -> Site {
        Site::new(self.rows.saturating_sub(1) / 2, self.cols.saturating_sub(1) / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingState {
    #[serde(rename = "AF")]
    AfOn,
    #[serde(rename = "FM")]
    FmOn,
    #[serde(rename = "off")]
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coupling {
    pub state: CouplingState,
    /// Redundancy-cluster couplings are hard-wired.
    pub switchable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Computational,
    Dummy,
}

/// A logical graph laid out on a lattice. Sites not listed in `roles` are
/// unused; lattice edges not listed in `edge_states` are off.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub graph: Graph,
    pub lattice: TriangularLattice,
    pub roles: BTreeMap<Site, Role>,
    pub logical_of: BTreeMap<Site, usize>,
    pub edge_states: BTreeMap<(Site, Site), Coupling>,
    /// Graph edge `(u, v)`, `u < v` → sites from `u`'s computational site to
    /// `v`'s.
    pub paths: BTreeMap<(usize, usize), Vec<Site>>,
    /// Vertex → redundancy cluster, computational site first.
    pub clusters: BTreeMap<usize, Vec<Site>>,
}

impl Embedding {
    pub fn empty(graph: &Graph, lattice: &TriangularLattice) -> Self {
        Embedding {
            graph: graph.clone(),
            lattice: lattice.clone(),
            roles: BTreeMap::new(),
            logical_of: BTreeMap::new(),
            edge_states: BTreeMap::new(),
            paths: BTreeMap::new(),
            clusters: BTreeMap::new(),
        }
    }

    /// Active sites in ascending order. State vectors and term lists index
    /// sites by position in this list.
    pub fn active_sites(&self) -> Vec<Site> {
        self.roles.keys().copied().collect()
    }

    pub fn site_index(&self) -> BTreeMap<Site, usize> {
        self.roles.keys().enumerate().map(|(i, &s)| (s, i)).collect()
    }

    pub fn computational_site(&self, v: usize) -> Option<Site> {
        self.roles
            .iter()
            .find(|(s, r)| **r == Role::Computational && self.logical_of.get(s) == Some(&v))
            .map(|(s, _)| *s)
    }

    pub fn computational_sites(&self) -> Vec<Option<Site>> {
        let mut out = vec![None; self.graph.vertex_count()];
        for (s, r) in &self.roles {
            if *r == Role::Computational {
                if let Some(&v) = self.logical_of.get(s) {
                    if v < out.len() {
                        out[v] = Some(*s);
                    }
                }
            }
        }
        out
    }

    pub fn edge_state(&self, a: Site, b: Site) -> CouplingState {
        self.edge_states
            .get(&edge_key(a, b))
            .map(|c| c.state)
            .unwrap_or(CouplingState::Off)
    }

    pub fn dummy_count(&self) -> usize {
        self.roles.values().filter(|r| **r == Role::Dummy).count()
    }

    pub fn fm_edge_count(&self) -> usize {
        self.edge_states
            .values()
            .filter(|c| c.state == CouplingState::FmOn)
            .count()
    }

    pub fn set_coupling(&mut self, a: Site, b: Site, state: CouplingState, switchable: bool) {
        self.edge_states
            .insert(edge_key(a, b), Coupling { state, switchable });
    }

    fn occupied(&self, s: Site) -> bool {
        self.roles.contains_key(&s)
    }

    /// Connected components of the FM-coupling graph over active sites.
    pub fn fm_components(&self) -> Vec<Vec<Site>> {
        let mut adj: BTreeMap<Site, Vec<Site>> = BTreeMap::new();
        for (&(a, b), c) in &self.edge_states {
            if c.state == CouplingState::FmOn {
                adj.entry(a).or_default().push(b);
                adj.entry(b).or_default().push(a);
            }
        }
        let mut seen = BTreeSet::new();
        let mut comps = Vec::new();
        for &s in self.roles.keys() {
            if !seen.insert(s) {
                continue;
            }
            let mut comp = vec![s];
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &w in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                    if seen.insert(w) {
                        comp.push(w);
                        stack.push(w);
                    }
                }
            }
            comp.sort();
            comps.push(comp);
        }
        comps
    }

    /// Layout drawing: vertex ids on computational sites, `o` dummies, `x`
    /// defects, `.` unused; `-`/`/`/`\` FM couplings, `=`/`#` AF couplings.
    pub fn render_ascii(&self) -> String {
        let width = 4 * self.lattice.cols + 3;
        let mut out = String::new();
        for r in 0..self.lattice.rows {
            let off = if r % 2 == 1 { 2 } else { 0 };
            let mut line = vec![' '; width];
            for c in 0..self.lattice.cols {
                let s = Site::new(r, c);
                let x = 4 * c + off;
                line[x] = match (self.roles.get(&s), self.lattice.defects.contains(&s)) {
                    (_, true) => 'x',
                    (Some(Role::Computational), _) => vertex_glyph(self.logical_of[&s]),
                    (Some(Role::Dummy), _) => 'o',
                    (None, _) => '.',
                };
                if c + 1 < self.lattice.cols {
                    let glyph = match self.edge_state(s, Site::new(r, c + 1)) {
                        CouplingState::AfOn => '=',
                        CouplingState::FmOn => '-',
                        CouplingState::Off => ' ',
                    };
                    for ch in &mut line[x + 1..x + 4] {
                        *ch = glyph;
                    }
                }
            }
            let _ = writeln!(out, "{}", line.iter().collect::<String>().trim_end());
            if r + 1 == self.lattice.rows {
                break;
            }
            let mut between = vec![' '; width];
            for c in 0..self.lattice.cols {
                let s = Site::new(r, c);
                let x = 4 * c + off;
                let (down_left, down_right) = if r % 2 == 0 {
                    (c.checked_sub(1).map(|cc| Site::new(r + 1, cc)), Site::new(r + 1, c))
                } else {
                    (Some(Site::new(r + 1, c)), Site::new(r + 1, c + 1))
                };
                if let Some(dl) = down_left.filter(|&d| self.lattice.contains(d)) {
                    let g = match self.edge_state(s, dl) {
                        CouplingState::AfOn => '#',
                        CouplingState::FmOn => '/',
                        CouplingState::Off => ' ',
                    };
                    if x >= 1 {
                        between[x - 1] = g;
                    }
                }
                if self.lattice.contains(down_right) {
                    between[x + 1] = match self.edge_state(s, down_right) {
                        CouplingState::AfOn => '#',
                        CouplingState::FmOn => '\\',
                        CouplingState::Off => ' ',
                    };
                }
            }
            let _ = writeln!(out, "{}", between.iter().collect::<String>().trim_end());
        }
        out
    }
}

fn vertex_glyph(v: usize) -> char {
    std::char::from_digit((v % 36) as u32, 36).unwrap_or('?').to_ascii_uppercase()
}

// ---------------------------------------------------------------------------
// Construction

#[derive(Debug, Clone)]
pub struct EmbedOptions {
    pub seed: u64,
    /// Rip-up-and-retry budget after the first attempt.
    pub retries: usize,
    /// Extra defective sites merged into the lattice's own list.
    pub defects: Vec<Site>,
    /// Preferred hop distance between adjacent logical vertices.
    pub spacing: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            seed: 0,
            retries: 50,
            defects: Vec::new(),
            spacing: 1,
        }
    }
}

pub fn embed_graph(g: &Graph, lattice: &TriangularLattice, opts: &EmbedOptions) -> Result<Embedding> {
    let lattice = lattice.clone().with_defects(opts.defects.iter().copied());
    let usable = lattice.sites().filter(|&s| lattice.is_usable(s)).count();
    if usable < g.vertex_count() {
        return Err(Error::Capacity {
            message: format!(
                "{} logical vertices but only {usable} usable lattice sites",
                g.vertex_count()
            ),
            partial: None,
        });
    }

    let mut priority: Vec<(usize, usize)> = g.edges().to_vec();
    let mut best_partial: Option<(usize, Embedding)> = None;
    let mut last_failure = String::new();
    for attempt in 0..=opts.retries {
        let mut rng = seed::stream(opts.seed, "embed", attempt as u64);
        let spacing = opts.spacing + attempt / 10;
        let mut emb = Embedding::empty(g, &lattice);
        if let Err(msg) = place(&mut emb, attempt, spacing, &mut rng) {
            last_failure = msg;
            continue;
        }
        match route_all(&mut emb, &priority, attempt, &mut rng) {
            Ok(()) => {
                for v in 0..g.vertex_count() {
                    let s = emb.computational_site(v).expect("placed");
                    emb.clusters.insert(v, vec![s]);
                }
                return Ok(emb);
            }
            Err((failed, routed)) => {
                last_failure = format!("could not route edge {}-{}", failed.0, failed.1);
                // Rip up and retry with the failing edge routed first.
                priority.retain(|&e| e != failed);
                priority.insert(0, failed);
                if best_partial.as_ref().is_none_or(|(n, _)| routed > *n) {
                    best_partial = Some((routed, emb));
                }
            }
        }
    }
    Err(Error::Capacity {
        message: format!(
            "embedding failed after {} attempts: {last_failure}",
            opts.retries + 1
        ),
        partial: best_partial.map(|(_, e)| Box::new(e)),
    })
}

fn bfs_order(g: &Graph, attempt: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut adj = g.neighbors();
    let degrees = g.degrees();
    if attempt > 0 {
        for list in &mut adj {
            list.shuffle(rng);
        }
    }
    let mut order = Vec::with_capacity(g.vertex_count());
    let mut seen = vec![false; g.vertex_count()];
    for comp in g.components() {
        let start = if attempt == 0 {
            *comp
                .iter()
                .max_by_key(|&&v| (degrees[v], std::cmp::Reverse(v)))
                .unwrap()
        } else {
            *comp.choose(rng).unwrap()
        };
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order
}

fn place(emb: &mut Embedding, attempt: usize, spacing: usize, rng: &mut impl Rng) -> Result<(), String> {
    let g = emb.graph.clone();
    let adj = g.neighbors();
    let order = bfs_order(&g, attempt, rng);
    let mut placed: Vec<Option<Site>> = vec![None; g.vertex_count()];
    let free: Vec<Site> = emb
        .lattice
        .sites()
        .filter(|&s| emb.lattice.is_usable(s))
        .collect();
    let center = emb.lattice.center();
    let jitter = if attempt == 0 { 0.0 } else { 0.75 };

    for v in order {
        let anchors: Vec<Site> = adj[v].iter().filter_map(|&w| placed[w]).collect();
        let others: Vec<Site> = placed
            .iter()
            .enumerate()
            .filter(|(w, s)| s.is_some() && !adj[v].contains(w))
            .map(|(_, s)| s.unwrap())
            .collect();
        let any_placed = placed.iter().any(Option::is_some);
        let mut best: Option<(f64, Site)> = None;
        for &s in &free {
            if emb.occupied(s) {
                continue;
            }
            let mut cost = if !anchors.is_empty() {
                anchors
                    .iter()
                    .map(|&a| (a.distance(s) as f64 - spacing as f64).abs())
                    .sum::<f64>()
            } else if any_placed {
                // New component: sit just clear of everything placed so far.
                let d = placed
                    .iter()
                    .flatten()
                    .map(|&p| p.distance(s))
                    .min()
                    .unwrap_or(0);
                (d as f64 - (spacing + 2) as f64).abs()
            } else {
                s.distance(center) as f64
            };
            for &o in &others {
                if o.distance(s) <= spacing {
                    cost += 2.0;
                }
            }
            let open = emb
                .lattice
                .neighbors(s)
                .into_iter()
                .filter(|&n| emb.lattice.is_usable(n) && !emb.occupied(n))
                .count();
            cost -= 0.1 * open as f64;
            if jitter > 0.0 {
                cost += jitter * rng.gen::<f64>();
            }
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, s));
            }
        }
        let (_, site) = best.ok_or_else(|| format!("no free site for vertex {v}"))?;
        placed[v] = Some(site);
        emb.roles.insert(site, Role::Computational);
        emb.logical_of.insert(site, v);
    }
    Ok(())
}

fn route_all(
    emb: &mut Embedding,
    priority: &[(usize, usize)],
    attempt: usize,
    rng: &mut impl Rng,
) -> std::result::Result<(), ((usize, usize), usize)> {
    let comp = emb.computational_sites();
    for (routed, &(u, v)) in priority.iter().enumerate() {
        let (cu, cv) = (comp[u].unwrap(), comp[v].unwrap());
        let path = shortest_route(emb, cu, cv, attempt > 0, rng).ok_or(((u, v), routed))?;
        let last = path.len() - 1;
        for w in 0..last {
            if w > 0 {
                emb.roles.insert(path[w], Role::Dummy);
                emb.logical_of.insert(path[w], u);
            }
            let state = if w + 1 == last {
                CouplingState::AfOn
            } else {
                CouplingState::FmOn
            };
            emb.set_coupling(path[w], path[w + 1], state, true);
        }
        emb.paths.insert((u, v), path);
    }
    Ok(())
}

/// BFS from `from` through free usable sites to a free site adjacent to `to`
/// (or directly, when the two are neighbours).
fn shortest_route(
    emb: &Embedding,
    from: Site,
    to: Site,
    shuffle: bool,
    rng: &mut impl Rng,
) -> Option<Vec<Site>> {
    if emb.lattice.are_adjacent(from, to) {
        return Some(vec![from, to]);
    }
    let mut parent: BTreeMap<Site, Site> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(s) = queue.pop_front() {
        let mut nbrs = emb.lattice.neighbors(s);
        if shuffle {
            nbrs.shuffle(rng);
        }
        for n in nbrs {
            if !emb.lattice.is_usable(n) || emb.occupied(n) || !seen.insert(n) {
                continue;
            }
            parent.insert(n, s);
            if emb.lattice.are_adjacent(n, to) {
                let mut path = vec![to, n];
                let mut cur = n;
                while let Some(&p) = parent.get(&cur) {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(n);
        }
    }
    None
}

/// Grows every vertex's cluster to `copies` FM-locked sites.
pub fn add_redundancy(e: &Embedding, copies: usize) -> Result<Embedding> {
    if copies == 0 || copies.is_multiple_of(2) {
        return Err(Error::param(format!(
            "redundancy must be odd and at least 1, got {copies}"
        )));
    }
    let mut out = e.clone();
    for v in 0..out.graph.vertex_count() {
        let comp = out
            .computational_site(v)
            .ok_or_else(|| Error::Contract(format!("vertex {v} has no computational site")))?;
        let mut cluster = out.clusters.get(&v).cloned().unwrap_or_else(|| vec![comp]);
        let need = copies.saturating_sub(cluster.len());
        // Grow outward from the computational site first, then from the
        // vertex's own chain dummies.
        let mut queue: VecDeque<Site> = cluster.iter().copied().collect();
        let mut chain: Vec<Site> = out
            .logical_of
            .iter()
            .filter(|(s, &x)| x == v && !cluster.contains(s))
            .map(|(s, _)| *s)
            .collect();
        chain.sort_by_key(|s| (s.distance(comp), *s));
        queue.extend(chain);
        let mut added = 0;
        while added < need {
            let Some(s) = queue.pop_front() else { break };
            for n in out.lattice.neighbors(s) {
                if added == need {
                    break;
                }
                if !out.lattice.is_usable(n) || out.occupied(n) {
                    continue;
                }
                out.roles.insert(n, Role::Dummy);
                out.logical_of.insert(n, v);
                out.set_coupling(s, n, CouplingState::FmOn, false);
                cluster.push(n);
                queue.push_back(n);
                added += 1;
            }
        }
        if added < need {
            return Err(Error::Capacity {
                message: format!(
                    "vertex {v}: only {} free sites near its computational site, need {copies}",
                    cluster.len()
                ),
                partial: Some(Box::new(out)),
            });
        }
        out.clusters.insert(v, cluster);
    }
    Ok(out)
}

/// Embeds and adds redundancy, widening placement spacing until the clusters
/// fit.
pub fn embed_with_redundancy(
    g: &Graph,
    lattice: &TriangularLattice,
    opts: &EmbedOptions,
    copies: usize,
) -> Result<Embedding> {
    if copies == 0 || copies.is_multiple_of(2) {
        return Err(Error::param(format!(
            "redundancy must be odd and at least 1, got {copies}"
        )));
    }
    let mut last = None;
    for (extra, variant) in (0..4).flat_map(|x| (0..8).map(move |k| (x, k))) {
        let o = EmbedOptions {
            spacing: opts.spacing + extra,
            seed: if variant == 0 {
                opts.seed
            } else {
                seed::child(opts.seed, &format!("redundancy-{variant}"))
            },
            ..opts.clone()
        };
        let emb = match embed_graph(g, lattice, &o) {
            Ok(e) => e,
            Err(err) => {
                last = Some(err);
                continue;
            }
        };
        match add_redundancy(&emb, copies) {
            Ok(e) => return Ok(e),
            Err(err @ Error::Capacity { .. }) => last = Some(err),
            Err(err) => return Err(err),
        }
    }
    Err(last.expect("at least one attempt ran"))
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub pass: bool,
    pub violations: Vec<String>,
    pub computational_sites: usize,
    pub dummy_sites: usize,
    pub fm_edges: usize,
    pub af_edges: usize,
}

pub fn validate_embedding(e: &Embedding) -> EmbeddingReport {
    let mut v = Vec::new();
    let n = e.graph.vertex_count();

    for &s in e.roles.keys() {
        if !e.lattice.contains(s) {
            v.push(format!("site {s} outside the lattice"));
        } else if e.lattice.defects.contains(&s) {
            v.push(format!("site {s} is defective but in use"));
        }
        match e.logical_of.get(&s) {
            None => v.push(format!("active site {s} has no logical vertex")),
            Some(&x) if x >= n => v.push(format!("site {s} maps to unknown vertex {x}")),
            _ => {}
        }
    }
    for s in e.logical_of.keys() {
        if !e.roles.contains_key(s) {
            v.push(format!("site {s} has a logical vertex but no role"));
        }
    }

    let mut comp_of = vec![Vec::new(); n];
    for (&s, &r) in &e.roles {
        if r == Role::Computational {
            if let Some(&x) = e.logical_of.get(&s).filter(|&&x| x < n) {
                comp_of[x].push(s);
            }
        }
    }
    for (x, sites) in comp_of.iter().enumerate() {
        if sites.len() != 1 {
            v.push(format!("vertex {x} has {} computational sites", sites.len()));
        }
    }

    let mut af_edges = 0;
    for (&(a, b), c) in &e.edge_states {
        if c.state == CouplingState::Off {
            continue;
        }
        if !e.lattice.are_adjacent(a, b) {
            v.push(format!("coupling {a}-{b} joins non-neighbouring sites"));
        }
        for s in [a, b] {
            if e.lattice.defects.contains(&s) {
                v.push(format!("coupling {a}-{b} touches defect {s}"));
            } else if !e.roles.contains_key(&s) {
                v.push(format!("coupling {a}-{b} touches unused site {s}"));
            }
        }
        if c.state == CouplingState::AfOn {
            af_edges += 1;
            let (la, lb) = (e.logical_of.get(&a), e.logical_of.get(&b));
            match (la, lb) {
                (Some(&x), Some(&y)) if x != y && e.graph.has_edge(x, y) => {}
                _ => v.push(format!("AF coupling {a}-{b} does not join adjacent logical vertices")),
            }
        }
    }

    let mut interior_owner: BTreeMap<Site, (usize, usize)> = BTreeMap::new();
    for &(x, y) in e.graph.edges() {
        let Some(path) = e.paths.get(&(x, y)) else {
            v.push(format!("graph edge {x}-{y} has no path"));
            continue;
        };
        if path.len() < 2 {
            v.push(format!("path {x}-{y} is too short"));
            continue;
        }
        if comp_of[x].first() != path.first() || comp_of[y].first() != path.last() {
            v.push(format!("path {x}-{y} does not run between the computational sites"));
        }
        let mut af = 0;
        for w in path.windows(2) {
            if !e.lattice.are_adjacent(w[0], w[1]) {
                v.push(format!("path {x}-{y} has non-adjacent step {}-{}", w[0], w[1]));
            }
            match e.edge_state(w[0], w[1]) {
                CouplingState::AfOn => af += 1,
                CouplingState::FmOn => {}
                CouplingState::Off => {
                    v.push(format!("path {x}-{y} crosses switched-off edge {}-{}", w[0], w[1]))
                }
            }
        }
        if af != 1 {
            v.push(format!("path {x}-{y}: path AF count ≠ 1 (found {af})"));
        }
        for &s in &path[1..path.len() - 1] {
            if e.roles.get(&s) != Some(&Role::Dummy) {
                v.push(format!("path {x}-{y} interior site {s} is not a dummy"));
            }
            if let Some(prev) = interior_owner.insert(s, (x, y)) {
                v.push(format!("site {s} shared by chains {}-{} and {x}-{y}", prev.0, prev.1));
            }
        }
    }
    if af_edges != e.graph.edges().len() {
        v.push(format!(
            "{af_edges} AF couplings for {} graph edges",
            e.graph.edges().len()
        ));
    }

    for comp in e.fm_components() {
        let vertices: BTreeSet<usize> = comp.iter().filter_map(|s| e.logical_of.get(s)).copied().collect();
        let comps = comp
            .iter()
            .filter(|s| e.roles.get(s) == Some(&Role::Computational))
            .count();
        if vertices.len() != 1 || comps != 1 {
            v.push(format!(
                "FM component at {} maps to vertices {vertices:?} with {comps} computational sites",
                comp[0]
            ));
        }
    }

    for (&x, cluster) in &e.clusters {
        for s in cluster {
            if e.logical_of.get(s) != Some(&x) {
                v.push(format!("cluster site {s} does not belong to vertex {x}"));
            }
        }
    }

    EmbeddingReport {
        pass: v.is_empty(),
        violations: v,
        computational_sites: e.roles.values().filter(|r| **r == Role::Computational).count(),
        dummy_sites: e.dummy_count(),
        fm_edges: e.fm_edge_count(),
        af_edges,
    }
}

// ---------------------------------------------------------------------------
// Decoding

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogicalSpin {
    Up,
    Down,
    Inconsistent,
}

impl LogicalSpin {
    pub fn value(self) -> Option<i8> {
        match self {
            LogicalSpin::Up => Some(1),
            LogicalSpin::Down => Some(-1),
            LogicalSpin::Inconsistent => None,
        }
    }
}

impl Serialize for LogicalSpin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LogicalSpin::Up => s.serialize_i8(1),
            LogicalSpin::Down => s.serialize_i8(-1),
            LogicalSpin::Inconsistent => s.serialize_str("inconsistent"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodedConfig {
    pub logical_spins: Vec<LogicalSpin>,
    pub chain_agreement: Vec<f64>,
    /// Sites agreeing with the majority, per vertex.
    #[serde(skip)]
    pub agree_counts: Vec<usize>,
    #[serde(skip)]
    pub group_sizes: Vec<usize>,
}

impl DecodedConfig {
    pub fn is_consistent(&self) -> bool {
        self.logical_spins.iter().all(|s| *s != LogicalSpin::Inconsistent)
    }

    /// In-set vertices (spin `+1`), or `None` if any vertex is undecided.
    pub fn in_set(&self) -> Option<Vec<usize>> {
        if !self.is_consistent() {
            return None;
        }
        Some(
            self.logical_spins
                .iter()
                .enumerate()
                .filter(|(_, s)| **s == LogicalSpin::Up)
                .map(|(i, _)| i)
                .collect(),
        )
    }
}

/// Majority decoder over each vertex's sites, indexed by active-site
/// position.
#[derive(Debug, Clone)]
pub struct Decoder {
    groups: Vec<Vec<usize>>,
    site_count: usize,
}

impl Decoder {
    pub fn new(e: &Embedding) -> Self {
        let mut groups = vec![Vec::new(); e.graph.vertex_count()];
        for (i, s) in e.roles.keys().enumerate() {
            if let Some(&v) = e.logical_of.get(s) {
                groups[v].push(i);
            }
        }
        Decoder {
            groups,
            site_count: e.roles.len(),
        }
    }

    pub fn site_count(&self) -> usize {
        self.site_count
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn decode(&self, spins: &[i8]) -> Result<DecodedConfig> {
        if spins.len() != self.site_count {
            return Err(Error::Shape(format!(
                "{} spins for {} active sites",
                spins.len(),
                self.site_count
            )));
        }
        let mut logical = Vec::with_capacity(self.groups.len());
        let mut agreement = Vec::with_capacity(self.groups.len());
        let mut counts = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let up = g.iter().filter(|&&i| spins[i] > 0).count();
            let down = g.len() - up;
            let (spin, agree) = match up.cmp(&down) {
                std::cmp::Ordering::Greater => (LogicalSpin::Up, up),
                std::cmp::Ordering::Less => (LogicalSpin::Down, down),
                std::cmp::Ordering::Equal => (LogicalSpin::Inconsistent, up),
            };
            logical.push(spin);
            agreement.push(if g.is_empty() { 0.0 } else { agree as f64 / g.len() as f64 });
            counts.push(agree);
        }
        Ok(DecodedConfig {
            logical_spins: logical,
            chain_agreement: agreement,
            agree_counts: counts,
            group_sizes: self.groups.iter().map(Vec::len).collect(),
        })
    }
}

pub fn decode_config(e: &Embedding, lattice_spins: &BTreeMap<Site, i8>) -> Result<DecodedConfig> {
    let spins = e
        .roles
        .keys()
        .map(|s| {
            lattice_spins
                .get(s)
                .copied()
                .ok_or_else(|| Error::Shape(format!("no spin value for active site {s}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Decoder::new(e).decode(&spins)
}

// ---------------------------------------------------------------------------
// Ideal embedded Ising model

/// `4 · max(|h|, |J|)` over the logical model.
pub fn default_chain_strength(logical: &IsingModel) -> f64 {
    let h = logical.fields.iter().fold(0.0f64, |m, h| m.max(h.abs()));
    let j = logical.couplings.iter().fold(0.0f64, |m, c| m.max(c.2.abs()));
    4.0 * h.max(j)
}

/// Places the logical model on the embedding's active sites: each field on
/// its computational site, each coupling on its path's AF hop, and `-K` on
/// every FM coupling.
pub fn ideal_embedded_model(
    e: &Embedding,
    logical: &IsingModel,
    chain_strength: Option<f64>,
) -> Result<IsingModel> {
    if logical.n != e.graph.vertex_count() {
        return Err(Error::Shape(format!(
            "model has {} spins, embedding has {} vertices",
            logical.n,
            e.graph.vertex_count()
        )));
    }
    let k = chain_strength.unwrap_or_else(|| default_chain_strength(logical));
    let index = e.site_index();
    let mut fields = vec![0.0; index.len()];
    for (v, site) in e.computational_sites().into_iter().enumerate() {
        let site = site.ok_or_else(|| Error::Contract(format!("vertex {v} is not placed")))?;
        fields[index[&site]] = logical.fields[v];
    }
    let coupling_of: BTreeMap<(usize, usize), f64> =
        logical.couplings.iter().map(|&(i, j, c)| ((i, j), c)).collect();
    let mut couplings = Vec::new();
    for (&(a, b), c) in &e.edge_states {
        let (ia, ib) = (index[&a], index[&b]);
        match c.state {
            CouplingState::FmOn => couplings.push((ia, ib, -k)),
            CouplingState::AfOn => {
                let (x, y) = (e.logical_of[&a], e.logical_of[&b]);
                let j = coupling_of
                    .get(&(x.min(y), x.max(y)))
                    .copied()
                    .ok_or_else(|| Error::Contract(format!("AF hop {a}-{b} has no logical coupling")))?;
                couplings.push((ia, ib, j));
            }
            CouplingState::Off => {}
        }
    }
    IsingModel::from_parts(fields, couplings, logical.penalty)
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Serialize, Deserialize)]
struct LatticeJson {
    rows: usize,
    cols: usize,
    defects: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingJson {
    graph: Graph,
    lattice: LatticeJson,
    roles: Vec<(usize, usize, String)>,
    logical: Vec<(usize, usize, usize)>,
    edges: Vec<(usize, usize, usize, usize, CouplingState, bool)>,
    paths: BTreeMap<String, Vec<(usize, usize)>>,
    clusters: BTreeMap<String, Vec<(usize, usize)>>,
}

impl Serialize for Embedding {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pair = |x: &Site| (x.r, x.c);
        EmbeddingJson {
            graph: self.graph.clone(),
            lattice: LatticeJson {
                rows: self.lattice.rows,
                cols: self.lattice.cols,
                defects: self.lattice.defects.iter().map(pair).collect(),
            },
            roles: self
                .roles
                .iter()
                .map(|(s, r)| {
                    let tag = match r {
                        Role::Computational => "comp",
                        Role::Dummy => "dummy",
                    };
                    (s.r, s.c, tag.to_string())
                })
                .collect(),
            logical: self.logical_of.iter().map(|(s, &v)| (s.r, s.c, v)).collect(),
            edges: self
                .edge_states
                .iter()
                .map(|(&(a, b), c)| (a.r, a.c, b.r, b.c, c.state, c.switchable))
                .collect(),
            paths: self
                .paths
                .iter()
                .map(|(&(u, v), p)| (format!("{u}-{v}"), p.iter().map(pair).collect()))
                .collect(),
            clusters: self
                .clusters
                .iter()
                .map(|(v, c)| (v.to_string(), c.iter().map(pair).collect()))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Embedding {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = EmbeddingJson::deserialize(d)?;
        let site = |(r, c): (usize, usize)| Site::new(r, c);
        let mut roles = BTreeMap::new();
        for (r, c, tag) in raw.roles {
            let role = match tag.as_str() {
                "comp" => Role::Computational,
                "dummy" => Role::Dummy,
                other => return Err(D::Error::custom(format!("unknown role `{other}`"))),
            };
            roles.insert(Site::new(r, c), role);
        }
        let mut paths = BTreeMap::new();
        for (key, p) in raw.paths {
            let (u, v) = key
                .split_once('-')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .ok_or_else(|| D::Error::custom(format!("bad path key `{key}`")))?;
            paths.insert((u, v), p.into_iter().map(site).collect());
        }
        let mut clusters = BTreeMap::new();
        for (key, c) in raw.clusters {
            let v: usize = key
                .parse()
                .map_err(|_| D::Error::custom(format!("bad cluster key `{key}`")))?;
            clusters.insert(v, c.into_iter().map(site).collect());
        }
        Ok(Embedding {
            graph: raw.graph,
            lattice: TriangularLattice {
                rows: raw.lattice.rows,
                cols: raw.lattice.cols,
                defects: raw.lattice.defects.into_iter().map(site).collect(),
            },
            roles,
            logical_of: raw.logical.into_iter().map(|(r, c, v)| (Site::new(r, c), v)).collect(),
            edge_states: raw
                .edges
                .into_iter()
                .filter(|e| e.4 != CouplingState::Off)
                .map(|(r1, c1, r2, c2, state, switchable)| {
                    (edge_key(Site::new(r1, c1), Site::new(r2, c2)), Coupling { state, switchable })
                })
                .collect(),
            paths,
            clusters,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::{ising_ground_states, mis_to_ising};

    fn k4() -> Graph {
        Graph::new(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap()
    }

    #[test]
    fn neighbor_rule() {
        let lat = TriangularLattice::new(5, 5);
        let interior = Site::new(2, 2);
        let ns = lat.neighbors(interior);
        assert_eq!(ns.len(), 6);
        for n in &ns {
            assert!(lat.neighbors(*n).contains(&interior));
            assert_eq!(n.distance(interior), 1);
        }
        assert_eq!(lat.neighbors(Site::new(1, 2)).len(), 6);
        assert_eq!(lat.neighbors(Site::new(0, 0)).len(), 2);
        // Symmetry over the whole grid.
        for s in lat.sites() {
            for n in lat.neighbors(s) {
                assert!(lat.neighbors(n).contains(&s));
            }
        }
    }

    #[test]
    fn single_edge_on_2x2() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let e = embed_graph(&g, &TriangularLattice::new(2, 2), &EmbedOptions::default()).unwrap();
        assert_eq!(e.dummy_count(), 0);
        assert_eq!(e.edge_states.len(), 1);
        assert_eq!(e.edge_states.values().next().unwrap().state, CouplingState::AfOn);
        assert!(validate_embedding(&e).pass);
    }

    #[test]
    fn k4_on_8x8_is_valid() {
        let e = embed_graph(&k4(), &TriangularLattice::new(8, 8), &EmbedOptions::default()).unwrap();
        let r = validate_embedding(&e);
        assert!(r.pass, "{:?}\n{}", r.violations, e.render_ascii());
        assert_eq!(r.af_edges, 6);
    }

    #[test]
    fn k4_on_2x2_is_capacity_error() {
        let err = embed_graph(&k4(), &TriangularLattice::new(2, 2), &EmbedOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
    }

    #[test]
    fn redundancy() {
        let e = embed_graph(&k4(), &TriangularLattice::new(12, 12), &EmbedOptions::default()).unwrap();
        assert_eq!(add_redundancy(&e, 1).unwrap(), e);
        assert!(matches!(add_redundancy(&e, 2), Err(Error::Parameter(_))));

        let r7 = embed_with_redundancy(&k4(), &TriangularLattice::new(12, 12), &EmbedOptions::default(), 7)
            .unwrap();
        let report = validate_embedding(&r7);
        assert!(report.pass, "{:?}", report.violations);
        for (v, cluster) in &r7.clusters {
            assert_eq!(cluster.len(), 7, "vertex {v}");
            let comps = r7.fm_components();
            let holder = comps.iter().find(|c| c.contains(&cluster[0])).unwrap();
            assert!(cluster.iter().all(|s| holder.contains(s)));
            for w in cluster.iter().skip(1) {
                let cl_edges = r7
                    .edge_states
                    .iter()
                    .filter(|((a, b), c)| (a == w || b == w) && !c.switchable)
                    .count();
                assert!(cl_edges >= 1);
            }
        }
    }

    #[test]
    fn redundancy_capacity_error_names_vertex() {
        let g = Graph::new(1, []).unwrap();
        let e = embed_graph(&g, &TriangularLattice::new(1, 3), &EmbedOptions::default()).unwrap();
        match add_redundancy(&e, 5) {
            Err(Error::Capacity { message, .. }) => assert!(message.contains("vertex 0")),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn hand_built_chain() -> Embedding {
        // 0 at (0,0), dummy at (0,1), 1 at (0,2).
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let lat = TriangularLattice::new(1, 4);
        let mut e = Embedding::empty(&g, &lat);
        let (a, d, b) = (Site::new(0, 0), Site::new(0, 1), Site::new(0, 2));
        e.roles.insert(a, Role::Computational);
        e.roles.insert(d, Role::Dummy);
        e.roles.insert(b, Role::Computational);
        e.logical_of.insert(a, 0);
        e.logical_of.insert(d, 0);
        e.logical_of.insert(b, 1);
        e.set_coupling(a, d, CouplingState::FmOn, true);
        e.set_coupling(d, b, CouplingState::AfOn, true);
        e.paths.insert((0, 1), vec![a, d, b]);
        e.clusters.insert(0, vec![a]);
        e.clusters.insert(1, vec![b]);
        e
    }

    #[test]
    fn validator_flags_contract_cases() {
        let e = hand_built_chain();
        assert!(validate_embedding(&e).pass);

        let mut two_af = e.clone();
        two_af.set_coupling(Site::new(0, 0), Site::new(0, 1), CouplingState::AfOn, true);
        let r = validate_embedding(&two_af);
        assert!(r.violations.iter().any(|v| v.contains("path AF count ≠ 1")));

        let mut defect = e.clone();
        defect.lattice.defects.insert(Site::new(0, 3));
        defect.roles.insert(Site::new(0, 3), Role::Dummy);
        defect.logical_of.insert(Site::new(0, 3), 1);
        defect.set_coupling(Site::new(0, 2), Site::new(0, 3), CouplingState::FmOn, false);
        let r = validate_embedding(&defect);
        assert!(r.violations.iter().any(|v| v.contains("touches defect")));
    }

    #[test]
    fn decode_examples() {
        let e = hand_built_chain();
        let spins: BTreeMap<Site, i8> = e.roles.keys().map(|&s| (s, 1)).collect();
        let d = decode_config(&e, &spins).unwrap();
        assert_eq!(d.logical_spins, vec![LogicalSpin::Up, LogicalSpin::Up]);
        assert_eq!(d.chain_agreement, vec![1.0, 1.0]);

        let mut missing = spins.clone();
        missing.remove(&Site::new(0, 1));
        assert!(matches!(decode_config(&e, &missing), Err(Error::Shape(_))));

        let dec = Decoder {
            groups: vec![(0..7).collect()],
            site_count: 7,
        };
        let d = dec.decode(&[-1, 1, -1, 1, -1, 1, -1]).unwrap();
        assert_eq!(d.logical_spins, vec![LogicalSpin::Down]);
        assert!((d.chain_agreement[0] - 4.0 / 7.0).abs() < 1e-15);

        let dec = Decoder {
            groups: vec![(0..6).collect()],
            site_count: 6,
        };
        let d = dec.decode(&[1, 1, 1, -1, -1, -1]).unwrap();
        assert_eq!(d.logical_spins, vec![LogicalSpin::Inconsistent]);
        assert!(d.in_set().is_none());
    }

    #[test]
    fn ideal_model_on_chain() {
        let e = hand_built_chain();
        let logical = mis_to_ising(&e.graph, 2.0).unwrap();
        let m = ideal_embedded_model(&e, &logical, None).unwrap();
        assert_eq!(m.n, 3);
        let gs = ising_ground_states(&m).unwrap();
        assert_eq!(gs.degeneracy, 2);
        // Chain strength 4·max(|h|, J) = 4·0.5.
        assert!(m.couplings.iter().any(|c| c.2 == -2.0));
    }

    #[test]
    fn json_round_trip() {
        let e = embed_with_redundancy(&k4(), &TriangularLattice::new(12, 12), &EmbedOptions::default(), 3)
            .unwrap();
        let s = serde_json::to_string(&e).unwrap();
        let back: Embedding = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        assert!(s.contains("\"comp\"") && s.contains("\"AF\""));
    }

    #[test]
    fn ascii_rendering_marks_sites() {
        let e = hand_built_chain();
        let art = e.render_ascii();
        assert!(art.starts_with("0---o===1"), "{art}");
    }
}
