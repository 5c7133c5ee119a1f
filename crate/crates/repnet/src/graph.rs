//! Colored-graph kernel and the pattern space of pointed colored graphs:
//! hop metric, pointed ball extraction, color-preserving ball isomorphism
//! with a deterministic (lexicographically smallest) witness, the
//! ball-agreement distance, occurrence sets Ω(R) with the repetitivity
//! radius, pointed partial quasi-isometry checks, and persistence tables.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metric::{MetricSpace, PointId};
use crate::{Error, Result};

/// Finite simple graph with positive integer vertex colors and the
/// shortest-path (hop) metric. Vertices are dense ids `0..n`; `labels`
/// preserves external ids from graph files.
#[derive(Clone, Debug)]
pub struct ColoredGraph {
    labels: Vec<u32>,
    colors: Vec<u32>,
    offsets: Vec<u32>,
    neighbors: Vec<u32>,
    max_degree: u32,
}

impl ColoredGraph {
    /// Builds from an edge list over dense vertex ids `0..colors.len()`.
    /// Loops are rejected; duplicate edges are collapsed.
    pub fn from_edges(colors: Vec<u32>, edges: &[(u32, u32)]) -> Result<Self> {
        let n = colors.len();
        let labels = (0..n as u32).collect();
        Self::build(labels, colors, edges)
    }

    fn build(labels: Vec<u32>, colors: Vec<u32>, edges: &[(u32, u32)]) -> Result<Self> {
        let n = colors.len();
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a},{b}) out of range for {n} vertices"
                )));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("loop at vertex {a}")));
            }
            pairs.push((a.min(b), a.max(b)));
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut deg = vec![0u32; n];
        for &(a, b) in &pairs {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        let mut offsets = vec![0u32; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + deg[v];
        }
        let mut neighbors = vec![0u32; offsets[n] as usize];
        let mut fill = offsets.clone();
        for &(a, b) in &pairs {
            neighbors[fill[a as usize] as usize] = b;
            fill[a as usize] += 1;
            neighbors[fill[b as usize] as usize] = a;
            fill[b as usize] += 1;
        }
        for v in 0..n {
            neighbors[offsets[v] as usize..offsets[v + 1] as usize].sort_unstable();
        }
        let max_degree = deg.iter().copied().max().unwrap_or(0);
        Ok(ColoredGraph { labels, colors, offsets, neighbors, max_degree })
    }

    pub fn cycle(n: usize, colors: Vec<u32>) -> Result<Self> {
        if n < 3 || colors.len() != n {
            return Err(Error::InvalidParameter(format!("cycle needs n >= 3, got {n}")));
        }
        let edges: Vec<(u32, u32)> =
            (0..n as u32).map(|v| (v, if v + 1 == n as u32 { 0 } else { v + 1 })).collect();
        Self::from_edges(colors, &edges)
    }

    pub fn path(n: usize, colors: Vec<u32>) -> Result<Self> {
        if n == 0 || colors.len() != n {
            return Err(Error::InvalidParameter(format!("path needs n >= 1, got {n}")));
        }
        let edges: Vec<(u32, u32)> = (1..n as u32).map(|v| (v - 1, v)).collect();
        Self::from_edges(colors, &edges)
    }

    pub fn n(&self) -> usize {
        self.colors.len()
    }

    pub fn color(&self, v: u32) -> u32 {
        self.colors[v as usize]
    }

    pub fn colors(&self) -> &[u32] {
        &self.colors
    }

    pub fn label(&self, v: u32) -> u32 {
        self.labels[v as usize]
    }

    pub fn degree(&self, v: u32) -> u32 {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.neighbors[self.offsets[v as usize] as usize..self.offsets[v as usize + 1] as usize]
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        if self.n() == 0 {
            return true;
        }
        let mut scratch = BfsScratch::new(self.n());
        scratch.run(self, &[0], u32::MAX);
        (0..self.n() as u32).all(|v| scratch.dist_of(v).is_some())
    }

    /// Max hop distance from `v`; requires a connected graph.
    pub fn eccentricity(&self, v: u32) -> u32 {
        let mut scratch = BfsScratch::new(self.n());
        scratch.run(self, &[v], u32::MAX);
        (0..self.n() as u32).map(|u| scratch.dist_of(u).expect("graph not connected")).max().unwrap_or(0)
    }

    /// Parses the text format: `v <id> <color>` then `e <id> <id>`; blank
    /// lines and `#` comments ignored. External ids map to dense indices in
    /// ascending order.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut verts: Vec<(u32, u32)> = Vec::new();
        let mut raw_edges: Vec<(u32, u32)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Parse {
                file: file.to_string(),
                line: lineno + 1,
                reason,
            };
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let id = it.next().ok_or_else(|| err("missing vertex id".into()))?;
                    let color = it.next().ok_or_else(|| err("missing color".into()))?;
                    let id: u32 = id.parse().map_err(|_| err(format!("bad id {id:?}")))?;
                    let color: u32 =
                        color.parse().map_err(|_| err(format!("bad color {color:?}")))?;
                    if color == 0 {
                        return Err(err("colors are positive integers".into()));
                    }
                    verts.push((id, color));
                }
                Some("e") => {
                    let a = it.next().ok_or_else(|| err("missing endpoint".into()))?;
                    let b = it.next().ok_or_else(|| err("missing endpoint".into()))?;
                    let a: u32 = a.parse().map_err(|_| err(format!("bad id {a:?}")))?;
                    let b: u32 = b.parse().map_err(|_| err(format!("bad id {b:?}")))?;
                    raw_edges.push((a, b));
                }
                Some(tok) => return Err(err(format!("unknown record {tok:?}"))),
                None => unreachable!(),
            }
        }
        verts.sort_unstable();
        for w in verts.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line: 0,
                    reason: format!("duplicate vertex id {}", w[0].0),
                });
            }
        }
        let index: HashMap<u32, u32> =
            verts.iter().enumerate().map(|(k, &(id, _))| (id, k as u32)).collect();
        let mut edges = Vec::with_capacity(raw_edges.len());
        for (a, b) in raw_edges {
            let (&a, &b) = match (index.get(&a), index.get(&b)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::Parse {
                        file: file.to_string(),
                        line: 0,
                        reason: format!("edge ({a},{b}) references unknown vertex"),
                    })
                }
            };
            edges.push((a, b));
        }
        let labels: Vec<u32> = verts.iter().map(|&(id, _)| id).collect();
        let colors: Vec<u32> = verts.iter().map(|&(_, c)| c).collect();
        Self::build(labels, colors, &edges)
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in 0..self.n() as u32 {
            writeln!(out, "v {} {}", self.label(v), self.color(v)).unwrap();
        }
        for v in 0..self.n() as u32 {
            for &u in self.neighbors(v) {
                if v < u {
                    writeln!(out, "e {} {}", self.label(v), self.label(u)).unwrap();
                }
            }
        }
        out
    }
}

/// Reusable BFS workspace with epoch-stamped distances, so repeated scans on
/// a large graph avoid re-zeroing.
pub struct BfsScratch {
    dist: Vec<u32>,
    stamp: Vec<u32>,
    epoch: u32,
    queue: Vec<u32>,
}

impl BfsScratch {
    pub fn new(n: usize) -> Self {
        BfsScratch { dist: vec![0; n], stamp: vec![0; n], epoch: 0, queue: Vec::new() }
    }

    fn begin(&mut self) {
        if self.epoch == u32::MAX {
            self.stamp.fill(0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.queue.clear();
    }

    /// Distance of `v` in the most recent scan, if reached.
    pub fn dist_of(&self, v: u32) -> Option<u32> {
        (self.stamp[v as usize] == self.epoch).then(|| self.dist[v as usize])
    }

    /// Multi-source BFS up to hop `cap`. Returns the vertices reached, in
    /// BFS order (sources first, in the given order; ties by neighbor order).
    pub fn run(&mut self, g: &ColoredGraph, sources: &[u32], cap: u32) -> &[u32] {
        self.begin();
        for &s in sources {
            if self.stamp[s as usize] != self.epoch {
                self.stamp[s as usize] = self.epoch;
                self.dist[s as usize] = 0;
                self.queue.push(s);
            }
        }
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            let d = self.dist[v as usize];
            if d == cap {
                continue;
            }
            for &u in g.neighbors(v) {
                if self.stamp[u as usize] != self.epoch {
                    self.stamp[u as usize] = self.epoch;
                    self.dist[u as usize] = d + 1;
                    self.queue.push(u);
                }
            }
        }
        &self.queue
    }

    /// Like [`run`](Self::run), but also records which source each reached
    /// vertex is nearest to (index into `sources`; BFS tie-break).
    pub fn run_labeled(
        &mut self,
        g: &ColoredGraph,
        sources: &[u32],
        cap: u32,
        label: &mut Vec<u32>,
    ) -> usize {
        self.begin();
        label.resize(g.n(), u32::MAX);
        for (k, &s) in sources.iter().enumerate() {
            if self.stamp[s as usize] != self.epoch {
                self.stamp[s as usize] = self.epoch;
                self.dist[s as usize] = 0;
                label[s as usize] = k as u32;
                self.queue.push(s);
            }
        }
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            let d = self.dist[v as usize];
            if d == cap {
                continue;
            }
            for &u in g.neighbors(v) {
                if self.stamp[u as usize] != self.epoch {
                    self.stamp[u as usize] = self.epoch;
                    self.dist[u as usize] = d + 1;
                    label[u as usize] = label[v as usize];
                    self.queue.push(u);
                }
            }
        }
        self.queue.len()
    }
}

/// Exact minimum pairwise hop distance among `sources` (None if < 2), via a
/// single labeled multi-source BFS: the minimum over cross-label edges of
/// `d(u) + 1 + d(v)` equals the closest-pair distance.
pub fn min_pair_hop_distance(g: &ColoredGraph, sources: &[u32]) -> Option<u32> {
    if sources.len() < 2 {
        return None;
    }
    let mut scratch = BfsScratch::new(g.n());
    let mut label = Vec::new();
    scratch.run_labeled(g, sources, u32::MAX, &mut label);
    let mut best = u32::MAX;
    for v in 0..g.n() as u32 {
        let (Some(dv), lv) = (scratch.dist_of(v), label[v as usize]) else { continue };
        for &u in g.neighbors(v) {
            if u < v {
                continue;
            }
            if let Some(du) = scratch.dist_of(u) {
                if label[u as usize] != lv {
                    best = best.min(dv + 1 + du);
                }
            }
        }
    }
    // Duplicate source vertices collapse to one BFS seed; detect them apart.
    let mut sorted = sources.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Some(0);
    }
    (best != u32::MAX).then_some(best)
}

/// Induced colored subgraph on a hop ball, with the center distinguished.
/// Vertices are stored by ascending global id; `dist` is hop distance to the
/// center.
#[derive(Clone, Debug)]
pub struct PointedBall {
    pub center: u32,
    pub radius: u32,
    pub verts: Vec<u32>,
    pub dist: Vec<u32>,
    pub colors: Vec<u32>,
    offsets: Vec<u32>,
    adj: Vec<u32>,
}

impl PointedBall {
    pub fn n(&self) -> usize {
        self.verts.len()
    }

    pub fn local_index(&self, global: u32) -> Option<u32> {
        self.verts.binary_search(&global).ok().map(|k| k as u32)
    }

    pub fn neighbors_local(&self, v: u32) -> &[u32] {
        &self.adj[self.offsets[v as usize] as usize..self.offsets[v as usize + 1] as usize]
    }

    pub fn degree_local(&self, v: u32) -> u32 {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    pub fn has_edge_local(&self, a: u32, b: u32) -> bool {
        self.neighbors_local(a).binary_search(&b).is_ok()
    }

    /// Sorted multiset of (distance-to-center, color, induced degree); equal
    /// shapes are a necessary condition for ball isomorphism.
    pub fn shape_key(&self) -> Vec<(u32, u32, u32)> {
        let mut key: Vec<(u32, u32, u32)> = (0..self.n() as u32)
            .map(|v| (self.dist[v as usize], self.colors[v as usize], self.degree_local(v)))
            .collect();
        key.sort_unstable();
        key
    }
}

/// Exact BFS ball `D(x, R)` as an induced pointed colored subgraph.
pub fn hop_ball(g: &ColoredGraph, scratch: &mut BfsScratch, x: u32, radius: u32) -> PointedBall {
    let mut verts: Vec<u32> = scratch.run(g, &[x], radius).to_vec();
    verts.sort_unstable();
    let n = verts.len();
    let dist: Vec<u32> = verts.iter().map(|&v| scratch.dist_of(v).unwrap()).collect();
    let colors: Vec<u32> = verts.iter().map(|&v| g.color(v)).collect();
    let mut offsets = vec![0u32; n + 1];
    let mut adj: Vec<u32> = Vec::new();
    for (k, &v) in verts.iter().enumerate() {
        for &u in g.neighbors(v) {
            if scratch.dist_of(u).is_some() {
                // Global neighbor lists are sorted, so local lists are too.
                adj.push(verts.binary_search(&u).unwrap() as u32);
            }
        }
        offsets[k + 1] = adj.len() as u32;
    }
    let center = verts.binary_search(&x).unwrap() as u32;
    PointedBall { center, radius, verts, dist, colors, offsets, adj }
}

/// Witness of a pointed color-preserving graph isomorphism between two
/// balls, as global-id pairs sorted by source id.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallIsomorphism {
    pub pairs: Vec<(u32, u32)>,
}

/// Exhaustive search for a pointed color-preserving ball isomorphism.
/// Partition refinement on (distance, color, degree) prunes; backtracking in
/// ascending source-id order makes the returned witness the
/// lexicographically smallest vertex map.
pub fn ball_isomorphism(b1: &PointedBall, b2: &PointedBall) -> Result<Option<BallIsomorphism>> {
    if b1.radius != b2.radius {
        return Err(Error::RadiusMismatch(b1.radius, b2.radius));
    }
    let n = b1.n();
    if n != b2.n() || b1.shape_key() != b2.shape_key() {
        return Ok(None);
    }

    let classes = match refine_joint(b1, b2) {
        Some(c) => c,
        None => return Ok(None),
    };
    let (c1, c2, n_classes) = classes;

    // Candidate lists per class on the target side, ascending local id
    // (= ascending global id, since verts are sorted).
    let mut cands: Vec<Vec<u32>> = vec![Vec::new(); n_classes];
    for v in 0..n as u32 {
        cands[c2[v as usize] as usize].push(v);
    }

    const UNSET: u32 = u32::MAX;
    let mut assign = vec![UNSET; n]; // b1 local -> b2 local
    let mut rassign = vec![UNSET; n];
    let mut choice = vec![0u32; n]; // per-depth index into the class candidate list

    let compatible = |v: u32, c: u32, assign: &[u32], rassign: &[u32]| -> bool {
        let mut assigned_nbrs = 0u32;
        for &u in b1.neighbors_local(v) {
            let img = assign[u as usize];
            if img != UNSET {
                assigned_nbrs += 1;
                if !b2.has_edge_local(c, img) {
                    return false;
                }
            }
        }
        let mut image_nbrs = 0u32;
        for &w in b2.neighbors_local(c) {
            if rassign[w as usize] != UNSET {
                image_nbrs += 1;
            }
        }
        assigned_nbrs == image_nbrs
    };

    let mut depth: usize = 0;
    loop {
        if depth == n {
            let pairs: Vec<(u32, u32)> = (0..n)
                .map(|v| (b1.verts[v], b2.verts[assign[v] as usize]))
                .collect();
            debug_assert!(verify_ball_isomorphism(b1, b2, &pairs));
            return Ok(Some(BallIsomorphism { pairs }));
        }
        let v = depth as u32;
        let list = &cands[c1[depth] as usize];
        let mut idx = choice[depth];
        let mut advanced = false;
        while (idx as usize) < list.len() {
            let c = list[idx as usize];
            idx += 1;
            if rassign[c as usize] == UNSET && compatible(v, c, &assign, &rassign) {
                assign[depth] = c;
                rassign[c as usize] = v;
                choice[depth] = idx;
                depth += 1;
                if depth < n {
                    choice[depth] = 0;
                }
                advanced = true;
                break;
            }
        }
        if advanced {
            continue;
        }
        // Exhausted this depth: backtrack.
        if depth == 0 {
            return Ok(None);
        }
        depth -= 1;
        let c = assign[depth];
        assign[depth] = UNSET;
        rassign[c as usize] = UNSET;
    }
}

/// Joint 1-dimensional Weisfeiler-Leman refinement over both balls starting
/// from (distance, color, degree). Returns per-ball class vectors, or None
/// when the class histograms diverge (no isomorphism possible).
fn refine_joint(b1: &PointedBall, b2: &PointedBall) -> Option<(Vec<u32>, Vec<u32>, usize)> {
    let n = b1.n();
    let init = |b: &PointedBall, table: &mut HashMap<(u32, u32, u32), u32>, fresh: &mut u32| {
        (0..n as u32)
            .map(|v| {
                let key = (b.dist[v as usize], b.colors[v as usize], b.degree_local(v));
                *table.entry(key).or_insert_with(|| {
                    let id = *fresh;
                    *fresh += 1;
                    id
                })
            })
            .collect::<Vec<u32>>()
    };
    let mut table = HashMap::new();
    let mut fresh = 0u32;
    let mut c1 = init(b1, &mut table, &mut fresh);
    let mut c2 = init(b2, &mut table, &mut fresh);
    let mut count = fresh as usize;

    loop {
        if !histograms_match(&c1, &c2, count) {
            return None;
        }
        let mut table: HashMap<(u32, Vec<u32>), u32> = HashMap::new();
        let mut fresh = 0u32;
        let mut step = |b: &PointedBall, c: &[u32]| -> Vec<u32> {
            (0..n as u32)
                .map(|v| {
                    let mut nbr: Vec<u32> =
                        b.neighbors_local(v).iter().map(|&u| c[u as usize]).collect();
                    nbr.sort_unstable();
                    let key = (c[v as usize], nbr);
                    *table.entry(key).or_insert_with(|| {
                        let id = fresh;
                        fresh += 1;
                        id
                    })
                })
                .collect()
        };
        let n1 = step(b1, &c1);
        let n2 = step(b2, &c2);
        let new_count = fresh as usize;
        if new_count == count {
            // Stable partition.
            if !histograms_match(&n1, &n2, new_count) {
                return None;
            }
            return Some((n1, n2, new_count));
        }
        c1 = n1;
        c2 = n2;
        count = new_count;
    }
}

fn histograms_match(c1: &[u32], c2: &[u32], count: usize) -> bool {
    let mut h = vec![0i64; count];
    for &c in c1 {
        h[c as usize] += 1;
    }
    for &c in c2 {
        h[c as usize] -= 1;
    }
    h.iter().all(|&x| x == 0)
}

/// Full re-check of a witness: bijectivity, center, colors, distances to the
/// center, and edges both ways.
pub fn verify_ball_isomorphism(b1: &PointedBall, b2: &PointedBall, pairs: &[(u32, u32)]) -> bool {
    let n = b1.n();
    if pairs.len() != n || b2.n() != n {
        return false;
    }
    let mut map = vec![u32::MAX; n];
    let mut hit = vec![false; n];
    for &(a, b) in pairs {
        let (Some(la), Some(lb)) = (b1.local_index(a), b2.local_index(b)) else {
            return false;
        };
        if map[la as usize] != u32::MAX || hit[lb as usize] {
            return false;
        }
        map[la as usize] = lb;
        hit[lb as usize] = true;
    }
    if map[b1.center as usize] != b2.center {
        return false;
    }
    for v in 0..n as u32 {
        let w = map[v as usize];
        if b1.colors[v as usize] != b2.colors[w as usize]
            || b1.dist[v as usize] != b2.dist[w as usize]
            || b1.degree_local(v) != b2.degree_local(w)
        {
            return false;
        }
        for &u in b1.neighbors_local(v) {
            if !b2.has_edge_local(w, map[u as usize]) {
                return false;
            }
        }
    }
    true
}

/// The ball-agreement distance between two pointed colored graphs:
/// `2^-R*` for the deepest agreeing radius `R* <= r_max`, with sentinel 2
/// when even the radius-0 balls differ (`depth = -1`) and a saturation flag
/// (reported distance 0) when agreement reaches `r_max`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GstarDistance {
    pub distance: f64,
    pub depth: i32,
    pub saturated: bool,
}

pub fn gstar_distance(
    g1: &ColoredGraph,
    x1: u32,
    g2: &ColoredGraph,
    x2: u32,
    r_max: u32,
) -> GstarDistance {
    let mut s1 = BfsScratch::new(g1.n());
    let mut s2 = BfsScratch::new(g2.n());
    let mut depth: i32 = -1;
    for r in 0..=r_max {
        let b1 = hop_ball(g1, &mut s1, x1, r);
        let b2 = hop_ball(g2, &mut s2, x2, r);
        match ball_isomorphism(&b1, &b2).expect("equal radii") {
            Some(_) => depth = r as i32,
            None => break,
        }
    }
    let saturated = depth == r_max as i32;
    let distance = if saturated { 0.0 } else { 2f64.powi(-depth) };
    GstarDistance { distance, depth, saturated }
}

/// Outcome of a pointed partial quasi-isometry check on `D(x1, R)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PpqiReport {
    pub accepted: bool,
    pub lambda: f64,
    pub radius: u32,
    pub violations: Vec<String>,
    /// Integer-metric rigidity: an accepted map with lambda < 2 must be a
    /// graph isomorphism onto its image; the exhaustive re-check result.
    pub iso_onto_image: Option<bool>,
    /// The (R/lambda, 1)-p.p.q.i. radius implied when accepted.
    pub ppqi_radius: Option<f64>,
}

/// Checks that `map` (given as source -> target vertex pairs) is a pointed
/// lambda-bilipschitz partial map on `D(x1, R)`. Requires `1 <= lambda < 2`
/// and `dom map = D(x1, R)` exactly.
pub fn ppqi_check(
    g1: &ColoredGraph,
    x1: u32,
    g2: &ColoredGraph,
    x2: u32,
    radius: u32,
    lambda: f64,
    map: &[(u32, u32)],
) -> Result<PpqiReport> {
    if !(1.0..2.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} outside [1, 2)")));
    }
    let mut s1 = BfsScratch::new(g1.n());
    let mut dom: Vec<u32> = s1.run(g1, &[x1], radius).to_vec();
    dom.sort_unstable();
    let mut sources: Vec<u32> = map.iter().map(|&(a, _)| a).collect();
    sources.sort_unstable();
    if sources != dom {
        return Err(Error::DomainMismatch(radius));
    }

    let mut ordered: Vec<(u32, u32)> = map.to_vec();
    ordered.sort_unstable();
    let k = ordered.len();
    let mut violations = Vec::new();
    let note = |v: String, violations: &mut Vec<String>| {
        if violations.len() < 8 {
            violations.push(v);
        }
    };

    match ordered.binary_search_by_key(&x1, |&(a, _)| a) {
        Ok(idx) if ordered[idx].1 == x2 => {}
        _ => note(format!("map({x1}) != {x2}: not pointed"), &mut violations),
    }

    // Pairwise distances on both sides (dom is small; one BFS per vertex).
    let mut s2 = BfsScratch::new(g2.n());
    let mut d1 = vec![vec![u32::MAX; k]; k];
    let mut d2 = vec![vec![u32::MAX; k]; k];
    for (a_idx, &(a, b)) in ordered.iter().enumerate() {
        s1.run(g1, &[a], u32::MAX);
        for (c_idx, &(c, _)) in ordered.iter().enumerate() {
            if let Some(d) = s1.dist_of(c) {
                d1[a_idx][c_idx] = d;
            }
        }
        s2.run(g2, &[b], u32::MAX);
        for (c_idx, &(_, e)) in ordered.iter().enumerate() {
            if let Some(d) = s2.dist_of(e) {
                d2[a_idx][c_idx] = d;
            }
        }
    }
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (d1[i][j], d2[i][j]);
            if a == u32::MAX || b == u32::MAX {
                note(format!("unreachable pair ({}, {})", ordered[i].0, ordered[j].0), &mut violations);
                continue;
            }
            if ordered[i].1 == ordered[j].1 {
                note(
                    format!("vertices {} and {} share an image", ordered[i].0, ordered[j].0),
                    &mut violations,
                );
                continue;
            }
            let (a, b) = (a as f64, b as f64);
            if b > lambda * a || a > lambda * b {
                note(
                    format!(
                        "pair ({}, {}): d1 = {a}, d2 = {b} violates {lambda}-bilipschitz",
                        ordered[i].0, ordered[j].0
                    ),
                    &mut violations,
                );
            }
        }
    }

    let accepted = violations.is_empty();
    let iso_onto_image = accepted.then(|| {
        (0..k).all(|i| {
            (i + 1..k).all(|j| {
                g1.has_edge(ordered[i].0, ordered[j].0)
                    == g2.has_edge(ordered[i].1, ordered[j].1)
            })
        })
    });
    let ppqi_radius = accepted.then(|| radius as f64 / lambda);
    Ok(PpqiReport { accepted, lambda, radius, violations, iso_onto_image, ppqi_radius })
}

/// Ω(R) within `window`: vertices whose pointed R-ball is isomorphic to the
/// base point's. Errors if `D(p, R)` leaves the window (truncation).
pub fn omega_set(g: &ColoredGraph, p: u32, radius: u32, window: &[u32]) -> Result<Vec<u32>> {
    let mut in_window = vec![false; g.n()];
    for &v in window {
        in_window[v as usize] = true;
    }
    let mut scratch = BfsScratch::new(g.n());
    let reference = hop_ball(g, &mut scratch, p, radius);
    if reference.verts.iter().any(|&v| !in_window[v as usize]) {
        return Err(Error::BallTruncated { vertex: p, radius });
    }
    let ref_shape = reference.shape_key();
    let mut out = Vec::new();
    for &x in window {
        if x == p {
            out.push(x);
            continue;
        }
        let ball = hop_ball(g, &mut scratch, x, radius);
        if ball.n() != reference.n() || ball.shape_key() != ref_shape {
            continue;
        }
        if ball_isomorphism(&reference, &ball)?.is_some() {
            out.push(x);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Covering radius of Ω(R) within the window — the ω(R) estimate. Errors
/// with "not repetitive" when only the base point matches.
pub fn repetitivity_radius(g: &ColoredGraph, p: u32, radius: u32, window: &[u32]) -> Result<f64> {
    let omega = omega_set(g, p, radius, window)?;
    if omega == [p] && window.len() > 1 {
        return Err(Error::NotRepetitive { radius });
    }
    let mut scratch = BfsScratch::new(g.n());
    scratch.run(g, &omega, u32::MAX);
    let mut worst = 0u32;
    for &v in window {
        match scratch.dist_of(v) {
            Some(d) => worst = worst.max(d),
            None => return Err(Error::NotRepetitive { radius }),
        }
    }
    Ok(worst as f64)
}

/// For each unordered window pair, the deepest radius `R <= r_max` with
/// isomorphic pointed balls (-1 when even R = 0 fails). `failure_radius`
/// is `deepest + 1`, capped at `r_max + 1` for saturated pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PersistenceTable {
    pub r_max: u32,
    pub window: Vec<u32>,
    /// (x, y, deepest) with x < y.
    pub pairs: Vec<(u32, u32, i32)>,
    pub histogram: std::collections::BTreeMap<i32, u64>,
    pub saturated_pairs: u64,
    pub max_offdiag_depth: i32,
}

impl PersistenceTable {
    pub fn failure_radius(deepest: i32) -> i32 {
        deepest + 1
    }
}

pub fn persistence_depth(g: &ColoredGraph, window: &[u32], r_max: u32) -> PersistenceTable {
    let mut scratch = BfsScratch::new(g.n());
    let mut pairs = Vec::new();
    let mut histogram = std::collections::BTreeMap::new();
    let mut saturated_pairs = 0u64;
    let mut max_offdiag_depth = -1i32;
    for (i, &x) in window.iter().enumerate() {
        for &y in &window[i + 1..] {
            let mut deepest = -1i32;
            for r in 0..=r_max {
                let bx = hop_ball(g, &mut scratch, x, r);
                let by = hop_ball(g, &mut scratch, y, r);
                match ball_isomorphism(&bx, &by).expect("equal radii") {
                    Some(_) => deepest = r as i32,
                    None => break,
                }
            }
            if deepest == r_max as i32 {
                saturated_pairs += 1;
            }
            max_offdiag_depth = max_offdiag_depth.max(deepest);
            *histogram.entry(deepest).or_insert(0) += 1;
            pairs.push((x.min(y), x.max(y), deepest));
        }
    }
    PersistenceTable {
        r_max,
        window: window.to_vec(),
        pairs,
        histogram,
        saturated_pairs,
        max_offdiag_depth,
    }
}

/// Hop radius for the open ball `d < r` on the integer metric; `None` means
/// the open ball is empty.
fn open_hop_radius(r: f64) -> Option<u32> {
    if r <= 0.0 {
        return None;
    }
    let f = r.floor();
    if f == r {
        Some(r as u32 - 1)
    } else {
        Some(f as u32)
    }
}

/// Adapter giving a [`ColoredGraph`] the [`MetricSpace`] interface, with BFS
/// bulk operations behind a reusable scratch.
pub struct GraphMetric<'a> {
    g: &'a ColoredGraph,
    scratch: RefCell<BfsScratch>,
}

impl<'a> GraphMetric<'a> {
    pub fn new(g: &'a ColoredGraph) -> Self {
        GraphMetric { g, scratch: RefCell::new(BfsScratch::new(g.n())) }
    }

    pub fn graph(&self) -> &'a ColoredGraph {
        self.g
    }
}

impl MetricSpace for GraphMetric<'_> {
    fn len(&self) -> usize {
        self.g.n()
    }

    fn dist(&self, a: PointId, b: PointId) -> f64 {
        if a == b {
            return 0.0;
        }
        let mut scratch = self.scratch.borrow_mut();
        scratch.run(self.g, &[a as u32], u32::MAX);
        scratch.dist_of(b as u32).map_or(f64::INFINITY, |d| d as f64)
    }

    fn ball_open(&self, x: PointId, r: f64) -> Vec<PointId> {
        match open_hop_radius(r) {
            None => Vec::new(),
            Some(cap) => {
                let mut scratch = self.scratch.borrow_mut();
                let mut out: Vec<PointId> =
                    scratch.run(self.g, &[x as u32], cap).iter().map(|&v| v as PointId).collect();
                out.sort_unstable();
                out
            }
        }
    }

    fn dist_to_set(&self, q: &[PointId]) -> Vec<f64> {
        if q.is_empty() {
            return vec![f64::INFINITY; self.len()];
        }
        let sources: Vec<u32> = q.iter().map(|&x| x as u32).collect();
        let mut scratch = self.scratch.borrow_mut();
        scratch.run(self.g, &sources, u32::MAX);
        (0..self.len() as u32)
            .map(|v| scratch.dist_of(v).map_or(f64::INFINITY, |d| d as f64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_colors(n: usize) -> Vec<u32> {
        vec![1; n]
    }

    #[test]
    fn text_roundtrip() {
        let text = "# demo\nv 10 1\nv 20 2\nv 30 1\ne 10 20\ne 20 30\n";
        let g = ColoredGraph::parse(text, "demo").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.color(0), 1);
        assert_eq!(g.color(1), 2);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && !g.has_edge(0, 2));
        let again = ColoredGraph::parse(&g.to_text(), "again").unwrap();
        assert_eq!(again.to_text(), g.to_text());
    }

    #[test]
    fn hop_ball_basics() {
        let g = ColoredGraph::path(5, const_colors(5)).unwrap();
        let mut s = BfsScratch::new(5);
        let b = hop_ball(&g, &mut s, 2, 0);
        assert_eq!(b.verts, vec![2]);
        let b = hop_ball(&g, &mut s, 2, 1);
        assert_eq!(b.verts, vec![1, 2, 3]);
        assert_eq!(b.dist, vec![1, 0, 1]);
    }

    #[test]
    fn ball_growth_bound() {
        // |ball(R)| <= 1 + deg * (deg-1)^{R-1} * R for deg >= 2, R >= 1.
        type Make = fn(usize, Vec<u32>) -> crate::Result<ColoredGraph>;
        let cases: [(usize, Make); 2] =
            [(9, ColoredGraph::path as Make), (9, ColoredGraph::cycle as Make)];
        for (n, make) in cases {
            let g = make(n, const_colors(n)).unwrap();
            let deg = g.max_degree() as u64;
            let mut s = BfsScratch::new(n);
            for r in 1..=3u32 {
                let b = hop_ball(&g, &mut s, 4, r);
                let bound = 1 + deg * (deg - 1).pow(r - 1) * r as u64;
                assert!((b.n() as u64) <= bound);
            }
        }
    }

    #[test]
    fn iso_identity_and_transitive_cycle() {
        let g = ColoredGraph::cycle(5, const_colors(5)).unwrap();
        let mut s = BfsScratch::new(5);
        for r in 0..=2u32 {
            let b0 = hop_ball(&g, &mut s, 0, r);
            let same = ball_isomorphism(&b0, &b0).unwrap().unwrap();
            // Identity witness on identical balls.
            assert!(same.pairs.iter().all(|&(a, b)| a == b));
            for x in 1..5u32 {
                let bx = hop_ball(&g, &mut s, x, r);
                assert!(ball_isomorphism(&b0, &bx).unwrap().is_some());
            }
        }
    }

    #[test]
    fn iso_rejects_center_degree_mismatch() {
        // Path colored 1,2,1,2,1: middle vs endpoint at R = 1.
        let g = ColoredGraph::path(5, vec![1, 2, 1, 2, 1]).unwrap();
        let mut s = BfsScratch::new(5);
        let mid = hop_ball(&g, &mut s, 2, 1);
        let end = hop_ball(&g, &mut s, 0, 1);
        assert!(ball_isomorphism(&mid, &end).unwrap().is_none());
        let r0 = hop_ball(&g, &mut s, 0, 0);
        let r2 = hop_ball(&g, &mut s, 2, 2);
        assert!(matches!(ball_isomorphism(&r0, &r2), Err(Error::RadiusMismatch(0, 2))));
    }

    #[test]
    fn gstar_paths() {
        // Two long constant-colored paths pointed at distance k from an end:
        // agreement depth is exactly k.
        let g = ColoredGraph::path(30, const_colors(30)).unwrap();
        for k in [0u32, 1, 3, 5] {
            let d = gstar_distance(&g, k, &g, 15, 10);
            assert_eq!(d.depth, k as i32, "k = {k}");
            assert!(!d.saturated);
            assert_eq!(d.distance, 2f64.powi(-(k as i32)));
        }
        let same = gstar_distance(&g, 15, &g, 14, 10);
        assert!(same.saturated && same.distance == 0.0);
        // Center colors differ: sentinel 2.
        let h = ColoredGraph::path(30, vec![2; 30]).unwrap();
        let far = gstar_distance(&g, 15, &h, 15, 10);
        assert_eq!((far.depth, far.distance), (-1, 2.0));
    }

    #[test]
    fn ppqi_identity_and_contraction() {
        let g = ColoredGraph::cycle(12, const_colors(12)).unwrap();
        let mut s = BfsScratch::new(12);
        let dom = hop_ball(&g, &mut s, 0, 2).verts.clone();
        let ident: Vec<(u32, u32)> = dom.iter().map(|&v| (v, v)).collect();
        let rep = ppqi_check(&g, 0, &g, 0, 2, 1.0, &ident).unwrap();
        assert!(rep.accepted);
        assert_eq!(rep.iso_onto_image, Some(true));
        assert_eq!(rep.ppqi_radius, Some(2.0));

        // Rotation by 3 is also fine.
        let rot: Vec<(u32, u32)> = dom.iter().map(|&v| (v, (v + 3) % 12)).collect();
        assert!(ppqi_check(&g, 0, &g, 3, 2, 1.0, &rot).unwrap().accepted);

        // Reflecting one edge pair onto a hop-2 pair with lambda = 1 fails.
        let bad: Vec<(u32, u32)> = dom
            .iter()
            .map(|&v| (v, if v == 1 { 2 } else if v == 2 { 1 } else { v }))
            .collect();
        let rep = ppqi_check(&g, 0, &g, 0, 2, 1.0, &bad).unwrap();
        assert!(!rep.accepted);

        // Wrong domain is an error.
        let short: Vec<(u32, u32)> = dom.iter().take(3).map(|&v| (v, v)).collect();
        assert!(matches!(ppqi_check(&g, 0, &g, 0, 2, 1.0, &short), Err(Error::DomainMismatch(2))));
    }

    #[test]
    fn omega_cycle_and_path() {
        let g = ColoredGraph::cycle(9, const_colors(9)).unwrap();
        let all: Vec<u32> = (0..9).collect();
        assert_eq!(omega_set(&g, 0, 2, &all).unwrap(), all);
        assert_eq!(repetitivity_radius(&g, 0, 2, &all).unwrap(), 0.0);

        // Constant-colored path, p at the midpoint: occurrences are exactly
        // the vertices at hop distance >= R from both ends.
        let p = ColoredGraph::path(11, const_colors(11)).unwrap();
        let allp: Vec<u32> = (0..11).collect();
        let want: Vec<u32> = (2..=8).collect();
        assert_eq!(omega_set(&p, 5, 2, &allp).unwrap(), want);
    }

    #[test]
    fn omega_truncation_and_not_repetitive() {
        let p = ColoredGraph::path(11, const_colors(11)).unwrap();
        let small: Vec<u32> = (4..=6).collect();
        assert!(matches!(
            omega_set(&p, 5, 2, &small),
            Err(Error::BallTruncated { .. })
        ));
        // Injective coloring: nothing but p matches.
        let inj = ColoredGraph::path(11, (1..=11).collect()).unwrap();
        let allp: Vec<u32> = (0..11).collect();
        assert!(matches!(
            repetitivity_radius(&inj, 5, 1, &allp),
            Err(Error::NotRepetitive { radius: 1 })
        ));
    }

    #[test]
    fn omega_monotone_in_radius() {
        let colors: Vec<u32> = (0..40).map(|i| 1 + (i % 2) as u32).collect();
        let g = ColoredGraph::path(40, colors).unwrap();
        let window: Vec<u32> = (0..40).collect();
        let mut prev: Option<Vec<u32>> = None;
        for r in 0..=4u32 {
            let om = omega_set(&g, 20, r, &window).unwrap();
            if let Some(p) = &prev {
                assert!(om.iter().all(|v| p.contains(v)), "Ω(R+1) ⊆ Ω(R)");
            }
            prev = Some(om);
        }
    }

    #[test]
    fn persistence_extremes() {
        let g = ColoredGraph::cycle(8, const_colors(8)).unwrap();
        let window: Vec<u32> = (0..8).collect();
        let t = persistence_depth(&g, &window, 3);
        assert_eq!(t.saturated_pairs as usize, t.pairs.len());

        let inj = ColoredGraph::path(8, (1..=8).collect()).unwrap();
        let t = persistence_depth(&inj, &window, 3);
        assert!(t.pairs.iter().all(|&(_, _, d)| d == -1));
        assert_eq!(PersistenceTable::failure_radius(-1), 0);
    }

    #[test]
    fn min_pair_hop() {
        let g = ColoredGraph::cycle(20, const_colors(20)).unwrap();
        assert_eq!(min_pair_hop_distance(&g, &[0, 7, 13]), Some(6));
        assert_eq!(min_pair_hop_distance(&g, &[0]), None);
        assert_eq!(min_pair_hop_distance(&g, &[0, 0]), Some(0));
    }

    #[test]
    fn graph_metric_adapter() {
        let g = ColoredGraph::cycle(10, const_colors(10)).unwrap();
        let m = GraphMetric::new(&g);
        assert_eq!(m.dist(0, 5), 5.0);
        assert_eq!(m.ball_open(0, 2.0), vec![0, 1, 9]);
        assert_eq!(m.ball_open(0, 2.5), vec![0, 1, 2, 8, 9]);
        assert!(m.ball_open(0, 0.0).is_empty());
        let d = m.dist_to_set(&[0, 5]);
        assert_eq!(d[2], 2.0);
        assert_eq!(d[7], 2.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Random connected colored graph with <= 8 vertices: a spanning
        /// random tree plus extra edges.
        fn small_graph() -> impl Strategy<Value = ColoredGraph> {
            (2usize..=8)
                .prop_flat_map(|n| {
                    (
                        Just(n),
                        proptest::collection::vec(1u32..=3, n),
                        proptest::collection::vec(0usize..1000, n - 1),
                        proptest::collection::vec((0u32..n as u32, 0u32..n as u32), 0..6),
                    )
                })
                .prop_map(|(n, colors, tree, extra)| {
                    let mut edges: Vec<(u32, u32)> = (1..n)
                        .map(|v| (v as u32, (tree[v - 1] % v) as u32))
                        .collect();
                    edges.extend(extra.into_iter().filter(|&(a, b)| a != b));
                    ColoredGraph::from_edges(colors, &edges).unwrap()
                })
        }

        /// Brute-force pointed color-preserving isomorphism search in
        /// lexicographic target order; mirrors the tie-break contract.
        fn brute_force_iso(b1: &PointedBall, b2: &PointedBall) -> Option<Vec<(u32, u32)>> {
            let n = b1.n();
            if b2.n() != n {
                return None;
            }
            let mut assign = vec![u32::MAX; n];
            let mut used = vec![false; n];
            fn rec(
                b1: &PointedBall,
                b2: &PointedBall,
                depth: usize,
                assign: &mut [u32],
                used: &mut [bool],
            ) -> bool {
                let n = b1.n();
                if depth == n {
                    return true;
                }
                let v = depth as u32;
                for c in 0..n as u32 {
                    if used[c as usize] {
                        continue;
                    }
                    if b1.colors[depth] != b2.colors[c as usize]
                        || (v == b1.center) != (c == b2.center)
                    {
                        continue;
                    }
                    let ok = (0..depth).all(|u| {
                        b1.has_edge_local(v, u as u32)
                            == b2.has_edge_local(c, assign[u])
                    });
                    if !ok {
                        continue;
                    }
                    assign[depth] = c;
                    used[c as usize] = true;
                    if rec(b1, b2, depth + 1, assign, used) {
                        return true;
                    }
                    assign[depth] = u32::MAX;
                    used[c as usize] = false;
                }
                false
            }
            if rec(b1, b2, 0, &mut assign, &mut used) {
                Some(
                    (0..n)
                        .map(|v| (b1.verts[v], b2.verts[assign[v] as usize]))
                        .collect(),
                )
            } else {
                None
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            #[test]
            fn iso_matches_brute_force(
                g1 in small_graph(),
                g2 in small_graph(),
                x1 in 0u32..8,
                x2 in 0u32..8,
                r in 0u32..3,
            ) {
                let x1 = x1 % g1.n() as u32;
                let x2 = x2 % g2.n() as u32;
                let mut s1 = BfsScratch::new(g1.n());
                let mut s2 = BfsScratch::new(g2.n());
                let b1 = hop_ball(&g1, &mut s1, x1, r);
                let b2 = hop_ball(&g2, &mut s2, x2, r);
                let fast = ball_isomorphism(&b1, &b2).unwrap();
                let brute = brute_force_iso(&b1, &b2);
                prop_assert_eq!(fast.is_some(), brute.is_some());
                if let (Some(f), Some(b)) = (fast, brute) {
                    // Same deterministic (lexicographically smallest) witness.
                    prop_assert_eq!(f.pairs, b);
                }
            }

            #[test]
            fn gstar_is_pseudo_ultrametric(
                g in small_graph(),
                pts in proptest::collection::vec(0u32..8, 3),
            ) {
                let n = g.n() as u32;
                let (a, b, c) = (pts[0] % n, pts[1] % n, pts[2] % n);
                let dab = gstar_distance(&g, a, &g, b, 4).distance;
                let dbc = gstar_distance(&g, b, &g, c, 4).distance;
                let dac = gstar_distance(&g, a, &g, c, 4).distance;
                prop_assert!(dac <= dab.max(dbc));
            }
        }
    }
}
