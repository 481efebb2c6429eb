//! Datacenter graph, link bandwidth ledger, and bandwidth-constrained path discovery.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::STEPS_PER_SECOND;

/// Default link capacity in Mbps.
pub const DEFAULT_LINK_MBPS: f64 = 500.0;
/// Propagation speed of light in fiber.
pub const DEFAULT_FIBER_KM_PER_S: f64 = 2.0e5;
/// Paths whose lengths differ by less than this are considered tied.
pub const LENGTH_TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DcId(pub usize);

impl fmt::Display for DcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bandwidth in kilobits per second. Integer so that reservations balance exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Kbps(pub u64);

impl Kbps {
    pub fn from_mbps(mbps: f64) -> Kbps {
        Kbps((mbps * 1000.0).round().max(0.0) as u64)
    }

    pub fn mbps(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl fmt::Display for Kbps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Mbps", self.mbps())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("unknown datacenter id {0}")]
    UnknownDc(usize),
    #[error("link {a}-{b} has residual {residual} < requested {requested}")]
    InsufficientResidual {
        a: DcId,
        b: DcId,
        residual: Kbps,
        requested: Kbps,
    },
    #[error("release on link {a}-{b} would exceed capacity {capacity}")]
    OverCapacity { a: DcId, b: DcId, capacity: Kbps },
    #[error("path hop {a}-{b} is not a link")]
    NotALink { a: DcId, b: DcId },
    #[error("invalid topology: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: DcId,
    pub x_km: f64,
    pub y_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: DcId,
    pub b: DcId,
    pub capacity: Kbps,
    pub residual: Kbps,
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub hops: Vec<DcId>,
    pub length_km: f64,
}

impl PathResult {
    pub fn trivial(at: DcId) -> PathResult {
        PathResult {
            hops: vec![at],
            length_km: 0.0,
        }
    }

    pub fn src(&self) -> DcId {
        self.hops[0]
    }

    pub fn dest(&self) -> DcId {
        *self.hops.last().expect("path has at least one hop")
    }

    pub fn contains(&self, dc: DcId) -> bool {
        self.hops.contains(&dc)
    }

    pub fn hop_pairs(&self) -> impl Iterator<Item = (DcId, DcId)> + '_ {
        self.hops.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Branch-and-bound: partial paths longer than the best bound are abandoned.
    Pruned,
    /// Full enumeration of simple paths. Used to cross-check pruning.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    links: Vec<Link>,
    /// Sorted neighbor lists: (neighbor, link index).
    adj: Vec<Vec<(DcId, usize)>>,
    /// Euclidean distances between node coordinates.
    dist: Vec<Vec<f64>>,
    fiber_km_per_s: f64,
}

impl NetworkGraph {
    /// Builds a graph. Node ids must be exactly `0..n` in order. Each edge is
    /// `(a, b, capacity, length override)`; without an override the length is
    /// the Euclidean distance between the endpoints.
    pub fn new(
        nodes: Vec<Node>,
        edges: &[(DcId, DcId, Kbps, Option<f64>)],
        fiber_km_per_s: f64,
    ) -> Result<NetworkGraph, TopologyError> {
        let n = nodes.len();
        if n == 0 {
            return Err(TopologyError::Invalid("no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id.0 != i {
                return Err(TopologyError::Invalid(format!(
                    "node ids must be 0..{n} in order, found {} at position {i}",
                    node.id
                )));
            }
        }
        if !(fiber_km_per_s > 0.0) {
            return Err(TopologyError::Invalid("fiber speed must be positive".into()));
        }
        let dist: Vec<Vec<f64>> = nodes
            .iter()
            .map(|p| {
                nodes
                    .iter()
                    .map(|q| (p.x_km - q.x_km).hypot(p.y_km - q.y_km))
                    .collect()
            })
            .collect();

        let mut links = Vec::with_capacity(edges.len());
        let mut adj = vec![Vec::new(); n];
        for &(a, b, capacity, length) in edges {
            if a.0 >= n {
                return Err(TopologyError::UnknownDc(a.0));
            }
            if b.0 >= n {
                return Err(TopologyError::UnknownDc(b.0));
            }
            if a == b {
                return Err(TopologyError::Invalid(format!("self-loop at {a}")));
            }
            if adj[a.0].iter().any(|&(m, _)| m == b) {
                return Err(TopologyError::Invalid(format!("duplicate link {a}-{b}")));
            }
            let length_km = length.unwrap_or(dist[a.0][b.0]);
            if !(length_km >= 0.0) || !length_km.is_finite() {
                return Err(TopologyError::Invalid(format!("bad length on {a}-{b}")));
            }
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            adj[a.0].push((b, links.len()));
            adj[b.0].push((a, links.len()));
            links.push(Link {
                a,
                b,
                capacity,
                residual: capacity,
                length_km,
            });
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(NetworkGraph {
            nodes,
            links,
            adj,
            dist,
            fiber_km_per_s,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn dc_ids(&self) -> impl Iterator<Item = DcId> {
        (0..self.nodes.len()).map(DcId)
    }

    pub fn distance(&self, m: DcId, n: DcId) -> f64 {
        self.dist[m.0][n.0]
    }

    pub fn fiber_km_per_s(&self) -> f64 {
        self.fiber_km_per_s
    }

    pub fn neighbors(&self, dc: DcId) -> impl Iterator<Item = DcId> + '_ {
        self.adj[dc.0].iter().map(|&(m, _)| m)
    }

    pub fn link_between(&self, a: DcId, b: DcId) -> Option<&Link> {
        self.link_index(a, b).map(|i| &self.links[i])
    }

    fn link_index(&self, a: DcId, b: DcId) -> Option<usize> {
        self.adj
            .get(a.0)?
            .iter()
            .find(|&&(m, _)| m == b)
            .map(|&(_, i)| i)
    }

    fn check_dc(&self, dc: DcId) -> Result<(), TopologyError> {
        if dc.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TopologyError::UnknownDc(dc.0))
        }
    }

    /// Shortest simple path from `src` to `dest` using only links whose residual
    /// is at least `req`. Ties within [`LENGTH_TIE_EPS`] go to the
    /// lexicographically smallest hop sequence. Does not reserve anything.
    pub fn select_min_path(
        &self,
        src: DcId,
        dest: DcId,
        req: Kbps,
    ) -> Result<Option<PathResult>, TopologyError> {
        self.select_min_path_with(src, dest, req, SearchMode::Pruned)
    }

    pub fn select_min_path_with(
        &self,
        src: DcId,
        dest: DcId,
        req: Kbps,
        mode: SearchMode,
    ) -> Result<Option<PathResult>, TopologyError> {
        self.check_dc(src)?;
        self.check_dc(dest)?;
        if src == dest {
            return Ok(Some(PathResult::trivial(src)));
        }
        let best = match mode {
            SearchMode::Pruned => match self.filtered_dijkstra(src, dest, req) {
                Some(d) => d,
                None => return Ok(None),
            },
            SearchMode::Exhaustive => {
                let mut search = Dfs::new(self, dest, req, f64::INFINITY);
                search.min_length(src);
                if search.best.is_infinite() {
                    return Ok(None);
                }
                search.best
            }
        };
        // Walk paths in lexicographic order and stop at the first one that
        // achieves the minimum. In pruned mode partial paths beyond the bound
        // are abandoned; in exhaustive mode they are followed to completion.
        let bound = best + LENGTH_TIE_EPS;
        let mut search = Dfs::new(self, dest, req, bound);
        search.prune = mode == SearchMode::Pruned;
        Ok(search.first_within(src))
    }

    /// Minimum path length on the subgraph of links with residual ≥ `req`.
    fn filtered_dijkstra(&self, src: DcId, dest: DcId, req: Kbps) -> Option<f64> {
        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
            }
        }

        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[src.0] = 0.0;
        heap.push(Item(0.0, src.0));
        while let Some(Item(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            if u == dest.0 {
                return Some(d);
            }
            for &(v, li) in &self.adj[u] {
                let link = &self.links[li];
                if link.residual < req {
                    continue;
                }
                let nd = d + link.length_km;
                if nd < dist[v.0] {
                    dist[v.0] = nd;
                    heap.push(Item(nd, v.0));
                }
            }
        }
        None
    }

    /// Decrements the residual of every link on `path` by `bw`. Atomic: either
    /// every link is updated or none is.
    pub fn reserve_bw(&mut self, path: &PathResult, bw: Kbps) -> Result<(), TopologyError> {
        let idx = self.path_links(path)?;
        for &i in &idx {
            let link = &self.links[i];
            if link.residual < bw {
                return Err(TopologyError::InsufficientResidual {
                    a: link.a,
                    b: link.b,
                    residual: link.residual,
                    requested: bw,
                });
            }
        }
        for i in idx {
            self.links[i].residual.0 -= bw.0;
        }
        Ok(())
    }

    /// Inverse of [`reserve_bw`](Self::reserve_bw).
    pub fn release_bw(&mut self, path: &PathResult, bw: Kbps) -> Result<(), TopologyError> {
        let idx = self.path_links(path)?;
        for &i in &idx {
            let link = &self.links[i];
            if link.residual.0 + bw.0 > link.capacity.0 {
                return Err(TopologyError::OverCapacity {
                    a: link.a,
                    b: link.b,
                    capacity: link.capacity,
                });
            }
        }
        for i in idx {
            self.links[i].residual.0 += bw.0;
        }
        Ok(())
    }

    fn path_links(&self, path: &PathResult) -> Result<Vec<usize>, TopologyError> {
        for &h in &path.hops {
            self.check_dc(h)?;
        }
        path.hop_pairs()
            .map(|(a, b)| self.link_index(a, b).ok_or(TopologyError::NotALink { a, b }))
            .collect()
    }

    /// Propagation delay of `path` in whole steps, rounded up.
    pub fn propagation_steps(&self, path: &PathResult) -> u64 {
        propagation_steps(path.length_km, self.fiber_km_per_s)
    }

    /// Sum over links of (capacity − residual).
    pub fn reserved_total(&self) -> u64 {
        self.links.iter().map(|l| l.capacity.0 - l.residual.0).sum()
    }

    pub fn residuals(&self) -> Vec<Kbps> {
        self.links.iter().map(|l| l.residual).collect()
    }
}

pub fn propagation_steps(length_km: f64, fiber_km_per_s: f64) -> u64 {
    let steps = length_km * STEPS_PER_SECOND as f64 / fiber_km_per_s;
    ceil_steps(steps)
}

/// Rounds a non-negative step count up, ignoring float noise below 1e-9.
pub(crate) fn ceil_steps(x: f64) -> u64 {
    if x <= 0.0 {
        0
    } else {
        (x - 1e-9).ceil().max(0.0) as u64
    }
}

struct Dfs<'g> {
    graph: &'g NetworkGraph,
    dest: DcId,
    req: Kbps,
    bound: f64,
    prune: bool,
    best: f64,
    on_path: Vec<bool>,
    stack: Vec<DcId>,
}

impl<'g> Dfs<'g> {
    fn new(graph: &'g NetworkGraph, dest: DcId, req: Kbps, bound: f64) -> Self {
        Dfs {
            graph,
            dest,
            req,
            bound,
            prune: true,
            best: f64::INFINITY,
            on_path: vec![false; graph.nodes.len()],
            stack: Vec::new(),
        }
    }

    /// Exhaustive minimum over all feasible simple paths.
    fn min_length(&mut self, src: DcId) {
        self.on_path[src.0] = true;
        self.min_rec(src, 0.0);
        self.on_path[src.0] = false;
    }

    fn min_rec(&mut self, at: DcId, len: f64) {
        if at == self.dest {
            self.best = self.best.min(len);
            return;
        }
        let g = self.graph;
        for &(next, li) in &g.adj[at.0] {
            let link = &g.links[li];
            if self.on_path[next.0] || link.residual < self.req {
                continue;
            }
            self.on_path[next.0] = true;
            self.min_rec(next, len + link.length_km);
            self.on_path[next.0] = false;
        }
    }

    /// First path in lexicographic hop order whose length is within `bound`.
    fn first_within(&mut self, src: DcId) -> Option<PathResult> {
        self.on_path[src.0] = true;
        self.stack.push(src);
        let found = self.first_rec(src, 0.0);
        found.map(|length_km| PathResult {
            hops: std::mem::take(&mut self.stack),
            length_km,
        })
    }

    fn first_rec(&mut self, at: DcId, len: f64) -> Option<f64> {
        if at == self.dest {
            return (len <= self.bound).then_some(len);
        }
        let g = self.graph;
        for &(next, li) in &g.adj[at.0] {
            let link = &g.links[li];
            if self.on_path[next.0] || link.residual < self.req {
                continue;
            }
            let next_len = len + link.length_km;
            if self.prune && next_len > self.bound {
                continue;
            }
            self.on_path[next.0] = true;
            self.stack.push(next);
            if let Some(found) = self.first_rec(next, next_len) {
                return Some(found);
            }
            self.stack.pop();
            self.on_path[next.0] = false;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub a: usize,
    pub b: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_km: Option<f64>,
}

/// Nodes evenly spaced on a circle. Adjacent nodes are always linked (so the
/// graph is connected); every other pair is linked with `edge_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleSpec {
    pub n: usize,
    pub radius_km: f64,
    #[serde(default)]
    pub edge_prob: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_mbps: Option<f64>,
}

/// `[topology]` section of a scenario file: either explicit `nodes`/`edges`
/// or a `circle` generator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circle: Option<CircleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber_km_per_s: Option<f64>,
}

impl TopologySpec {
    pub fn node_count(&self) -> usize {
        match &self.circle {
            Some(c) => c.n,
            None => self.nodes.len(),
        }
    }

    pub fn build(&self) -> Result<NetworkGraph, TopologyError> {
        let fiber = self.fiber_km_per_s.unwrap_or(DEFAULT_FIBER_KM_PER_S);
        if let Some(circle) = &self.circle {
            if !self.nodes.is_empty() || !self.edges.is_empty() {
                return Err(TopologyError::Invalid(
                    "give either a circle generator or explicit nodes/edges, not both".into(),
                ));
            }
            return circle.build(fiber);
        }
        let mut nodes: Vec<Node> = self
            .nodes
            .iter()
            .map(|n| Node {
                id: DcId(n.id),
                x_km: n.x,
                y_km: n.y,
            })
            .collect();
        nodes.sort_by_key(|n| n.id);
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                (
                    DcId(e.a),
                    DcId(e.b),
                    Kbps::from_mbps(e.capacity_mbps.unwrap_or(DEFAULT_LINK_MBPS)),
                    e.length_km,
                )
            })
            .collect();
        NetworkGraph::new(nodes, &edges, fiber)
    }
}

impl CircleSpec {
    pub fn build(&self, fiber_km_per_s: f64) -> Result<NetworkGraph, TopologyError> {
        let n = self.n;
        if n == 0 {
            return Err(TopologyError::Invalid("circle needs at least one node".into()));
        }
        let nodes = (0..n)
            .map(|i| {
                let theta = std::f64::consts::TAU * i as f64 / n as f64;
                Node {
                    id: DcId(i),
                    x_km: self.radius_km * theta.cos(),
                    y_km: self.radius_km * theta.sin(),
                }
            })
            .collect();
        let cap = Kbps::from_mbps(self.capacity_mbps.unwrap_or(DEFAULT_LINK_MBPS));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let ring = j == i + 1 || (i == 0 && j == n - 1 && n > 2);
                // Draw for every pair so the chord set is stable in `edge_prob`.
                let draw: f64 = rng.gen();
                if ring || draw < self.edge_prob {
                    edges.push((DcId(i), DcId(j), cap, None));
                }
            }
        }
        NetworkGraph::new(nodes, &edges, fiber_km_per_s)
    }
}
