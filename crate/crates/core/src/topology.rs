//! Cluster graphs and the physical network built from them.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("cluster graph is disconnected")]
    DisconnectedGraph,
    #[error("invalid cluster graph: {0}")]
    Invalid(String),
    #[error("cluster {cluster} would hold {count} faulty nodes, more than f={f}")]
    FaultBudgetExceeded { cluster: u32, count: usize, f: usize },
    #[error("unknown node ({0}, {1})")]
    UnknownNode(u32, u32),
}

/// Dense index of a physical node: `cluster * k + index`.
pub type NodeIdx = usize;

/// Stable address of a physical node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub cluster: u32,
    pub index: u32,
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.cluster, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterGraph {
    n: usize,
    edges: Vec<(u32, u32)>,
    adj: Vec<Vec<u32>>,
}

impl ClusterGraph {
    /// Builds a simple graph on clusters `0..n`. Edges are unordered.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Invalid("at least one cluster is required".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(TopologyError::Invalid(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(TopologyError::Invalid(format!("self-loop at {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(TopologyError::Invalid(format!("duplicate edge ({a}, {b})")));
            }
        }
        let edges: Vec<(u32, u32)> = set.into_iter().collect();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Self { n, edges, adj })
    }

    pub fn single() -> Self {
        Self::new(1, []).expect("single cluster")
    }

    pub fn path(n: usize) -> Result<Self, TopologyError> {
        Self::new(n, (1..n as u32).map(|i| (i - 1, i)))
    }

    pub fn cycle(n: usize) -> Result<Self, TopologyError> {
        if n < 3 {
            return Err(TopologyError::Invalid("a cycle needs at least 3 clusters".into()));
        }
        Self::new(n, (0..n as u32).map(|i| (i, (i + 1) % n as u32)))
    }

    pub fn grid(rows: usize, cols: usize) -> Result<Self, TopologyError> {
        let id = |r: usize, c: usize| (r * cols + c) as u32;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        Self::new(rows * cols, edges)
    }

    pub fn complete(n: usize) -> Result<Self, TopologyError> {
        let mut edges = Vec::new();
        for a in 0..n as u32 {
            for b in a + 1..n as u32 {
                edges.push((a, b));
            }
        }
        Self::new(n, edges)
    }

    /// Parses one `u v` pair per line. Blank lines and `#` comments are
    /// ignored. The cluster count is one more than the largest id seen.
    pub fn parse_edge_list(text: &str) -> Result<Self, TopologyError> {
        let mut edges = Vec::new();
        let mut max_id = 0u32;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<u32>().map_err(|_| {
                    TopologyError::Invalid(format!("line {}: bad cluster id {s:?}", lineno + 1))
                })
            };
            match parts.as_slice() {
                [a] => max_id = max_id.max(parse(a)?),
                [a, b] => {
                    let (a, b) = (parse(a)?, parse(b)?);
                    max_id = max_id.max(a).max(b);
                    edges.push((a, b));
                }
                _ => {
                    return Err(TopologyError::Invalid(format!(
                        "line {}: expected `u v`",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(max_id as usize + 1, edges)
    }

    pub fn cluster_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, c: u32) -> &[u32] {
        &self.adj[c as usize]
    }

    pub fn is_connected(&self) -> bool {
        self.bfs(0).iter().all(|d| d.is_some())
    }

    fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &w in &self.adj[u] {
                if dist[w as usize].is_none() {
                    dist[w as usize] = Some(du + 1);
                    queue.push_back(w as usize);
                }
            }
        }
        dist
    }

    /// Hop diameter.
    pub fn diameter(&self) -> Result<usize, TopologyError> {
        let mut best = 0;
        for src in 0..self.n {
            for d in self.bfs(src) {
                best = best.max(d.ok_or(TopologyError::DisconnectedGraph)?);
            }
        }
        Ok(best)
    }

    /// Replaces every cluster by a clique of `k` nodes and every cluster
    /// edge by a complete bipartite graph.
    pub fn augment(&self, k: usize) -> AugmentedGraph {
        assert!(k >= 1, "cluster size must be positive");
        let total = self.n * k;
        let mut neighbors = Vec::with_capacity(total);
        for v in 0..total {
            let c = v / k;
            let mut list: Vec<NodeIdx> = (c * k..(c + 1) * k).filter(|&w| w != v).collect();
            for &b in &self.adj[c] {
                list.extend(b as usize * k..(b as usize + 1) * k);
            }
            list.sort_unstable();
            neighbors.push(list);
        }
        AugmentedGraph {
            k,
            clusters: self.clone(),
            neighbors,
            faulty: vec![false; total],
            fault_rejections: 0,
        }
    }
}

/// How faulty nodes are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultPlacement {
    #[default]
    None,
    Explicit { nodes: Vec<NodeId> },
    PerCluster { count: usize },
    Probability { p: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGraph {
    k: usize,
    clusters: ClusterGraph,
    neighbors: Vec<Vec<NodeIdx>>,
    faulty: Vec<bool>,
    fault_rejections: usize,
}

impl AugmentedGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cluster_graph(&self) -> &ClusterGraph {
        &self.clusters
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn cluster_of(&self, v: NodeIdx) -> u32 {
        (v / self.k) as u32
    }

    pub fn index_in_cluster(&self, v: NodeIdx) -> usize {
        v % self.k
    }

    pub fn id(&self, v: NodeIdx) -> NodeId {
        NodeId { cluster: self.cluster_of(v), index: self.index_in_cluster(v) as u32 }
    }

    pub fn idx(&self, id: NodeId) -> Result<NodeIdx, TopologyError> {
        if id.cluster as usize >= self.clusters.n || id.index as usize >= self.k {
            return Err(TopologyError::UnknownNode(id.cluster, id.index));
        }
        Ok(id.cluster as usize * self.k + id.index as usize)
    }

    pub fn members(&self, c: u32) -> std::ops::Range<NodeIdx> {
        c as usize * self.k..(c as usize + 1) * self.k
    }

    pub fn neighbors(&self, v: NodeIdx) -> &[NodeIdx] {
        &self.neighbors[v]
    }

    pub fn cluster_edge_count(&self) -> usize {
        self.clusters.n * self.k * (self.k - 1) / 2
    }

    pub fn intercluster_edge_count(&self) -> usize {
        self.clusters.edges.len() * self.k * self.k
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_faulty(&self, v: NodeIdx) -> bool {
        self.faulty[v]
    }

    pub fn faulty_nodes(&self) -> impl Iterator<Item = NodeIdx> + '_ {
        self.faulty.iter().enumerate().filter(|(_, &f)| f).map(|(v, _)| v)
    }

    pub fn correct_members(&self, c: u32) -> impl Iterator<Item = NodeIdx> + '_ {
        self.members(c).filter(|&v| !self.faulty[v])
    }

    /// Clusters whose resampling was needed under probabilistic placement.
    pub fn fault_rejections(&self) -> usize {
        self.fault_rejections
    }

    /// Returns a copy with faults assigned according to `spec`, keeping at
    /// most `f` faulty nodes per cluster. Deterministic in `seed`.
    pub fn place_faults(
        &self,
        spec: &FaultPlacement,
        f: usize,
        seed: u64,
    ) -> Result<AugmentedGraph, TopologyError> {
        let mut out = self.clone();
        out.faulty.iter_mut().for_each(|x| *x = false);
        out.fault_rejections = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match spec {
            FaultPlacement::None => {}
            FaultPlacement::Explicit { nodes } => {
                for &id in nodes {
                    let v = out.idx(id)?;
                    out.faulty[v] = true;
                }
                for c in 0..self.clusters.n as u32 {
                    let count = out.members(c).filter(|&v| out.faulty[v]).count();
                    if count > f {
                        return Err(TopologyError::FaultBudgetExceeded { cluster: c, count, f });
                    }
                }
            }
            FaultPlacement::PerCluster { count } => {
                if *count > f || *count > self.k {
                    return Err(TopologyError::FaultBudgetExceeded {
                        cluster: 0,
                        count: *count,
                        f,
                    });
                }
                for c in 0..self.clusters.n as u32 {
                    let base = c as usize * self.k;
                    for i in sample(&mut rng, self.k, *count) {
                        out.faulty[base + i] = true;
                    }
                }
            }
            FaultPlacement::Probability { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(TopologyError::Invalid(format!("fault probability {p}")));
                }
                if f == 0 && *p >= 1.0 {
                    return Err(TopologyError::FaultBudgetExceeded { cluster: 0, count: 1, f });
                }
                for c in 0..self.clusters.n as u32 {
                    loop {
                        let draw: Vec<bool> = (0..self.k).map(|_| rng.random::<f64>() < *p).collect();
                        if draw.iter().filter(|&&x| x).count() <= f {
                            for (i, x) in draw.into_iter().enumerate() {
                                out.faulty[c as usize * self.k + i] = x;
                            }
                            break;
                        }
                        out.fault_rejections += 1;
                    }
                }
            }
        }
        Ok(out)
    }
}
