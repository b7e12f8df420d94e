//! Communication graphs and honest-subgraph connectivity.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hash::{stream_rng, Stream};
use crate::NodeId;

/// Regeneration budget for random graphs that come out disconnected.
pub const MAX_CONNECTIVITY_ATTEMPTS: u64 = 100;

/// Restarts allowed inside a single k-regular pairing attempt.
const MAX_PAIRING_RESTARTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologyKind {
    Ring,
    ErdosRenyi { p: f64 },
    KRegular { degree: usize },
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub seed: u64,
}

impl TopologySpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::config("topology.nodes", format!("need at least 2 nodes, got {n}")));
        }
        match self.kind {
            TopologyKind::Ring => {
                if n < 3 {
                    return Err(Error::config("topology.nodes", "a ring needs at least 3 nodes"));
                }
            }
            TopologyKind::ErdosRenyi { p } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::config("topology.p", format!("p must lie in (0, 1], got {p}")));
                }
            }
            TopologyKind::KRegular { degree } => {
                if degree == 0 || degree >= n || (n * degree) % 2 != 0 {
                    return Err(Error::config(
                        "topology.degree",
                        format!("no {degree}-regular graph on {n} nodes (need 1 <= degree < n, n*degree even)"),
                    ));
                }
            }
            TopologyKind::Full => {}
        }
        Ok(())
    }
}

/// Undirected simple graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<NodeId>>,
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops and
    /// out-of-range endpoints. Duplicate edges collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Generation(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::Generation(format!("self-loop at node {a}")));
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        Ok(Graph {
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.adjacency[i].len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edge_count() as f64 / self.node_count() as f64
    }

    pub fn is_connected(&self) -> bool {
        honest_subgraph_connected(self, &BTreeSet::new())
    }

    /// `i j` per line, ascending.
    pub fn to_edge_list(&self) -> String {
        self.edges().map(|(i, j)| format!("{i} {j}\n")).collect()
    }

    pub fn from_edge_list(n: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => edges.push((a, b)),
                _ => return Err(Error::Format(format!("bad edge on line {}: {line:?}", lineno + 1))),
            }
        }
        Graph::from_edges(n, edges)
    }

    pub fn edge_list_digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_edge_list().as_bytes()))
    }

    /// Graph on the same nodes with exactly the missing edges.
    fn complement(&self) -> Graph {
        let n = self.node_count();
        let adjacency = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && self.adjacency[i].binary_search(&j).is_err()).collect())
            .collect();
        Graph { adjacency }
    }
}

pub fn build_topology(spec: &TopologySpec, n: usize) -> Result<Graph> {
    spec.validate(n)?;
    match spec.kind {
        TopologyKind::Ring => Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))),
        TopologyKind::Full => Graph::from_edges(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))),
        TopologyKind::ErdosRenyi { p } => retry_until_connected(spec.seed, |rng| Ok(erdos_renyi(n, p, rng))),
        TopologyKind::KRegular { degree } => {
            retry_until_connected(spec.seed, |rng| k_regular(n, degree, rng))
        }
    }
}

fn retry_until_connected<F>(seed: u64, mut attempt: F) -> Result<Graph>
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng) -> Result<Graph>,
{
    for a in 0..MAX_CONNECTIVITY_ATTEMPTS {
        let mut rng = stream_rng(seed, Stream::Topology, a, 0);
        let g = attempt(&mut rng)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Generation(format!(
        "no connected graph after {MAX_CONNECTIVITY_ATTEMPTS} attempts"
    )))
}

fn erdos_renyi(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges).expect("generated edges are in range")
}

/// Stub pairing with restarts: random stubs are matched one pair at a time,
/// a pair that would form a loop or a multi-edge is redrawn, and the whole
/// attempt restarts when no legal pair remains. Dense requests are built as
/// the complement of a sparse regular graph.
fn k_regular(n: usize, degree: usize, rng: &mut impl Rng) -> Result<Graph> {
    if degree == n - 1 {
        return Graph::from_edges(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))));
    }
    if 2 * degree > n - 1 {
        return Ok(k_regular(n, n - 1 - degree, rng)?.complement());
    }
    'restart: for _ in 0..MAX_PAIRING_RESTARTS {
        let mut stubs: Vec<NodeId> = (0..n).flat_map(|i| std::iter::repeat_n(i, degree)).collect();
        let mut adj = vec![BTreeSet::new(); n];
        while !stubs.is_empty() {
            let mut placed = false;
            for _ in 0..(4 * stubs.len()).max(16) {
                let a = rng.random_range(0..stubs.len());
                let b = rng.random_range(0..stubs.len());
                let (u, v) = (stubs[a], stubs[b]);
                if a == b || u == v || adj[u].contains(&v) {
                    continue;
                }
                adj[u].insert(v);
                adj[v].insert(u);
                let (hi, lo) = if a > b { (a, b) } else { (b, a) };
                stubs.swap_remove(hi);
                stubs.swap_remove(lo);
                placed = true;
                break;
            }
            if !placed {
                // Exhaustive check before giving up on this attempt.
                let legal = stubs.iter().enumerate().any(|(x, &u)| {
                    stubs[x + 1..].iter().any(|&v| u != v && !adj[u].contains(&v))
                });
                if !legal {
                    continue 'restart;
                }
                stubs.shuffle(rng);
            }
        }
        return Graph::from_edges(
            n,
            adj.iter().enumerate().flat_map(|(i, s)| s.iter().map(move |&j| (i, j))),
        );
    }
    Err(Error::Generation(format!(
        "pairing model failed to produce a {degree}-regular graph on {n} nodes"
    )))
}

/// True iff the subgraph induced by the nodes outside `byzantine` is
/// connected. An empty honest set counts as connected.
pub fn honest_subgraph_connected(g: &Graph, byzantine: &BTreeSet<NodeId>) -> bool {
    let n = g.node_count();
    let Some(start) = (0..n).find(|i| !byzantine.contains(i)) else {
        return true;
    };
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for &v in g.neighbors(u) {
            if !seen[v] && !byzantine.contains(&v) {
                seen[v] = true;
                reached += 1;
                queue.push_back(v);
            }
        }
    }
    reached == n - byzantine.iter().filter(|&&b| b < n).count()
}

/// Byzantine node set: `round(fraction * n)` nodes drawn uniformly.
pub fn place_byzantine(n: usize, fraction: f64, seed: u64) -> BTreeSet<NodeId> {
    let count = ((fraction * n as f64).round() as usize).min(n);
    let mut rng = stream_rng(seed, Stream::Byzantine, n as u64, 0);
    rand::seq::index::sample(&mut rng, n, count).into_iter().collect()
}
