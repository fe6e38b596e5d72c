//! Undirected peer-graph generators: ring, fully-connected, Erdos-Renyi and
//! k-regular. Every generated graph is symmetric, self-loop free and
//! connected; randomized generators resample with an incremented sub-seed
//! until connectivity holds.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAX_ATTEMPTS: u64 = 100;

/// Undirected peer graph with sorted per-node neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyGraph {
    n: usize,
    adjacency: Vec<Vec<usize>>,
}

impl TopologyGraph {
    /// Build from an edge set, enforcing the structural invariants.
    fn from_edges(n: usize, edges: &BTreeSet<(usize, usize)>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a == b {
                return Err(Error::Generation(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Generation(format!("edge ({a}, {b}) out of range")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for neighbors in &mut adjacency {
            neighbors.sort_unstable();
        }
        Ok(TopologyGraph { n, adjacency })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(cur) = stack.pop() {
            for &next in &self.adjacency[cur] {
                if !seen[next] {
                    seen[next] = true;
                    count += 1;
                    stack.push(next);
                }
            }
        }
        count == self.n
    }
}

/// Cycle graph: node i connects to i-1 and i+1 mod n.
pub fn ring(n: usize) -> Result<TopologyGraph> {
    if n < 3 {
        return Err(Error::Config(format!("ring topology requires n >= 3, got {n}")));
    }
    let mut edges = BTreeSet::new();
    for i in 0..n {
        let j = (i + 1) % n;
        edges.insert((i.min(j), i.max(j)));
    }
    TopologyGraph::from_edges(n, &edges)
}

/// Complete graph on n nodes.
pub fn fully_connected(n: usize) -> Result<TopologyGraph> {
    if n < 2 {
        return Err(Error::Config(format!(
            "fully-connected topology requires n >= 2, got {n}"
        )));
    }
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in (i + 1)..n {
            edges.insert((i, j));
        }
    }
    TopologyGraph::from_edges(n, &edges)
}

/// G(n, p): every unordered pair independently with probability p, resampled
/// with an incremented sub-seed while disconnected.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<TopologyGraph> {
    if n < 2 {
        return Err(Error::Config(format!(
            "Erdos-Renyi topology requires n >= 2, got {n}"
        )));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!(
            "Erdos-Renyi edge probability must be in (0, 1], got {p}"
        )));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut edges = BTreeSet::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < p {
                    edges.insert((i, j));
                }
            }
        }
        let graph = TopologyGraph::from_edges(n, &edges)?;
        if graph.is_connected() {
            return Ok(graph);
        }
    }
    Err(Error::Generation(format!(
        "no connected Erdos-Renyi graph for n = {n}, p = {p} after {MAX_ATTEMPTS} attempts"
    )))
}

/// Random k-regular graph via the pairing model: k stubs per node, shuffled
/// and paired, rejecting self-loops, multi-edges and disconnected draws.
pub fn k_regular(n: usize, k: usize, seed: u64) -> Result<TopologyGraph> {
    if k < 2 {
        return Err(Error::Config(format!("k-regular requires k >= 2, got {k}")));
    }
    if k >= n {
        return Err(Error::Config(format!(
            "k-regular requires k < n, got k = {k}, n = {n}"
        )));
    }
    if (n * k) % 2 != 0 {
        return Err(Error::Config(format!(
            "k-regular requires n*k even, got n = {n}, k = {k}"
        )));
    }
    'attempts: for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut pool: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat(i).take(k)).collect();
        let mut edges = BTreeSet::new();
        while !pool.is_empty() {
            // Draw stub pairs, rejecting self-loops and multi-edges; a stuck
            // endgame abandons the attempt and moves to the next sub-seed.
            let mut tries = 0;
            loop {
                let i = rng.gen_range(0..pool.len());
                let mut j = rng.gen_range(0..pool.len() - 1);
                if j >= i {
                    j += 1;
                }
                let (a, b) = (pool[i], pool[j]);
                if a != b && edges.insert((a.min(b), a.max(b))) {
                    pool.swap_remove(i.max(j));
                    pool.swap_remove(i.min(j));
                    break;
                }
                tries += 1;
                if tries > 200 {
                    continue 'attempts;
                }
            }
        }
        let graph = TopologyGraph::from_edges(n, &edges)?;
        if graph.is_connected() {
            return Ok(graph);
        }
    }
    Err(Error::Generation(format!(
        "no connected simple {k}-regular graph on {n} nodes after {MAX_ATTEMPTS} attempts"
    )))
}
