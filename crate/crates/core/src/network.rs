//! Diffusion network topology, combination rules and consensus operators.
//!
//! Nodes are indexed from zero in code. The edge-list text format numbers
//! nodes from one.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::metric::DiagonalMetric;

/// Undirected, connected graph; every node is in its own neighbourhood.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from undirected zero-based edges. Self-loops are
    /// implicit and repeated edges are merged.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidInput("a network needs at least one node".into()));
        }
        let mut neighbors: Vec<Vec<usize>> = (0..nodes).map(|k| vec![k]).collect();
        for &(a, b) in edges {
            if a >= nodes || b >= nodes {
                return Err(Error::InvalidInput(format!(
                    "edge ({a}, {b}) references a node outside 0..{nodes}"
                )));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }
        let topo = Topology { neighbors };
        if !topo.is_connected() {
            return Err(Error::InvalidInput("network is not connected".into()));
        }
        Ok(topo)
    }

    /// Parses `K` on the first line followed by one `k l` pair per line,
    /// nodes numbered `1..=K`. Blank lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty edge list".into()))?;
        let nodes: usize = header
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad node count {header:?}")))?;
        let mut edges = Vec::new();
        for line in lines {
            let ids: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| -> Result<usize> {
                let v: usize = s
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad node id {s:?}")))?;
                if v == 0 || v > nodes {
                    return Err(Error::InvalidInput(format!(
                        "node id {v} outside 1..={nodes}"
                    )));
                }
                Ok(v - 1)
            };
            match ids.as_slice() {
                [a, b] => edges.push((parse(a)?, parse(b)?)),
                _ => return Err(Error::InvalidInput(format!("bad edge line {line:?}"))),
            }
        }
        Self::from_edges(nodes, &edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Renders the one-based edge-list format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.len());
        for (k, n) in self.neighbors.iter().enumerate() {
            for &l in n.iter().filter(|&&l| l > k) {
                out.push_str(&format!("{} {}\n", k + 1, l + 1));
            }
        }
        out
    }

    pub fn complete(nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (0..nodes)
            .flat_map(|a| (a + 1..nodes).map(move |b| (a, b)))
            .collect();
        Self::from_edges(nodes, &edges)
    }

    pub fn path(nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (1..nodes).map(|k| (k - 1, k)).collect();
        Self::from_edges(nodes, &edges)
    }

    pub fn ring(nodes: usize) -> Result<Self> {
        Self::ring_with_chords(nodes, 0)
    }

    /// Ring `k -- k+1` plus chords `k -- k+chord` (indices mod K).
    /// `chord` of 0 or 1 adds no chords.
    pub fn ring_with_chords(nodes: usize, chord: usize) -> Result<Self> {
        let mut edges: Vec<_> = (0..nodes).map(|k| (k, (k + 1) % nodes)).collect();
        if chord > 1 {
            edges.extend((0..nodes).map(|k| (k, (k + chord) % nodes)));
        }
        Self::from_edges(nodes, &edges)
    }

    /// Erdős–Rényi graph with edge probability `p`, redrawn until connected.
    pub fn random_connected<R: Rng + ?Sized>(nodes: usize, p: f64, rng: &mut R) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidInput(format!("edge probability {p} outside (0, 1]")));
        }
        loop {
            let mut edges = Vec::new();
            for a in 0..nodes {
                for b in a + 1..nodes {
                    if rng.gen_bool(p) {
                        edges.push((a, b));
                    }
                }
            }
            match Self::from_edges(nodes, &edges) {
                Ok(t) => return Ok(t),
                Err(Error::InvalidInput(msg)) if msg.contains("not connected") => continue,
                Err(e) => return Err(e),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Sorted neighbourhood of `k`, including `k`.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    pub fn are_adjacent(&self, k: usize, l: usize) -> bool {
        self.neighbors[k].binary_search(&l).is_ok()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(k) = queue.pop_front() {
            for &l in &self.neighbors[k] {
                if !seen[l] {
                    seen[l] = true;
                    queue.push_back(l);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinationRule {
    Metropolis,
    Uniform,
}

/// Row-stochastic `K x K` matrix supported on the adjacency pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    nodes: usize,
    c: Vec<f64>,
    support: Vec<Vec<usize>>,
}

impl CombinationMatrix {
    pub fn from_rule(topology: &Topology, rule: CombinationRule) -> Self {
        match rule {
            CombinationRule::Metropolis => Self::metropolis(topology),
            CombinationRule::Uniform => Self::uniform(topology),
        }
    }

    /// `c_kl = 1 / max(|N_k|, |N_l|)` for neighbours `l != k`; the diagonal
    /// takes the remaining mass.
    pub fn metropolis(topology: &Topology) -> Self {
        let k_n = topology.len();
        let mut c = vec![0.0; k_n * k_n];
        for k in 0..k_n {
            let mut off = 0.0;
            for &l in topology.neighbors(k).iter().filter(|&&l| l != k) {
                let v = 1.0 / topology.degree(k).max(topology.degree(l)) as f64;
                c[k * k_n + l] = v;
                off += v;
            }
            c[k * k_n + k] = 1.0 - off;
        }
        Self::with_support(topology, c)
    }

    /// `c_kl = 1 / |N_k|` on the neighbourhood.
    pub fn uniform(topology: &Topology) -> Self {
        let k_n = topology.len();
        let mut c = vec![0.0; k_n * k_n];
        for k in 0..k_n {
            let v = 1.0 / topology.degree(k) as f64;
            for &l in topology.neighbors(k) {
                c[k * k_n + l] = v;
            }
        }
        Self::with_support(topology, c)
    }

    fn with_support(topology: &Topology, c: Vec<f64>) -> Self {
        let support = (0..topology.len())
            .map(|k| topology.neighbors(k).to_vec())
            .collect();
        CombinationMatrix {
            nodes: topology.len(),
            c,
            support,
        }
    }

    /// Accepts an arbitrary dense row-major matrix with nonnegative entries
    /// and rows summing to one within `1e-12`.
    pub fn from_dense(nodes: usize, c: Vec<f64>) -> Result<Self> {
        check_dim(nodes * nodes, c.len())?;
        check_finite("c", &c)?;
        if c.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidInput("negative combination weight".into()));
        }
        let mut support = Vec::with_capacity(nodes);
        for k in 0..nodes {
            let row = &c[k * nodes..(k + 1) * nodes];
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("row {k} sums to {s}")));
            }
            support.push((0..nodes).filter(|&l| row[l] > 0.0).collect());
        }
        Ok(CombinationMatrix { nodes, c, support })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn entry(&self, k: usize, l: usize) -> f64 {
        self.c[k * self.nodes + l]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.c[k * self.nodes..(k + 1) * self.nodes]
    }

    /// Columns with a positive weight in row `k`.
    pub fn support(&self, k: usize) -> &[usize] {
        &self.support[k]
    }

    /// Row sum accumulated off-diagonal first, matching how the Metropolis
    /// diagonal is derived.
    pub fn row_sum(&self, k: usize) -> f64 {
        let row = self.row(k);
        let off: f64 = row
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != k)
            .map(|(_, v)| v)
            .sum();
        off + row[k]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.nodes).all(|k| (0..k).all(|l| self.entry(k, l) == self.entry(l, k)))
    }

    /// Operator 2-norm by power iteration on `C^T C`. Equal to the norm of
    /// `C ⊗ I_m` for every `m`.
    pub fn spectral_norm(&self, iterations: usize) -> f64 {
        let n = self.nodes;
        let apply = |v: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|k| self.row(k).iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        };
        let apply_t = |v: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|l| (0..n).map(|k| self.entry(k, l) * v[k]).sum())
                .collect()
        };
        let unit = |v: Vec<f64>| -> Option<Vec<f64>> {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            (norm > 0.0).then(|| v.into_iter().map(|x| x / norm).collect())
        };
        let Some(mut v) = unit((0..n).map(|i| 1.0 + 0.1 * i as f64).collect()) else {
            return 0.0;
        };
        for _ in 0..iterations {
            match unit(apply_t(&apply(&v))) {
                Some(next) => v = next,
                None => return 0.0,
            }
        }
        // Rayleigh quotient of C^T C at the converged direction.
        apply(&v).iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Stacked network estimate: `K` blocks of length `m`, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    nodes: usize,
    dim: usize,
    data: Vec<f64>,
}

impl NetworkState {
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        NetworkState {
            nodes,
            dim,
            data: vec![0.0; nodes * dim],
        }
    }

    pub fn from_nodes(estimates: Vec<Vec<f64>>) -> Result<Self> {
        let nodes = estimates.len();
        if nodes == 0 {
            return Err(Error::InvalidInput("empty network state".into()));
        }
        let dim = estimates[0].len();
        let mut data = Vec::with_capacity(nodes * dim);
        for e in &estimates {
            check_dim(dim, e.len())?;
            check_finite("estimate", e)?;
            data.extend_from_slice(e);
        }
        Ok(NetworkState { nodes, dim, data })
    }

    pub fn from_stacked(nodes: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(nodes * dim, data.len())?;
        check_finite("state", &data)?;
        Ok(NetworkState { nodes, dim, data })
    }

    /// Every node holds `h`.
    pub fn replicated(nodes: usize, h: &[f64]) -> Self {
        NetworkState {
            nodes,
            dim: h.len(),
            data: h.repeat(nodes),
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.dim.max(1))
    }

    pub fn stacked(&self) -> &[f64] {
        &self.data
    }

    /// Across-node mean of the blocks.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for block in self.iter() {
            for (m, x) in mean.iter_mut().zip(block) {
                *m += x;
            }
        }
        let inv = 1.0 / self.nodes as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        mean
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &NetworkState, b: f64) -> Result<NetworkState> {
        check_dim(self.data.len(), other.data.len())?;
        Ok(NetworkState {
            nodes: self.nodes,
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// `||self - other||_Ḡ` with the same metric on every block.
    pub fn metric_distance(&self, other: &NetworkState, metric: &DiagonalMetric) -> Result<f64> {
        check_dim(self.data.len(), other.data.len())?;
        check_dim(self.dim, metric.dim())?;
        Ok(self
            .iter()
            .zip(other.iter())
            .map(|(a, b)| metric.distance(a, b).map(|d| d * d))
            .sum::<Result<f64>>()?
            .sqrt())
    }
}

/// `phi_k = sum_{l in N_k} c_kl h_l` for every node, i.e. `(C ⊗ I_m) h`.
pub fn combine(state: &NetworkState, c: &CombinationMatrix) -> Result<NetworkState> {
    check_dim(c.nodes(), state.nodes())?;
    let mut out = NetworkState::zeros(state.nodes(), state.dim());
    for k in 0..state.nodes() {
        combine_into(state, c, k, out.node_mut(k));
    }
    Ok(out)
}

pub(crate) fn combine_into(state: &NetworkState, c: &CombinationMatrix, k: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for &l in c.support(k) {
        let w = c.entry(k, l);
        for (o, x) in out.iter_mut().zip(state.node(l)) {
            *o += w * x;
        }
    }
}

/// Orthogonal projection onto the consensus subspace: every block becomes
/// the across-node mean.
pub fn consensus_projection(state: &NetworkState) -> NetworkState {
    NetworkState::replicated(state.nodes(), &state.mean())
}

/// `||h - P_O(h)||^2`, zero iff every node agrees.
pub fn consensus_distance_sq(state: &NetworkState) -> f64 {
    let mean = state.mean();
    state
        .iter()
        .flat_map(|block| block.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)))
        .sum()
}
