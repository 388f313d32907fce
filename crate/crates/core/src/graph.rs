//! Undirected, unweighted communication topologies and their Laplacian spectra.

use crate::error::{Error, Result};
use crate::matops::{self, Matrix};

/// Below this a Laplacian eigenvalue counts as zero.
pub const ZERO_EIG_TOL: f64 = 1e-9;

/// Symmetric 0/1 adjacency with zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<bool>,
}

/// Built-in topology families.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topology {
    Complete,
    Ring,
    /// Node `i` links to `i ± s (mod N)` for every offset `s`.
    Circulant(Vec<usize>),
    /// Node 0 is the hub.
    Star,
    /// Undirected edge list over 0-based node ids.
    Edges(Vec<(usize, usize)>),
}

impl Graph {
    /// Graph on `n` nodes with no edges.
    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            adj: vec![false; n * n],
        }
    }

    /// Validates a dense adjacency given as nested rows of 0/1.
    pub fn from_adjacency(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut g = Graph::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::dim(format!("adjacency row {i}"), n, row.len()));
            }
            for (j, &a) in row.iter().enumerate() {
                match a {
                    0 => {}
                    1 if i == j => return Err(Error::invalid(format!("self loop at node {i}"))),
                    1 => g.adj[i * n + j] = true,
                    _ => return Err(Error::invalid(format!("adjacency entry ({i},{j}) = {a} is not 0/1"))),
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                if g.adj[i * n + j] != g.adj[j * n + i] {
                    return Err(Error::invalid(format!("adjacency is asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(g)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::empty(n);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a},{b}) references a node outside 0..{n}")));
            }
            if a == b {
                return Err(Error::invalid(format!("self loop at node {a}")));
            }
            g.set_edge(a, b);
        }
        Ok(g)
    }

    fn set_edge(&mut self, a: usize, b: usize) {
        self.adj[a * self.n + b] = true;
        self.adj[b * self.n + a] = true;
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    /// Neighbors of `i` in ascending order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has_edge(i, j))
    }

    /// Edges `(i, j)` with `i < j`, lexicographic.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.neighbors(i).count()).collect()
    }

    pub fn adjacency_matrix(&self) -> Matrix {
        Matrix::from_fn(self.n, self.n, |i, j| if self.has_edge(i, j) { 1.0 } else { 0.0 })
    }

    /// `D - A`; rows sum to exactly zero.
    pub fn laplacian(&self) -> Matrix {
        let deg = self.degrees();
        Matrix::from_fn(self.n, self.n, |i, j| {
            if i == j {
                deg[i] as f64
            } else if self.has_edge(i, j) {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn spectrum(&self) -> Result<GraphSpectrum> {
        let (eigenvalues, eigenvectors) = matops::sym_eigen(&self.laplacian())?;
        Ok(GraphSpectrum {
            eigenvalues,
            eigenvectors,
        })
    }
}

/// Builds one of the built-in families on `n` nodes.
pub fn make_topology(kind: &Topology, n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::invalid(format!("topology needs at least 2 nodes, got {n}")));
    }
    let mut g = Graph::empty(n);
    match kind {
        Topology::Complete => {
            for i in 0..n {
                for j in i + 1..n {
                    g.set_edge(i, j);
                }
            }
        }
        Topology::Ring => {
            for i in 0..n {
                g.set_edge(i, (i + 1) % n);
            }
        }
        Topology::Circulant(offsets) => {
            if offsets.is_empty() {
                return Err(Error::invalid("circulant topology needs at least one offset"));
            }
            for &s in offsets {
                if s == 0 || s > n / 2 {
                    return Err(Error::invalid(format!(
                        "circulant offset {s} out of range 1..={} for N={n}",
                        n / 2
                    )));
                }
                for i in 0..n {
                    g.set_edge(i, (i + s) % n);
                }
            }
        }
        Topology::Star => {
            for i in 1..n {
                g.set_edge(0, i);
            }
        }
        Topology::Edges(edges) => return Graph::from_edges(n, edges),
    }
    Ok(g)
}

/// Ascending Laplacian eigenvalues and orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct GraphSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl GraphSpectrum {
    /// Algebraic connectivity λ₂ (0 for a single node).
    pub fn fiedler(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(0.0)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn is_connected(&self) -> bool {
        self.fiedler() > ZERO_EIG_TOL
    }

    /// Number of eigenvalues below [`ZERO_EIG_TOL`].
    pub fn zero_count(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l < ZERO_EIG_TOL).count()
    }

    /// `diag(λ₂, …, λ_N)`.
    pub fn lambda(&self) -> Matrix {
        matops::diag(&self.eigenvalues[1.min(self.eigenvalues.len())..])
    }
}
