//! Random geometric k-nearest-neighbour graphs and the plants built on them.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynamics::LinearPlant;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, sym_eigen, DenseMatrix, SymmetricEigen};
use crate::rng::{derive_seed, Stream};

const MAX_CONNECTED_ATTEMPTS: usize = 100;

/// Node geometry, adjacency and the normalized support (shift) matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSystem {
    pub positions: Vec<[f64; 2]>,
    pub adjacency: DenseMatrix,
    /// `adjacency / ‖adjacency‖₂`, or zero for an edgeless graph.
    pub support: DenseMatrix,
    pub support_eigen: SymmetricEigen,
}

impl GraphSystem {
    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    /// Builds the normalized support from a symmetric 0/1 adjacency matrix.
    pub fn from_adjacency(positions: Vec<[f64; 2]>, adjacency: DenseMatrix) -> Result<Self> {
        if !adjacency.is_symmetric(0.0) {
            return Err(Error::InvalidArgument("adjacency must be symmetric".into()));
        }
        if positions.len() != adjacency.rows() {
            return Err(Error::shape("GraphSystem", adjacency.rows(), positions.len()));
        }
        // Symmetric, so the spectral norm is the largest |eigenvalue|.
        let norm = sym_eigen(&adjacency)?.max_abs_eigenvalue();
        let support = if norm > 0.0 {
            adjacency.scale(1.0 / norm)
        } else {
            DenseMatrix::zeros(adjacency.rows(), adjacency.cols())
        };
        Self::with_support(positions, adjacency, support)
    }

    /// Uses an explicit support matrix (for example the identity).
    pub fn with_support(positions: Vec<[f64; 2]>, adjacency: DenseMatrix, support: DenseMatrix) -> Result<Self> {
        let support_eigen = sym_eigen(&support)?;
        Ok(GraphSystem {
            positions,
            adjacency,
            support,
            support_eigen,
        })
    }

    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.n();
        (0..n).filter(move |&j| j != i && self.adjacency[(i, j)] != 0.0)
    }

    /// Breadth-first hop distances from `source`; `usize::MAX` if unreachable.
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        dist[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(i) = queue.pop_front() {
            for j in self.neighbours(i) {
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.hop_distances(0).iter().all(|&d| d != usize::MAX)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphOptions {
    pub n: usize,
    pub k: usize,
    /// Resample when the graph comes out disconnected.
    pub require_connected: bool,
}

/// `n` nodes uniform in the unit square, each linked to its `k` nearest
/// neighbours, symmetrized by union.
pub fn generate_graph(n: usize, k: usize, seed: u64) -> Result<GraphSystem> {
    generate_graph_with(
        GraphOptions {
            n,
            k,
            require_connected: false,
        },
        seed,
    )
}

pub fn generate_graph_with(opts: GraphOptions, seed: u64) -> Result<GraphSystem> {
    if opts.k == 0 || opts.n <= opts.k {
        return Err(Error::InvalidArgument(format!(
            "need n > k >= 1, got n = {}, k = {}",
            opts.n, opts.k
        )));
    }
    let attempts = if opts.require_connected { MAX_CONNECTED_ATTEMPTS } else { 1 };
    for attempt in 0..attempts {
        let stream_seed = if attempt == 0 {
            seed
        } else {
            derive_seed(seed, &format!("graph/resample/{attempt}"))
        };
        let mut s = Stream::new(stream_seed, "graph/positions");
        let positions: Vec<[f64; 2]> = (0..opts.n).map(|_| [s.uniform(), s.uniform()]).collect();
        let g = knn_graph(positions, opts.k)?;
        if !opts.require_connected || g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::InvalidArgument(format!(
        "no connected {}-NN graph on {} nodes after {MAX_CONNECTED_ATTEMPTS} attempts",
        opts.k, opts.n
    )))
}

/// k-NN graph over fixed positions. Equidistant candidates go to the lower
/// node index.
pub fn knn_graph(positions: Vec<[f64; 2]>, k: usize) -> Result<GraphSystem> {
    let n = positions.len();
    if k == 0 || n <= k {
        return Err(Error::InvalidArgument(format!("need n > k >= 1, got n = {n}, k = {k}")));
    }
    let mut adjacency = DenseMatrix::zeros(n, n);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        candidates.clear();
        let [xi, yi] = positions[i];
        candidates.extend((0..n).filter(|&j| j != i).map(|j| {
            let [xj, yj] = positions[j];
            ((xi - xj).powi(2) + (yi - yj).powi(2), j)
        }));
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &candidates[..k] {
            adjacency[(i, j)] = 1.0;
            adjacency[(j, i)] = 1.0;
        }
    }
    GraphSystem::from_adjacency(positions, adjacency)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// `A`, `B` diagonal in the eigenbasis of the support matrix.
    GraphAligned,
    /// `A`, `B` with i.i.d. Gaussian entries.
    Unstructured,
}

impl Structure {
    pub fn as_str(self) -> &'static str {
        match self {
            Structure::GraphAligned => "graph_aligned",
            Structure::Unstructured => "unstructured",
        }
    }
}

impl std::str::FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graph_aligned" | "aligned" => Ok(Structure::GraphAligned),
            "unstructured" | "random" => Ok(Structure::Unstructured),
            _ => Err(Error::InvalidArgument(format!("unknown structure {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub structure: Structure,
    pub norm_a: f64,
    pub norm_b: f64,
    pub q_scale: f64,
    pub r_scale: f64,
    pub horizon: usize,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            structure: Structure::GraphAligned,
            norm_a: 0.995,
            norm_b: 1.0,
            q_scale: 1.0,
            r_scale: 1.0,
            horizon: 50,
        }
    }
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("norm_a", self.norm_a),
            ("norm_b", self.norm_b),
            ("q_scale", self.q_scale),
            ("r_scale", self.r_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Random `A`, `B` with the requested spectral norms, `Q = q I`, `R = r I`.
pub fn generate_plant(g: &GraphSystem, spec: &PlantSpec, seed: u64) -> Result<LinearPlant> {
    spec.validate()?;
    let n = g.n();
    let (a, b) = match spec.structure {
        Structure::GraphAligned => (
            aligned_matrix(g, spec.norm_a, &mut Stream::new(seed, "plant/eig_a"))?,
            aligned_matrix(g, spec.norm_b, &mut Stream::new(seed, "plant/eig_b"))?,
        ),
        Structure::Unstructured => (
            gaussian_matrix(n, spec.norm_a, &mut Stream::new(seed, "plant/entries_a"))?,
            gaussian_matrix(n, spec.norm_b, &mut Stream::new(seed, "plant/entries_b"))?,
        ),
    };
    LinearPlant::scalar_features(a, b, spec.q_scale, spec.r_scale, spec.horizon)
}

fn aligned_matrix(g: &GraphSystem, norm: f64, s: &mut Stream) -> Result<DenseMatrix> {
    let n = g.n();
    loop {
        let mut eig = s.normal_vec(n);
        let peak = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            continue;
        }
        eig.iter_mut().for_each(|v| *v *= norm / peak);
        return g.support_eigen.compose(&eig);
    }
}

fn gaussian_matrix(n: usize, norm: f64, s: &mut Stream) -> Result<DenseMatrix> {
    loop {
        let m = DenseMatrix::from_vec(n, n, s.normal_vec(n * n))?;
        let current = spectral_norm(&m);
        if current == 0.0 {
            continue;
        }
        return Ok(m.scale(norm / current));
    }
}
