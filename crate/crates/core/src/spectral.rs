//! Spectra of normalized adjacency matrices and threshold rank.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::csp::ConstraintGraph;
use crate::embeddings::{EmbeddingSet, IndexSpace};
use crate::error::{input, Error, Result};

/// Largest `n` accepted by the dense decomposition path.
pub const MAX_DENSE_N: usize = 2000;

/// `A_ij = w_ij / deg_i`. Symmetric and stochastic for regular graphs.
pub fn normalized_adjacency(graph: &ConstraintGraph) -> Result<DMatrix<f64>> {
    let n = graph.n();
    let deg = graph.degrees();
    if let Some(v) = deg.iter().position(|&d| d <= 0.0) {
        return input(format!("vertex {v} has zero degree"));
    }
    let mut a = DMatrix::zeros(n, n);
    for e in graph.edges() {
        a[(e.i, e.j)] += e.w / deg[e.i];
        a[(e.j, e.i)] += e.w / deg[e.j];
    }
    Ok(a)
}

/// Eigenvalues in non-increasing order with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct SpectralProfile {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralProfile {
    pub fn of_graph(graph: &ConstraintGraph) -> Result<Self> {
        Self::of_symmetric(&normalized_adjacency(graph)?)
    }

    pub fn of_symmetric(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n > MAX_DENSE_N {
            return Err(Error::Cap {
                what: "matrix dimension",
                size: n as f64,
                cap: MAX_DENSE_N as f64,
            });
        }
        let (eigenvalues, eigenvectors) = sorted_eigen(a);
        Ok(SpectralProfile {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `λ_m` counting from the top, 1-based.
    pub fn adjacency_eigenvalue(&self, m: usize) -> f64 {
        self.eigenvalues[m - 1]
    }

    /// `1 − λ_m`: the `m`-th smallest eigenvalue of the normalized Laplacian.
    pub fn laplacian_eigenvalue(&self, m: usize) -> f64 {
        1.0 - self.eigenvalues[m - 1]
    }

    /// `‖A − VΛVᵀ‖_F`.
    pub fn reconstruction_residual(&self, a: &DMatrix<f64>) -> f64 {
        let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.eigenvalues.clone()));
        (a - &self.eigenvectors * l * self.eigenvectors.transpose()).norm()
    }
}

/// Symmetric eigendecomposition sorted by non-increasing eigenvalue.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values = order.iter().map(|&p| eig.eigenvalues[p]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &p) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(p));
    }
    (values, vecs)
}

/// Number of eigenvalues above `tau`, ties within 1e-12 counted as above.
pub fn threshold_rank(profile: &SpectralProfile, tau: f64) -> usize {
    profile.eigenvalues.iter().filter(|&&l| l > tau - 1e-12).count()
}

/// Vectors built from the top `m` eigenvectors: `v_i[r] = sqrt(n/m) f_r(i)`
/// where `f_r` has unit norm. They satisfy `E_i ‖v_i‖² = 1`,
/// `E_{i,j} ⟨v_i,v_j⟩² = 1/m` and local correlation `(1/m) Σ_{r≤m} λ_r`.
pub fn locally_correlated_vectors(profile: &SpectralProfile, m: usize) -> Result<EmbeddingSet> {
    let n = profile.n();
    if m == 0 || m > n {
        return input(format!("m = {m} must lie in 1..={n}"));
    }
    let scale = (n as f64 / m as f64).sqrt();
    let rows = DMatrix::from_fn(n, m, |i, r| scale * profile.eigenvectors[(i, r)]);
    Ok(EmbeddingSet::explicit(IndexSpace::Vertex { n }, rows))
}

/// The three averages the rank-witness lemma is stated in.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationStats {
    /// `E_{ij~G} ⟨v_i,v_j⟩`
    pub local: f64,
    /// `E_{i,j∈V} ⟨v_i,v_j⟩²`
    pub global_sq: f64,
    /// `E_i ‖v_i‖²`
    pub mean_norm_sq: f64,
}

pub fn correlation_stats(vectors: &EmbeddingSet, graph: &ConstraintGraph) -> Result<CorrelationStats> {
    let n = graph.n();
    if vectors.len() != n {
        return input(format!("{} vectors for a graph on {n} vertices", vectors.len()));
    }
    let g = vectors.gram();
    let local = graph.edge_expectation(|i, j| g[(i, j)]);
    let global_sq = g.iter().map(|x| x * x).sum::<f64>() / (n * n) as f64;
    let mean_norm_sq = (0..n).map(|i| g[(i, i)]).sum::<f64>() / n as f64;
    Ok(CorrelationStats {
        local,
        global_sq,
        mean_norm_sq,
    })
}

#[derive(Clone, Debug, Serialize)]
pub enum WitnessOutcome {
    /// Hypotheses held and the eigenvalue bound holds.
    Confirmed,
    /// A hypothesis failed; nothing is concluded.
    HypothesisFailed(String),
    /// Hypotheses held but `λ_index < 1 − C ε`.
    ConclusionFailed { index: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct RankWitness {
    pub stats: CorrelationStats,
    /// 1-based index `⌈(1 − 1/C) m⌉`.
    pub index: usize,
    pub eigenvalue: f64,
    pub bound: f64,
    pub outcome: WitnessOutcome,
}

impl RankWitness {
    pub fn passed(&self) -> bool {
        matches!(self.outcome, WitnessOutcome::Confirmed)
    }
}

/// Checks the hypotheses (local ≥ 1−ε, global ≤ 1/m, mean square norm 1,
/// all to 1e-7) and then `λ_{⌈(1−1/C)m⌉} ≥ 1 − Cε`.
pub fn verify_rank_witness(
    vectors: &EmbeddingSet,
    graph: &ConstraintGraph,
    eps: f64,
    m: usize,
    c: f64,
) -> Result<RankWitness> {
    if c <= 1.0 || m == 0 {
        return input("need C > 1 and m >= 1");
    }
    const TOL: f64 = 1e-7;
    let stats = correlation_stats(vectors, graph)?;
    let profile = SpectralProfile::of_graph(graph)?;
    let index = (((1.0 - 1.0 / c) * m as f64) - 1e-12).ceil().max(1.0) as usize;
    let bound = 1.0 - c * eps;
    let eigenvalue = if index <= profile.n() {
        profile.adjacency_eigenvalue(index)
    } else {
        f64::NEG_INFINITY
    };
    let outcome = if stats.local < 1.0 - eps - TOL {
        WitnessOutcome::HypothesisFailed(format!("local correlation {} < 1 - eps", stats.local))
    } else if stats.global_sq > 1.0 / m as f64 + TOL {
        WitnessOutcome::HypothesisFailed(format!("global correlation {} > 1/m", stats.global_sq))
    } else if (stats.mean_norm_sq - 1.0).abs() > TOL {
        WitnessOutcome::HypothesisFailed(format!("mean squared norm {} != 1", stats.mean_norm_sq))
    } else if eigenvalue >= bound - 1e-12 {
        WitnessOutcome::Confirmed
    } else {
        WitnessOutcome::ConclusionFailed { index }
    };
    Ok(RankWitness {
        stats,
        index,
        eigenvalue,
        bound,
        outcome,
    })
}
