//! Vector sets, their Gram matrices, and the constructions built on them.

mod greedy;
mod seeds;
mod tensor;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::spectral::sorted_eigen;

pub use greedy::{greedy_basis, greedy_basis_general, residual_statistic, GreedyStep, Projector, SeedSelection};
pub use seeds::{
    high_local_correlation_check, label_vector_system, local_to_global_check, seed_from_sdp_vectors, ug_eta,
    variance_bound_from_projection, vertex_vectors_u, HighLocalCorrelation, LabelVectorSystem, LocalToGlobal,
    LocalToGlobalOutcome, SeedReport, VertexVarianceBound,
};
pub use tensor::{
    materialize_general, materialize_ug, materialize_vertex_vectors, tensor_embedding_general, tensor_embedding_ug,
    SandwichCheck, TensorEmbedding, MATERIALIZE_CAP,
};

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSpace {
    Vertex { n: usize },
    VertexLabel { n: usize, k: usize },
}

impl IndexSpace {
    pub fn len(&self) -> usize {
        match *self {
            IndexSpace::Vertex { n } => n,
            IndexSpace::VertexLabel { n, k } => n * k,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
enum Repr {
    /// One vector per row.
    Explicit(DMatrix<f64>),
    /// Gram matrix only.
    Implicit(DMatrix<f64>),
}

/// A list of vectors, either stored explicitly or through their Gram matrix.
#[derive(Clone, Debug)]
pub struct EmbeddingSet {
    index: IndexSpace,
    repr: Repr,
    unit_ball: bool,
}

impl EmbeddingSet {
    pub fn explicit(index: IndexSpace, rows: DMatrix<f64>) -> Self {
        assert_eq!(rows.nrows(), index.len(), "row count must match the index space");
        EmbeddingSet {
            index,
            repr: Repr::Explicit(rows),
            unit_ball: false,
        }
    }

    /// Set given by its Gram matrix, which must be symmetric with a
    /// nonnegative diagonal.
    pub fn implicit(index: IndexSpace, gram: DMatrix<f64>) -> Result<Self> {
        let n = index.len();
        if gram.nrows() != n || gram.ncols() != n {
            return input(format!("Gram matrix is {}x{}, expected {n}x{n}", gram.nrows(), gram.ncols()));
        }
        for p in 0..n {
            if gram[(p, p)] < -1e-12 {
                return input(format!("Gram diagonal entry {p} is negative"));
            }
            for q in 0..p {
                if (gram[(p, q)] - gram[(q, p)]).abs() > 1e-12 * (1.0 + gram[(p, q)].abs()) {
                    return input("Gram matrix is not symmetric");
                }
            }
        }
        Ok(EmbeddingSet {
            index,
            repr: Repr::Implicit(gram),
            unit_ball: false,
        })
    }

    /// Marks the set as lying in the unit ball, checking norms to 1e-8.
    pub fn in_unit_ball(mut self) -> Result<Self> {
        for p in 0..self.len() {
            let s = self.norm_sq(p);
            if !s.is_finite() || s.sqrt() > 1.0 + 1e-8 {
                return Err(Error::Invariant(format!("vector {p} has norm {}", s.sqrt())));
            }
        }
        self.unit_ball = true;
        Ok(self)
    }

    pub fn with_index(mut self, index: IndexSpace) -> Result<Self> {
        if index.len() != self.len() {
            return input("index space size does not match the vector count");
        }
        self.index = index;
        Ok(self)
    }

    pub fn index(&self) -> IndexSpace {
        self.index
    }

    pub fn unit_ball(&self) -> bool {
        self.unit_ball
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_implicit(&self) -> bool {
        matches!(self.repr, Repr::Implicit(_))
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.repr {
            Repr::Explicit(m) => Some(m.ncols()),
            Repr::Implicit(_) => None,
        }
    }

    pub fn rows(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            Repr::Explicit(m) => Some(m),
            Repr::Implicit(_) => None,
        }
    }

    pub fn vector(&self, p: usize) -> Option<DVector<f64>> {
        self.rows().map(|m| m.row(p).transpose())
    }

    pub fn inner(&self, p: usize, q: usize) -> f64 {
        match &self.repr {
            Repr::Explicit(m) => m.row(p).dot(&m.row(q)),
            Repr::Implicit(g) => g[(p, q)],
        }
    }

    pub fn norm_sq(&self, p: usize) -> f64 {
        self.inner(p, p)
    }

    pub fn gram(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Explicit(m) => m * m.transpose(),
            Repr::Implicit(g) => g.clone(),
        }
    }

    /// Explicit vectors realizing the same Gram matrix.
    pub fn to_explicit(&self, tol: f64) -> Result<EmbeddingSet> {
        match &self.repr {
            Repr::Explicit(_) => Ok(self.clone()),
            Repr::Implicit(g) => gram_factorize(g, tol)?.with_index(self.index),
        }
    }
}

/// Vectors whose Gram matrix is `psd`, one per row, with dimension equal to
/// the numerical rank. Negative eigenvalues down to `−tol` are clipped.
pub fn gram_factorize(psd: &DMatrix<f64>, tol: f64) -> Result<EmbeddingSet> {
    let n = psd.nrows();
    if psd.ncols() != n {
        return input("matrix is not square");
    }
    if n == 0 {
        return Ok(EmbeddingSet::explicit(IndexSpace::Vertex { n: 0 }, DMatrix::zeros(0, 0)));
    }
    let (vals, vecs) = sorted_eigen(psd);
    let min = *vals.last().expect("nonempty");
    if min < -tol {
        return Err(Error::NotPsd(min));
    }
    let cutoff = vals[0].abs().max(1.0) * 1e-14;
    let rank = vals.iter().take_while(|&&l| l > cutoff).count().max(1);
    let rows = DMatrix::from_fn(n, rank, |p, c| vecs[(p, c)] * vals[c].max(0.0).sqrt());
    Ok(EmbeddingSet::explicit(IndexSpace::Vertex { n }, rows))
}
