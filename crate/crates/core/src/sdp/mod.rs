//! Moment-matrix relaxations, a first-order solver, and exact fixtures.

mod admm;
mod basis;
mod fit;
mod moment;
mod problem;

use serde::{Deserialize, Serialize};

pub use admm::{solve, SolveOptions, SolveReport};
pub use basis::{subsets_up_to, BasisElement, MomentBasis};
pub use fit::{fit_local_distributions, FitResult, SetFit};
pub use moment::{
    exact_moment_matrix, exact_moment_matrix_for, extract_local_family, extract_vector_system, extract_vectors, MomentData,
    MomentMatrix,
};
pub use problem::{RelaxationProblem, TABLE_ENTRY_CAP};

/// Default cap on the full moment basis size.
pub const DEFAULT_BASIS_CAP: usize = 5000;

/// Which relaxation to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hierarchy {
    /// PSD moment matrix over sets of size at most `depth`; tables on sets
    /// of size at most `2 depth`.
    Lasserre { depth: usize },
    /// Basic `(1 + nk)`-dimensional PSD block plus consistent local tables
    /// on sets of size at most `table_size`.
    Local { table_size: usize },
}

impl Hierarchy {
    pub fn psd_depth(&self) -> usize {
        match *self {
            Hierarchy::Lasserre { depth } => depth,
            Hierarchy::Local { .. } => 1,
        }
    }

    /// Largest table size on `n` vertices.
    pub fn table_size(&self, n: usize) -> usize {
        match *self {
            Hierarchy::Lasserre { depth } => (2 * depth).min(n),
            Hierarchy::Local { table_size } => table_size.max(2).min(n),
        }
    }

    /// Conditioning rounds supported: `table_size − 2`.
    pub fn rounds(&self, n: usize) -> usize {
        self.table_size(n).saturating_sub(2)
    }

    /// Depth reported in solve reports.
    pub fn depth_label(&self) -> usize {
        match *self {
            Hierarchy::Lasserre { depth } => depth,
            Hierarchy::Local { table_size } => table_size,
        }
    }
}

/// Random downward-closed sets replacing the full list of local tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledSets {
    pub count: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaxationConfig {
    pub hierarchy: Hierarchy,
    #[serde(default)]
    pub sampled_sets: Option<SampledSets>,
    pub basis_cap: usize,
}

impl RelaxationConfig {
    pub fn lasserre(depth: usize) -> Self {
        RelaxationConfig {
            hierarchy: Hierarchy::Lasserre { depth },
            sampled_sets: None,
            basis_cap: DEFAULT_BASIS_CAP,
        }
    }

    pub fn local(table_size: usize) -> Self {
        RelaxationConfig {
            hierarchy: Hierarchy::Local { table_size },
            sampled_sets: None,
            basis_cap: DEFAULT_BASIS_CAP,
        }
    }
}

/// Builds the depth-`d` Lasserre relaxation.
pub fn build_relaxation(instance: &crate::csp::Csp2Instance, depth: usize) -> crate::error::Result<RelaxationProblem> {
    RelaxationProblem::lasserre(instance, depth)
}
