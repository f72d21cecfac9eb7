use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::{subsets_up_to, MomentBasis};
use super::Hierarchy;
use crate::embeddings::{label_vector_system, EmbeddingSet, LabelVectorSystem};
use crate::error::{input, Error, Result};
use crate::pseudodist::{JointDistribution, LocalDistributionFamily, Provenance, Table};
use crate::spectral::sorted_eigen;

/// Moment matrix over the full basis together with the local tables it was
/// read from.
#[derive(Clone, Debug)]
pub struct MomentMatrix {
    hierarchy: Hierarchy,
    provenance: Provenance,
    basis: MomentBasis,
    matrix: DMatrix<f64>,
    tables: BTreeMap<Vec<usize>, Table>,
    psd_violation: f64,
    consistency_violation: f64,
}

impl MomentMatrix {
    /// Builds the matrix from tables, which must cover every union of two
    /// basis sets.
    pub fn from_tables(
        n: usize,
        k: usize,
        hierarchy: Hierarchy,
        provenance: Provenance,
        tables: Vec<Table>,
    ) -> Result<Self> {
        let tables: BTreeMap<Vec<usize>, Table> = tables.into_iter().map(|t| (t.vars().to_vec(), t)).collect();
        let basis = MomentBasis::full(n, k, hierarchy.psd_depth().min(n));
        let matrix = matrix_from_tables(&basis, &tables)?;
        Self::assemble(hierarchy, provenance, basis, matrix, tables)
    }

    /// Reassembles a stored matrix; residuals are recomputed, including the
    /// gap between matrix entries and tables.
    pub fn from_parts(
        n: usize,
        k: usize,
        hierarchy: Hierarchy,
        provenance: Provenance,
        matrix: DMatrix<f64>,
        tables: Vec<Table>,
    ) -> Result<Self> {
        let basis = MomentBasis::full(n, k, hierarchy.psd_depth().min(n));
        if matrix.nrows() != basis.len() || matrix.ncols() != basis.len() {
            return input(format!("matrix is {}x{}, basis has {} elements", matrix.nrows(), matrix.ncols(), basis.len()));
        }
        let tables: BTreeMap<Vec<usize>, Table> = tables.into_iter().map(|t| (t.vars().to_vec(), t)).collect();
        Self::assemble(hierarchy, provenance, basis, matrix, tables)
    }

    fn assemble(
        hierarchy: Hierarchy,
        provenance: Provenance,
        basis: MomentBasis,
        matrix: DMatrix<f64>,
        tables: BTreeMap<Vec<usize>, Table>,
    ) -> Result<Self> {
        let (vals, _) = sorted_eigen(&matrix);
        let psd_violation = (-vals.last().copied().unwrap_or(0.0)).max(0.0);
        let mut m = MomentMatrix {
            hierarchy,
            provenance,
            basis,
            matrix,
            tables,
            psd_violation,
            consistency_violation: 0.0,
        };
        m.consistency_violation = m.table_violation().max(m.entry_violation());
        Ok(m)
    }

    /// Largest table defect: negativity, normalization, or disagreement with
    /// a stored sub-table.
    fn table_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (vars, t) in &self.tables {
            worst = worst.max(t.validity_violation());
            for drop in 0..vars.len() {
                let mut sub = vars.clone();
                sub.remove(drop);
                if let Some(s) = self.tables.get(&sub) {
                    let m = t.marginalize(&sub).expect("subset");
                    worst = worst.max(m.l1_distance(s).expect("same vars"));
                }
            }
        }
        worst
    }

    /// Largest `|M[(S,α),(T,β)] − μ_{S∪T}(α ∪ β)|`, conflicting pairs
    /// compared with zero.
    pub fn entry_violation(&self) -> f64 {
        let el = self.basis.elements();
        let mut worst: f64 = 0.0;
        for p in 0..el.len() {
            for q in p..el.len() {
                let expected = match el[p].merge(&el[q]) {
                    None => 0.0,
                    Some(m) if m.set.is_empty() => 1.0,
                    Some(m) => match self.tables.get(&m.set) {
                        Some(t) => t.prob(&m.labels),
                        None => return f64::INFINITY,
                    },
                };
                worst = worst
                    .max((self.matrix[(p, q)] - expected).abs())
                    .max((self.matrix[(q, p)] - expected).abs());
            }
        }
        worst
    }

    pub fn hierarchy(&self) -> Hierarchy {
        self.hierarchy
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn basis(&self) -> &MomentBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn table(&self, set: &[usize]) -> Option<&Table> {
        self.tables.get(set)
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    /// Largest stored table size.
    pub fn table_size(&self) -> usize {
        self.tables.keys().map(|k| k.len()).max().unwrap_or(0)
    }

    pub fn psd_violation(&self) -> f64 {
        self.psd_violation
    }

    pub fn consistency_violation(&self) -> f64 {
        self.consistency_violation
    }

    pub fn min_eigenvalue(&self) -> f64 {
        sorted_eigen(&self.matrix).0.last().copied().unwrap_or(0.0)
    }

    /// `(1 + nk)`-square block over `∅` and the singletons.
    pub fn singleton_block(&self) -> DMatrix<f64> {
        let m = 1 + self.n() * self.k();
        self.matrix.view((0, 0), (m, m)).clone_owned()
    }

    pub fn to_data(&self) -> MomentData {
        let n = self.matrix.nrows();
        MomentData {
            hierarchy: self.hierarchy,
            provenance: self.provenance,
            n: self.n(),
            k: self.k(),
            basis_size: n,
            matrix: (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| self.matrix[(r, c)]).collect(),
            tables: self.tables.values().cloned().collect(),
        }
    }

    pub fn from_data(d: MomentData) -> Result<Self> {
        if d.matrix.len() != d.basis_size * d.basis_size {
            return input("matrix data has the wrong length");
        }
        let m = DMatrix::from_row_slice(d.basis_size, d.basis_size, &d.matrix);
        Self::from_parts(d.n, d.k, d.hierarchy, d.provenance, m, d.tables)
    }
}

/// Serialized moment matrix: row-major entries plus tables.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentData {
    pub hierarchy: Hierarchy,
    pub provenance: Provenance,
    pub n: usize,
    pub k: usize,
    pub basis_size: usize,
    pub matrix: Vec<f64>,
    pub tables: Vec<Table>,
}

fn matrix_from_tables(basis: &MomentBasis, tables: &BTreeMap<Vec<usize>, Table>) -> Result<DMatrix<f64>> {
    let el = basis.elements();
    let mut m = DMatrix::zeros(el.len(), el.len());
    for p in 0..el.len() {
        for q in p..el.len() {
            let v = match el[p].merge(&el[q]) {
                None => 0.0,
                Some(e) if e.set.is_empty() => 1.0,
                Some(e) => tables
                    .get(&e.set)
                    .ok_or_else(|| Error::UnavailableSubset(e.set.clone()))?
                    .prob(&e.labels),
            };
            m[(p, q)] = v;
            m[(q, p)] = v;
        }
    }
    Ok(m)
}

/// Moment matrix of a true distribution at Lasserre depth `d`.
pub fn exact_moment_matrix(joint: &JointDistribution, depth: usize) -> Result<MomentMatrix> {
    exact_moment_matrix_for(joint, Hierarchy::Lasserre { depth })
}

/// Moment matrix of a true distribution for any hierarchy configuration.
pub fn exact_moment_matrix_for(joint: &JointDistribution, hierarchy: Hierarchy) -> Result<MomentMatrix> {
    let n = joint.n();
    let tables = subsets_up_to(n, hierarchy.table_size(n))
        .iter()
        .map(|s| joint.marginal(s))
        .collect::<Result<Vec<_>>>()?;
    MomentMatrix::from_tables(n, joint.k(), hierarchy, Provenance::ExactDistribution, tables)
}

/// Tables of `m`, clipped at zero and renormalized, as a family of order
/// `table_size − 2`.
pub fn extract_local_family(m: &MomentMatrix) -> Result<LocalDistributionFamily> {
    if m.psd_violation() > 1e-5 || m.consistency_violation() > 1e-5 {
        return Err(Error::Invariant(format!(
            "moment matrix residuals too large: psd {:e}, consistency {:e}",
            m.psd_violation(),
            m.consistency_violation()
        )));
    }
    let mut out = Vec::with_capacity(m.tables.len());
    for t in m.tables() {
        if t.min_entry() < -1e-5 {
            return Err(Error::Invariant(format!("table over {:?} has entry {:e}", t.vars(), t.min_entry())));
        }
        let mut c = t.clone();
        c.probs_mut().iter_mut().for_each(|p| *p = p.max(0.0));
        let s = c.total();
        out.push(c.scaled(1.0 / s));
    }
    LocalDistributionFamily::from_tables(m.n(), m.k(), out, m.provenance())
}

/// Label vectors, `v_∅`, and covariance vectors factored from the singleton
/// block, with per-vertex orthogonality checked to 1e-6.
pub fn extract_vector_system(m: &MomentMatrix) -> Result<LabelVectorSystem> {
    let sys = LabelVectorSystem::from_gram(&m.singleton_block(), m.n(), m.k(), 1e-5)?;
    let k = m.k();
    for i in 0..m.n() {
        for a in 0..k {
            for b in a + 1..k {
                let x = sys.labels.inner(i * k + a, i * k + b);
                if x.abs() > 1e-6 {
                    return Err(Error::Orthogonality { vertex: i, value: x });
                }
            }
        }
    }
    Ok(sys)
}

/// Label vectors `v_ia` indexed by `(vertex, label)`.
pub fn extract_vectors(m: &MomentMatrix) -> Result<EmbeddingSet> {
    Ok(extract_vector_system(m)?.labels)
}

impl LocalDistributionFamily {
    /// Label vectors realizing this family's pair tables.
    pub fn label_vectors(&self) -> Result<LabelVectorSystem> {
        label_vector_system(self)
    }
}
