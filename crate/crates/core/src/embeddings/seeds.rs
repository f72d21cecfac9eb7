//! Seed sets from label vectors and the vertex vectors `U_i` used to bound
//! what remains after conditioning on them.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::greedy::{greedy_basis_general, Projector, SeedSelection};
use super::tensor::{check_label_orthogonality, vertex_vector_gram};
use super::{gram_factorize, EmbeddingSet, IndexSpace};
use crate::csp::{ConstraintGraph, Csp2Instance};
use crate::error::{input, Error, Result};
use crate::pseudodist::{pair_probability_matrix, LocalDistributionFamily, Marginals};
use crate::spectral::SpectralProfile;

/// Label vectors `v_ia` together with the unit vector `v_∅` and the
/// covariance vectors `u_ia = v_ia − Pr[X_i = a] v_∅`, all in one coordinate
/// system.
#[derive(Clone, Debug)]
pub struct LabelVectorSystem {
    pub n: usize,
    pub k: usize,
    pub empty: DVector<f64>,
    pub labels: EmbeddingSet,
    pub covariance: EmbeddingSet,
}

impl LabelVectorSystem {
    /// Factorizes the `(1 + nk)`-square Gram matrix whose first row and
    /// column belong to `v_∅`.
    pub fn from_gram(g: &DMatrix<f64>, n: usize, k: usize, tol: f64) -> Result<Self> {
        if g.nrows() != 1 + n * k {
            return input("Gram matrix must have 1 + nk rows");
        }
        let f = gram_factorize(g, tol)?;
        let rows = f.rows().expect("explicit");
        let empty = rows.row(0).transpose();
        let labels = rows.rows(1, n * k).clone_owned();
        let mut cov = labels.clone();
        for p in 0..n * k {
            let prob = labels.row(p).dot(&empty.transpose());
            let r = labels.row(p) - empty.transpose() * prob;
            cov.set_row(p, &r);
        }
        let index = IndexSpace::VertexLabel { n, k };
        Ok(LabelVectorSystem {
            n,
            k,
            empty,
            labels: EmbeddingSet::explicit(index, labels),
            covariance: EmbeddingSet::explicit(index, cov),
        })
    }
}

/// Label vector system realizing the singleton and pair tables of `family`.
pub fn label_vector_system<M: Marginals + ?Sized>(family: &M) -> Result<LabelVectorSystem> {
    let (n, k) = (family.n(), family.k());
    let p = pair_probability_matrix(family)?;
    let s = family.singletons()?;
    let mut g = DMatrix::zeros(1 + n * k, 1 + n * k);
    g[(0, 0)] = 1.0;
    for i in 0..n {
        for a in 0..k {
            g[(0, 1 + i * k + a)] = s[i][a];
            g[(1 + i * k + a, 0)] = s[i][a];
        }
    }
    g.view_mut((1, 1), (n * k, n * k)).copy_from(&p);
    LabelVectorSystem::from_gram(&g, n, k, 1e-8)
}

fn label_shape(v: &EmbeddingSet) -> Result<(usize, usize)> {
    match v.index() {
        IndexSpace::VertexLabel { n, k } => Ok((n, k)),
        _ => input("expected vectors indexed by (vertex, label)"),
    }
}

/// Projector removing `span{v_ia : i ∈ seeds, a ∈ [k]}`.
pub fn seed_projector(v: &EmbeddingSet, seeds: &[usize]) -> Result<Projector> {
    let (_, k) = label_shape(v)?;
    let rows = v
        .rows()
        .ok_or_else(|| Error::Input("seed projection needs explicit vectors".into()))?;
    let mut cols = Vec::new();
    for &i in seeds {
        for a in 0..k {
            cols.push(i * k + a);
        }
    }
    let span = DMatrix::from_fn(rows.ncols(), cols.len(), |r, c| rows[(cols[c], r)]);
    Ok(Projector::removing_span(&span))
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedReport {
    /// Seed vertices in the order they were selected.
    pub seeds: Vec<usize>,
    pub selection: SeedSelection,
    /// `Σ_a ‖P_S v_ia‖²` per vertex, `P_S` projecting away from the seeds'
    /// label vectors.
    pub variance_bound: Vec<f64>,
    pub mean_variance_bound: f64,
}

/// Runs the general greedy selection on the label vectors with the rule
/// "remove all label vectors of every vertex touched so far" at
/// `eps = 1/(k² m)`.
pub fn seed_from_sdp_vectors(v: &EmbeddingSet, m: usize) -> Result<SeedReport> {
    let (n, k) = label_shape(v)?;
    if m == 0 {
        return input("m must be positive");
    }
    let eps = 1.0 / ((k * k * m) as f64);
    let vertices_of = |t: &[usize]| {
        let mut s: Vec<usize> = Vec::new();
        for &p in t {
            if !s.contains(&(p / k)) {
                s.push(p / k);
            }
        }
        s
    };
    let rule = |t: &[usize]| seed_projector(v, &vertices_of(t));
    let selection = greedy_basis_general(v, &rule, eps)?;
    let seeds = vertices_of(&selection.selected);
    let variance_bound = projected_mass(v, &seeds)?;
    let mean_variance_bound = variance_bound.iter().sum::<f64>() / n as f64;
    Ok(SeedReport {
        seeds,
        selection,
        variance_bound,
        mean_variance_bound,
    })
}

/// `Σ_a ‖P_S v_ia‖²` for every vertex.
fn projected_mass(v: &EmbeddingSet, seeds: &[usize]) -> Result<Vec<f64>> {
    let (n, k) = label_shape(v)?;
    let q = seed_projector(v, seeds)?;
    let r = q.apply_rows(v.rows().expect("explicit"));
    Ok((0..n)
        .map(|i| (0..k).map(|a| r.row(i * k + a).norm_squared()).sum())
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct VertexVarianceBound {
    pub vertex: usize,
    /// `E_{x_S} Var[X_i | X_S = x_S]`
    pub conditional_variance: f64,
    /// `Σ_a ‖P_S v_ia‖²`
    pub bound: f64,
    /// Per label: `(Var[X_ia | X_S], ‖P_S v_ia‖²)`.
    pub per_label: Vec<(f64, f64)>,
    pub holds: bool,
}

/// Compares conditional variances with projected label-vector mass.
/// The vectors must reproduce the family's pair probabilities to 1e-7.
pub fn variance_bound_from_projection(
    family: &LocalDistributionFamily,
    v: &EmbeddingSet,
    seeds: &[usize],
) -> Result<Vec<VertexVarianceBound>> {
    let (n, k) = label_shape(v)?;
    if n != family.n() || k != family.k() {
        return input("vectors and family have different shapes");
    }
    let gap = (pair_probability_matrix(family)? - v.gram()).amax();
    if gap > 1e-7 {
        return Err(Error::Inconsistent(gap));
    }
    let q = seed_projector(v, seeds)?;
    let r = q.apply_rows(v.rows().expect("explicit"));
    let parts = family.partition(seeds)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut var_a = vec![0.0; k];
        for part in &parts {
            let p = part.singleton(i)?;
            for a in 0..k {
                var_a[a] += part.mass() * p[a] * (1.0 - p[a]);
            }
        }
        let per_label: Vec<(f64, f64)> = (0..k).map(|a| (var_a[a], r.row(i * k + a).norm_squared())).collect();
        let conditional_variance: f64 = var_a.iter().sum();
        let bound: f64 = per_label.iter().map(|x| x.1).sum();
        let holds = conditional_variance <= bound + 1e-7 && per_label.iter().all(|(l, b)| *l <= b + 1e-7);
        out.push(VertexVarianceBound {
            vertex: i,
            conditional_variance,
            bound,
            per_label,
            holds,
        });
    }
    Ok(out)
}

/// Vertex vectors `U_i = Σ_a ‖u_ia‖ ū_ia^{⊗2} ⊗ v̄_ia` through their Gram
/// matrix, `u` being the projected label vectors.
pub fn vertex_vectors_u(u: &EmbeddingSet, v: &EmbeddingSet) -> Result<EmbeddingSet> {
    let (n, k) = label_shape(v)?;
    if label_shape(u)? != (n, k) {
        return input("u and v have different index spaces");
    }
    check_label_orthogonality(v, n, k, 1e-7)?;
    EmbeddingSet::implicit(IndexSpace::Vertex { n }, vertex_vector_gram(u, v, k)?)
}

/// `η = E_{(i,j)∈E} Σ_a ‖v_ia − v_jπ(a)‖²` for a unique-games instance.
pub fn ug_eta(v: &EmbeddingSet, instance: &Csp2Instance) -> Result<f64> {
    let k = instance.k();
    let mut total = 0.0;
    for c in instance.constraints() {
        let pi = c
            .pi
            .as_ref()
            .ok_or_else(|| Error::Input("instance is not unique games".into()))?;
        let mut s = 0.0;
        for (a, &b) in pi.iter().enumerate() {
            let (p, q) = (c.i * k + a, c.j * k + b);
            s += v.norm_sq(p) + v.norm_sq(q) - 2.0 * v.inner(p, q);
        }
        total += c.weight * s;
    }
    Ok(total / instance.total_weight())
}

#[derive(Clone, Debug, Serialize)]
pub struct HighLocalCorrelation {
    /// `E_{ij∈E} ‖U_i − U_j‖²`
    pub edge_distance: f64,
    pub eta: f64,
    pub holds: bool,
}

/// Checks `E_{ij∈E} ‖U_i − U_j‖² ≤ 3η + 1e-6` with `η` from [`ug_eta`].
pub fn high_local_correlation_check(
    u_vectors: &EmbeddingSet,
    v: &EmbeddingSet,
    instance: &Csp2Instance,
) -> Result<HighLocalCorrelation> {
    let eta = ug_eta(v, instance)?;
    let g = u_vectors.gram();
    let edge_distance = instance
        .graph()
        .edge_expectation(|i, j| g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)]);
    Ok(HighLocalCorrelation {
        edge_distance,
        eta,
        holds: edge_distance <= 3.0 * eta + 1e-6,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum LocalToGlobalOutcome {
    Passed,
    Failed,
    /// `E‖U_i‖²` is below the threshold, so nothing is asserted.
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalToGlobal {
    pub mean_norm_sq: f64,
    /// `1 − λ_m` of the normalized adjacency matrix.
    pub laplacian_eigenvalue: f64,
    pub adjacency_eigenvalue: f64,
    /// `4η / λ_m^Lap`
    pub threshold: f64,
    /// `E_{i,j∈V} ⟨U_i, U_j⟩`
    pub global_correlation: f64,
    pub outcome: LocalToGlobalOutcome,
}

/// If `E_i ‖U_i‖² ≥ 4η/λ_m` (Laplacian), checks `E_{i,j} ⟨U_i,U_j⟩ ≥ 1/m`.
pub fn local_to_global_check(
    u_vectors: &EmbeddingSet,
    graph: &ConstraintGraph,
    m: usize,
    eta: f64,
) -> Result<LocalToGlobal> {
    let n = graph.n();
    if u_vectors.len() != n || m == 0 || m > n {
        return input("vector count must match the graph and 1 <= m <= n");
    }
    let profile = SpectralProfile::of_graph(graph)?;
    let lap = profile.laplacian_eigenvalue(m);
    let g = u_vectors.gram();
    let mean_norm_sq = g.diagonal().sum() / n as f64;
    let global_correlation = g.sum() / (n * n) as f64;
    let threshold = if eta <= 0.0 {
        0.0
    } else if lap <= 0.0 {
        f64::INFINITY
    } else {
        4.0 * eta / lap
    };
    let outcome = if mean_norm_sq <= 0.0 || mean_norm_sq < threshold {
        LocalToGlobalOutcome::Skipped
    } else if global_correlation >= 1.0 / m as f64 - 1e-7 {
        LocalToGlobalOutcome::Passed
    } else {
        LocalToGlobalOutcome::Failed
    };
    Ok(LocalToGlobal {
        mean_norm_sq,
        laplacian_eigenvalue: lap,
        adjacency_eigenvalue: profile.adjacency_eigenvalue(m),
        threshold,
        global_correlation,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudodist::JointDistribution;

    #[test]
    fn point_mass_seeds() {
        let f = LocalDistributionFamily::point_mass(2, &[0, 1, 1]).unwrap();
        let sys = label_vector_system(&f).unwrap();
        // At m = 1 the statistic starts exactly at ε, so nothing is picked.
        let r = seed_from_sdp_vectors(&sys.labels, 1).unwrap();
        assert!(r.seeds.is_empty());
        let r = seed_from_sdp_vectors(&sys.labels, 2).unwrap();
        assert_eq!(r.seeds.len(), 1);
        assert!(r.variance_bound.iter().all(|&x| x < 1e-12));
    }

    #[test]
    fn seed_itself_has_zero_bound() {
        let f = LocalDistributionFamily::from_joint(
            JointDistribution::from_weights(2, 2, [(vec![0, 1], 1.0), (vec![1, 0], 2.0)]).unwrap(),
        );
        let sys = label_vector_system(&f).unwrap();
        let b = variance_bound_from_projection(&f, &sys.labels, &[0]).unwrap();
        assert!(b[0].conditional_variance.abs() < 1e-12 && b[0].bound < 1e-12);
        assert!(b.iter().all(|x| x.holds));
    }

    #[test]
    fn identical_unit_u_vectors_are_globally_correlated() {
        let g = ConstraintGraph::cycle(4).unwrap();
        let u = EmbeddingSet::implicit(IndexSpace::Vertex { n: 4 }, DMatrix::from_element(4, 4, 1.0)).unwrap();
        let r = local_to_global_check(&u, &g, 2, 0.0).unwrap();
        assert_eq!(r.outcome, LocalToGlobalOutcome::Passed);
        let z = EmbeddingSet::implicit(IndexSpace::Vertex { n: 4 }, DMatrix::zeros(4, 4)).unwrap();
        assert_eq!(local_to_global_check(&z, &g, 2, 0.1).unwrap().outcome, LocalToGlobalOutcome::Skipped);
    }
}
