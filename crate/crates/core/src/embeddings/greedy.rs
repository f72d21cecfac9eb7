//! Greedy low-rank approximation of vector sets.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{EmbeddingSet, ZERO_NORM};
use crate::error::{input, Error, Result};

/// Orthogonal projector `Q = I − B Bᵀ` removing the span of `B`'s
/// orthonormal columns.
#[derive(Clone, Debug)]
pub struct Projector {
    removed: DMatrix<f64>,
}

impl Projector {
    pub fn identity(dim: usize) -> Self {
        Projector {
            removed: DMatrix::zeros(dim, 0),
        }
    }

    /// Projects everything to zero.
    pub fn zero(dim: usize) -> Self {
        Projector {
            removed: DMatrix::identity(dim, dim),
        }
    }

    /// Removes the span of the given vectors (columns of `span`).
    pub fn removing_span(span: &DMatrix<f64>) -> Self {
        let dim = span.nrows();
        if span.ncols() == 0 {
            return Self::identity(dim);
        }
        // Basis from the eigenvectors of the small Gram matrix; nalgebra's SVD
        // can return a wrong factorization on rank-deficient inputs.
        let eig = (span.transpose() * span).symmetric_eigen();
        let lmax = eig.eigenvalues.max();
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&c| eig.eigenvalues[c] > lmax.max(1.0) * 1e-12)
            .collect();
        if keep.is_empty() {
            return Self::identity(dim);
        }
        let mut removed = DMatrix::zeros(dim, keep.len());
        for (t, &c) in keep.iter().enumerate() {
            let col = span * eig.eigenvectors.column(c) / eig.eigenvalues[c].sqrt();
            removed.set_column(t, &col);
        }
        // One Gram-Schmidt pass to clean up rounding in near-degenerate directions.
        let rank = keep.len().min(dim);
        let removed = removed.qr().q().columns(0, rank).into_owned();
        Projector { removed }
    }

    pub fn dim(&self) -> usize {
        self.removed.nrows()
    }

    /// Orthonormal basis of the removed subspace, one column per direction.
    pub fn removed_basis(&self) -> &DMatrix<f64> {
        &self.removed
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.removed * (self.removed.transpose() * v)
    }

    /// Projects every row of `rows`.
    pub fn apply_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        rows - (rows * &self.removed) * self.removed.transpose()
    }

    /// The complementary projector onto the removed span, applied to rows.
    pub fn project_onto_removed_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        (rows * &self.removed) * self.removed.transpose()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GreedyStep {
    pub pick: usize,
    /// Residual statistic before the pick.
    pub statistic: f64,
    pub mean_norm_sq_before: f64,
    pub mean_norm_sq_after: f64,
    /// Norm decrease is at least the statistic, up to 1e-9.
    pub decrease_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedSelection {
    /// Picked indices in order.
    pub selected: Vec<usize>,
    pub steps: Vec<GreedyStep>,
    /// Orthonormal basis of the removed subspace (columns), for explicit input.
    #[serde(skip)]
    pub basis: Option<DMatrix<f64>>,
    pub residual_norms_sq: Vec<f64>,
    pub residual_statistic: f64,
    pub eps: f64,
    pub budget: usize,
}

impl SeedSelection {
    pub fn met_target(&self) -> bool {
        self.residual_statistic <= self.eps + 1e-7
    }

    pub fn all_steps_ok(&self) -> bool {
        self.steps.iter().all(|s| s.decrease_ok)
    }
}

/// `E_{i,j} ⟨w_i,w_j⟩² / (‖w_i‖ ‖w_j‖)` from a Gram matrix, zero-norm rows
/// skipped.
pub fn residual_statistic(gram: &DMatrix<f64>) -> f64 {
    let n = gram.nrows();
    if n == 0 {
        return 0.0;
    }
    let norms: Vec<f64> = (0..n).map(|i| gram[(i, i)].max(0.0).sqrt()).collect();
    let mut s = 0.0;
    for i in 0..n {
        if norms[i] < ZERO_NORM {
            continue;
        }
        for j in 0..n {
            if norms[j] >= ZERO_NORM {
                s += gram[(i, j)].powi(2) / (norms[i] * norms[j]);
            }
        }
    }
    s / (n * n) as f64
}

fn mean_diag(g: &DMatrix<f64>) -> f64 {
    g.diagonal().iter().map(|x| x.max(0.0)).sum::<f64>() / g.nrows().max(1) as f64
}

/// Index maximizing `Σ_i ⟨w_i, w̄_j⟩²`; ties (up to rounding) go to the lowest index.
fn best_pick(gram: &DMatrix<f64>) -> Option<usize> {
    let n = gram.nrows();
    let mut best: Option<(usize, f64)> = None;
    for j in 0..n {
        let d = gram[(j, j)];
        if d.max(0.0).sqrt() < ZERO_NORM {
            continue;
        }
        let score = gram.column(j).iter().map(|x| x * x).sum::<f64>() / d;
        if best.is_none_or(|(_, s)| score > s + 1e-12 * s.abs().max(1.0)) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

fn budget_for(eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps.is_finite()) {
        return input(format!("eps = {eps} must be positive"));
    }
    Ok((1.0 / eps - 1e-12).ceil().max(1.0) as usize)
}

/// Repeatedly removes the direction `w̄_j` of the residual that maximizes the
/// drop in `E_i ‖w_i‖²`, stopping as soon as the residual statistic is at
/// most `eps`.
pub fn greedy_basis(vectors: &EmbeddingSet, eps: f64) -> Result<SeedSelection> {
    let budget = budget_for(eps)?;
    let mut rows = vectors.rows().cloned();
    let mut gram = vectors.gram();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut selected = Vec::new();
    let mut steps = Vec::new();
    loop {
        let statistic = residual_statistic(&gram);
        if statistic <= eps || selected.len() >= budget {
            break;
        }
        let Some(j) = best_pick(&gram) else { break };
        let before = mean_diag(&gram);
        match rows.as_mut() {
            Some(w) => {
                let mut dir = w.row(j).transpose();
                for b in &basis {
                    let c = b.dot(&dir);
                    dir -= b * c;
                }
                dir /= dir.norm();
                let proj = &*w * &dir;
                *w -= proj * dir.transpose();
                basis.push(dir);
                gram = &*w * w.transpose();
            }
            None => {
                let col = gram.column(j).clone_owned();
                let d = gram[(j, j)];
                gram -= &col * col.transpose() / d;
                gram = (&gram + gram.transpose()) * 0.5;
            }
        }
        let after = mean_diag(&gram);
        selected.push(j);
        steps.push(GreedyStep {
            pick: j,
            statistic,
            mean_norm_sq_before: before,
            mean_norm_sq_after: after,
            decrease_ok: before - after >= statistic - 1e-9,
        });
    }
    let basis = rows.as_ref().map(|w| {
        let mut b = DMatrix::zeros(w.ncols(), basis.len());
        for (c, v) in basis.iter().enumerate() {
            b.set_column(c, v);
        }
        b
    });
    Ok(SeedSelection {
        selected,
        steps,
        basis,
        residual_norms_sq: gram.diagonal().iter().map(|x| x.max(0.0)).collect(),
        residual_statistic: residual_statistic(&gram),
        eps,
        budget,
    })
}

/// Greedy selection where the residual after picking `U` is `rule(U) v_i`.
/// The rule must annihilate every picked vector (checked to 1e-9).
pub fn greedy_basis_general(
    vectors: &EmbeddingSet,
    rule: &dyn Fn(&[usize]) -> Result<Projector>,
    eps: f64,
) -> Result<SeedSelection> {
    let budget = budget_for(eps)?;
    let v = vectors
        .rows()
        .ok_or_else(|| Error::Input("general projector rule needs explicit vectors".into()))?;
    let mut resid = v.clone();
    let mut selected: Vec<usize> = Vec::new();
    let mut steps = Vec::new();
    let mut projector = Projector::identity(v.ncols());
    loop {
        let gram = &resid * resid.transpose();
        let statistic = residual_statistic(&gram);
        if statistic <= eps || selected.len() >= budget {
            break;
        }
        let Some(j) = best_pick(&gram) else { break };
        let before = mean_diag(&gram);
        selected.push(j);
        projector = rule(&selected)?;
        if projector.dim() != v.ncols() {
            return input("projector dimension does not match the vectors");
        }
        for &s in &selected {
            let r = projector.apply(&v.row(s).transpose()).norm();
            if r > 1e-9 {
                return Err(Error::ProjectorRule(r));
            }
        }
        resid = projector.apply_rows(v);
        let after = mean_diag(&(&resid * resid.transpose()));
        steps.push(GreedyStep {
            pick: j,
            statistic,
            mean_norm_sq_before: before,
            mean_norm_sq_after: after,
            decrease_ok: before - after >= statistic - 1e-9,
        });
    }
    let gram = &resid * resid.transpose();
    Ok(SeedSelection {
        selected,
        steps,
        basis: Some(projector.removed_basis().clone()),
        residual_norms_sq: gram.diagonal().iter().map(|x| x.max(0.0)).collect(),
        residual_statistic: residual_statistic(&gram),
        eps,
        budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::IndexSpace;

    #[test]
    fn projector_on_dependent_columns() {
        // Two pairs of label vectors with the same sum: rank 3 in R^7.
        let span = DMatrix::from_row_slice(
            4,
            7,
            &[
                0.5, 0.3396, -0.0539, 0.1198, -0.2994, 0.0818, 0.1452, //
                0.5, -0.3396, 0.0539, -0.1198, 0.2994, -0.0818, -0.1452, //
                0.5, 0.1, 0.1952, -0.151, 0.389, 0.0818, 0.1452, //
                0.5, -0.1, -0.1952, 0.151, -0.389, -0.0818, -0.1452,
            ],
        )
        .transpose();
        let p = Projector::removing_span(&span);
        assert_eq!(p.removed_basis().ncols(), 3);
        let b = p.removed_basis();
        assert!((b.transpose() * b - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert!(p.apply_rows(&span.transpose()).amax() < 1e-12);
    }

    #[test]
    fn identical_vectors_need_one_pick() {
        let rows = DMatrix::from_fn(5, 3, |_, c| if c == 0 { 1.0 } else { 0.0 });
        let s = greedy_basis(&EmbeddingSet::explicit(IndexSpace::Vertex { n: 5 }, rows), 0.1).unwrap();
        assert_eq!(s.selected.len(), 1);
        assert!(s.residual_norms_sq.iter().all(|&x| x < 1e-24));
        assert!(s.all_steps_ok());
    }

    #[test]
    fn orthonormal_vectors_start_below_half() {
        let e = EmbeddingSet::explicit(IndexSpace::Vertex { n: 4 }, DMatrix::identity(4, 4));
        let s = greedy_basis(&e, 0.5).unwrap();
        assert!(s.selected.len() <= 2);
        assert!(s.residual_statistic <= 0.5);
    }

    #[test]
    fn implicit_and_explicit_agree() {
        let rows = DMatrix::from_fn(6, 3, |i, c| ((i * 7 + c * 3) % 5) as f64 / 5.0 - 0.3);
        let rows = DMatrix::from_fn(6, 3, |i, c| rows[(i, c)] / rows.row(i).norm());
        let ex = EmbeddingSet::explicit(IndexSpace::Vertex { n: 6 }, rows.clone());
        let im = EmbeddingSet::implicit(IndexSpace::Vertex { n: 6 }, &rows * rows.transpose()).unwrap();
        let a = greedy_basis(&ex, 0.2).unwrap();
        let b = greedy_basis(&im, 0.2).unwrap();
        assert_eq!(a.selected, b.selected);
        assert!((a.residual_statistic - b.residual_statistic).abs() < 1e-9);
        let basis = a.basis.unwrap();
        assert!((basis.transpose() * &basis - DMatrix::identity(basis.ncols(), basis.ncols())).norm() < 1e-9);
    }

    #[test]
    fn general_rule_with_exact_complement_matches() {
        let rows = DMatrix::from_fn(6, 3, |i, c| (((i + 1) * (c + 2)) % 7) as f64 / 7.0);
        let rows = DMatrix::from_fn(6, 3, |i, c| rows[(i, c)] / rows.row(i).norm());
        let ex = EmbeddingSet::explicit(IndexSpace::Vertex { n: 6 }, rows.clone());
        let rule = |u: &[usize]| {
            let span = DMatrix::from_fn(3, u.len(), |r, c| rows[(u[c], r)]);
            Ok(Projector::removing_span(&span))
        };
        let a = greedy_basis(&ex, 0.05).unwrap();
        let b = greedy_basis_general(&ex, &rule, 0.05).unwrap();
        assert_eq!(a.selected, b.selected);
        let zero = |_: &[usize]| Ok(Projector::zero(3));
        let z = greedy_basis_general(&ex, &zero, 0.05).unwrap();
        assert_eq!(z.selected.len(), 1);
        assert_eq!(z.residual_statistic, 0.0);
        let bad = |_: &[usize]| Ok(Projector::identity(3));
        assert!(matches!(greedy_basis_general(&ex, &bad, 0.05), Err(Error::ProjectorRule(_))));
    }
}
