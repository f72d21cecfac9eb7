//! Tensored vector systems evaluated through closed-form Gram entries.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{EmbeddingSet, IndexSpace, ZERO_NORM};
use crate::error::{input, Error, Result};
use crate::pseudodist::lemmas::VARIANCE_FLOOR;

/// Largest `k · dimension` for which tensor products are built explicitly.
pub const MATERIALIZE_CAP: usize = 10_000;

/// Worst violations of the bounds around a tensored Gram matrix.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SandwichCheck {
    /// `max(0, lower − ⟨v_i,v_j⟩)` over the checked pairs.
    pub lower_violation: f64,
    /// `max(0, ⟨v_i,v_j⟩ − upper)` over all pairs.
    pub upper_violation: f64,
    pub max_norm_sq: f64,
    /// Largest `|‖v_i‖² − Σ_a ‖u_ia‖²|` (unique-games form only).
    pub norm_identity_gap: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct TensorEmbedding {
    pub vectors: EmbeddingSet,
    pub check: SandwichCheck,
}

fn label_dims(u: &EmbeddingSet, k: usize) -> Result<usize> {
    match u.index() {
        IndexSpace::VertexLabel { n, k: kk } if kk == k => Ok(n),
        _ => input("expected vectors indexed by (vertex, label)"),
    }
}

/// `v_i = k^{-1/2} Σ_a ‖u_ia‖ ū_ia ⊗ ū_ia` through its Gram entries, with the
/// lower bound `(1/k²)(Σ|Cov|)²`, the upper bound
/// `(1/k) Σ ½(1/Var_ia + 1/Var_jb) Cov²`, and `‖v_i‖² ≤ 1` checked.
pub fn tensor_embedding_general(u: &EmbeddingSet, k: usize) -> Result<TensorEmbedding> {
    let n = label_dims(u, k)?;
    let g = u.gram();
    let var: Vec<f64> = (0..n * k).map(|p| g[(p, p)]).collect();
    let kf = k as f64;
    let mut gram = DMatrix::zeros(n, n);
    let mut check = SandwichCheck::default();
    for i in 0..n {
        for j in i..n {
            let (mut val, mut abs_sum, mut upper) = (0.0, 0.0, 0.0);
            for a in 0..k {
                for b in 0..k {
                    let (p, q) = (i * k + a, j * k + b);
                    let c = g[(p, q)];
                    abs_sum += c.abs();
                    if var[p] >= VARIANCE_FLOOR && var[q] >= VARIANCE_FLOOR {
                        val += c * c / (var[p] * var[q]).sqrt();
                        upper += 0.5 * (1.0 / var[p] + 1.0 / var[q]) * c * c;
                    }
                }
            }
            val /= kf;
            upper /= kf;
            let lower = abs_sum * abs_sum / (kf * kf);
            gram[(i, j)] = val;
            gram[(j, i)] = val;
            check.lower_violation = check.lower_violation.max(lower - val);
            check.upper_violation = check.upper_violation.max(val - upper);
            if i == j {
                check.max_norm_sq = check.max_norm_sq.max(val);
            }
        }
    }
    check.pass = check.lower_violation <= 1e-9 && check.upper_violation <= 1e-9 && check.max_norm_sq <= 1.0 + 1e-9;
    Ok(TensorEmbedding {
        vectors: EmbeddingSet::implicit(IndexSpace::Vertex { n }, gram)?,
        check,
    })
}

/// Per-vertex orthogonality `|⟨v_ia, v_ib⟩| ≤ 1e-7` for `a ≠ b`.
pub(crate) fn check_label_orthogonality(v: &EmbeddingSet, n: usize, k: usize, tol: f64) -> Result<()> {
    for i in 0..n {
        for a in 0..k {
            for b in a + 1..k {
                let x = v.inner(i * k + a, i * k + b);
                if x.abs() > tol {
                    return Err(Error::Orthogonality { vertex: i, value: x });
                }
            }
        }
    }
    Ok(())
}

/// `⟨x̄, ȳ⟩` from Gram entries, zero when either norm is negligible.
fn cosine(g: &DMatrix<f64>, p: usize, q: usize) -> f64 {
    let (a, b) = (g[(p, p)], g[(q, q)]);
    if a.sqrt() < ZERO_NORM || b.sqrt() < ZERO_NORM {
        0.0
    } else {
        g[(p, q)] / (a * b).sqrt()
    }
}

/// Gram matrix of `Σ_a ‖u_ia‖ ū_ia^{⊗2} ⊗ v̄_ia^{⊗power}`.
fn tensored_gram(gu: &DMatrix<f64>, gv: &DMatrix<f64>, n: usize, k: usize, power: i32) -> DMatrix<f64> {
    let norms: Vec<f64> = (0..n * k).map(|p| gu[(p, p)].max(0.0).sqrt()).collect();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for a in 0..k {
                for b in 0..k {
                    let (p, q) = (i * k + a, j * k + b);
                    if norms[p] < ZERO_NORM || norms[q] < ZERO_NORM {
                        continue;
                    }
                    let cu = cosine(gu, p, q);
                    s += norms[p] * norms[q] * cu * cu * cosine(gv, p, q).powi(power);
                }
            }
            gram[(i, j)] = s;
            gram[(j, i)] = s;
        }
    }
    gram
}

/// Unique-games tensoring: `v_i = Σ_a ‖u_ia‖ ū_ia^{⊗2} ⊗ v̄_ia^{⊗2}`.
///
/// `u` are covariance vectors and `v` label vectors, both indexed by
/// `(vertex, label)`. Checks the lower bound `(Σ_a |Cov(X_ia, X_jπ(a))|)⁴`
/// on each listed constraint `(i, j, π)`, the upper bound
/// `Σ_{a,b} ½(1/Var_ia + 1/Var_jb) Cov²` on every pair, and
/// `‖v_i‖² = Σ_a ‖u_ia‖² ≤ 1`.
pub fn tensor_embedding_ug(
    u: &EmbeddingSet,
    v: &EmbeddingSet,
    k: usize,
    constraints: &[(usize, usize, Vec<usize>)],
) -> Result<TensorEmbedding> {
    let n = label_dims(u, k)?;
    if label_dims(v, k)? != n {
        return input("u and v index different vertex sets");
    }
    check_label_orthogonality(v, n, k, 1e-7)?;
    let gu = u.gram();
    let gv = v.gram();
    let gram = tensored_gram(&gu, &gv, n, k, 2);
    let mut check = SandwichCheck::default();
    for i in 0..n {
        for j in i..n {
            let mut upper = 0.0;
            for a in 0..k {
                for b in 0..k {
                    let (p, q) = (i * k + a, j * k + b);
                    let (vp, vq) = (gu[(p, p)], gu[(q, q)]);
                    if vp >= VARIANCE_FLOOR && vq >= VARIANCE_FLOOR {
                        upper += 0.5 * (1.0 / vp + 1.0 / vq) * gu[(p, q)].powi(2);
                    }
                }
            }
            check.upper_violation = check.upper_violation.max(gram[(i, j)] - upper);
        }
        let mass: f64 = (0..k).map(|a| gu[(i * k + a, i * k + a)]).sum();
        check.norm_identity_gap = check.norm_identity_gap.max((gram[(i, i)] - mass).abs());
        check.max_norm_sq = check.max_norm_sq.max(gram[(i, i)]);
    }
    for (i, j, pi) in constraints {
        if pi.len() != k {
            return input("constraint bijection has the wrong length");
        }
        let s: f64 = (0..k).map(|a| gu[(i * k + a, j * k + pi[a])].abs()).sum();
        check.lower_violation = check.lower_violation.max(s.powi(4) - gram[(*i, *j)]);
    }
    check.pass = check.lower_violation <= 1e-9
        && check.upper_violation <= 1e-9
        && check.max_norm_sq <= 1.0 + 1e-9
        && check.norm_identity_gap <= 1e-6;
    Ok(TensorEmbedding {
        vectors: EmbeddingSet::implicit(IndexSpace::Vertex { n }, gram)?,
        check,
    })
}

fn kron(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(a.len() * b.len(), |r, _| a[r / b.len()] * b[r % b.len()])
}

fn unit(x: DVector<f64>) -> Option<DVector<f64>> {
    let n = x.norm();
    (n >= ZERO_NORM).then(|| x / n)
}

fn materialize(
    u: &EmbeddingSet,
    v: Option<&EmbeddingSet>,
    k: usize,
    scale: f64,
    v_power: usize,
) -> Result<EmbeddingSet> {
    let n = label_dims(u, k)?;
    let du = u.dim().ok_or_else(|| Error::Input("materialization needs explicit vectors".into()))?;
    let dv = match v {
        Some(v) => v.dim().ok_or_else(|| Error::Input("materialization needs explicit vectors".into()))?,
        None => 1,
    };
    let dim = du * du * dv.pow(v_power as u32);
    if k * dim > MATERIALIZE_CAP {
        return Err(Error::Cap {
            what: "k times tensor dimension",
            size: (k * dim) as f64,
            cap: MATERIALIZE_CAP as f64,
        });
    }
    let mut rows = DMatrix::zeros(n, dim);
    for i in 0..n {
        let mut acc = DVector::zeros(dim);
        for a in 0..k {
            let p = i * k + a;
            let uv = u.vector(p).expect("explicit");
            let norm = uv.norm();
            let Some(ub) = unit(uv) else { continue };
            let mut t = kron(&ub, &ub);
            if let Some(v) = v {
                let Some(vb) = unit(v.vector(p).expect("explicit")) else { continue };
                for _ in 0..v_power {
                    t = kron(&t, &vb);
                }
            }
            acc += t * norm;
        }
        rows.set_row(i, &(acc * scale).transpose());
    }
    Ok(EmbeddingSet::explicit(IndexSpace::Vertex { n }, rows))
}

/// Explicit `k^{-1/2} Σ_a ‖u_ia‖ ū_ia^{⊗2}`.
pub fn materialize_general(u: &EmbeddingSet, k: usize) -> Result<EmbeddingSet> {
    materialize(u, None, k, 1.0 / (k as f64).sqrt(), 0)
}

/// Explicit `Σ_a ‖u_ia‖ ū_ia^{⊗2} ⊗ v̄_ia^{⊗2}`.
pub fn materialize_ug(u: &EmbeddingSet, v: &EmbeddingSet, k: usize) -> Result<EmbeddingSet> {
    materialize(u, Some(v), k, 1.0, 2)
}

/// Explicit `U_i = Σ_a ‖u_ia‖ ū_ia^{⊗2} ⊗ v̄_ia`.
pub fn materialize_vertex_vectors(u: &EmbeddingSet, v: &EmbeddingSet, k: usize) -> Result<EmbeddingSet> {
    materialize(u, Some(v), k, 1.0, 1)
}

pub(crate) fn vertex_vector_gram(u: &EmbeddingSet, v: &EmbeddingSet, k: usize) -> Result<DMatrix<f64>> {
    let n = label_dims(u, k)?;
    Ok(tensored_gram(&u.gram(), &v.gram(), n, k, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::gram_factorize;
    use crate::pseudodist::{covariance_matrix, JointDistribution, LocalDistributionFamily};

    fn correlated_pair() -> LocalDistributionFamily {
        LocalDistributionFamily::from_joint(
            JointDistribution::from_weights(2, 2, [(vec![0, 0], 1.0), (vec![1, 1], 1.0)]).unwrap(),
        )
    }

    fn cov_vectors(f: &LocalDistributionFamily) -> EmbeddingSet {
        gram_factorize(&covariance_matrix(f).unwrap(), 1e-9)
            .unwrap()
            .with_index(IndexSpace::VertexLabel { n: 2, k: 2 })
            .unwrap()
    }

    #[test]
    fn correlated_pair_general() {
        let t = tensor_embedding_general(&cov_vectors(&correlated_pair()), 2).unwrap();
        assert!((t.vectors.inner(0, 1) - 0.5).abs() < 1e-12);
        assert!(t.check.pass, "{:?}", t.check);
    }

    #[test]
    fn independent_family_is_orthogonal() {
        let f = LocalDistributionFamily::product(2, vec![vec![0.3, 0.7], vec![0.5, 0.5]]).unwrap();
        let t = tensor_embedding_general(&cov_vectors(&f), 2).unwrap();
        assert!(t.vectors.inner(0, 1).abs() < 1e-12);
    }

    #[test]
    fn correlated_pair_ug() {
        let f = correlated_pair();
        let u = cov_vectors(&f);
        let v = gram_factorize(&crate::pseudodist::pair_probability_matrix(&f).unwrap(), 1e-9)
            .unwrap()
            .with_index(IndexSpace::VertexLabel { n: 2, k: 2 })
            .unwrap();
        let t = tensor_embedding_ug(&u, &v, 2, &[(0, 1, vec![0, 1])]).unwrap();
        assert!((t.vectors.inner(0, 1) - 0.5).abs() < 1e-12);
        assert!(t.check.pass, "{:?}", t.check);
        let x = materialize_ug(&u, &v, 2).unwrap();
        assert!((x.gram() - t.vectors.gram()).norm() < 1e-9);
    }
}
