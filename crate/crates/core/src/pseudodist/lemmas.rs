//! Covariance quantities and the per-pair inequalities they satisfy.

use nalgebra::DMatrix;
use serde::Serialize;

use super::family::{LocalDistributionFamily, Marginals};
use super::table::{statistical_distance, variance_k};
use crate::error::{input, Result};

/// Variance floor below which a term is left out of a bound.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// `Cov(X_ia, X_jb)`.
pub fn covariance<M: Marginals + ?Sized>(m: &M, (i, a): (usize, usize), (j, b): (usize, usize)) -> Result<f64> {
    let k = m.k();
    let p = m.pair(i, j)?;
    let pi = m.singleton(i)?;
    let pj = m.singleton(j)?;
    Ok(p[a * k + b] - pi[a] * pj[b])
}

/// `nk × nk` matrix of `Cov(X_ia, X_jb)` indexed by `i*k + a`.
pub fn covariance_matrix<M: Marginals + ?Sized>(m: &M) -> Result<DMatrix<f64>> {
    let (n, k) = (m.n(), m.k());
    let s = m.singletons()?;
    let mut c = pair_probability_matrix(m)?;
    for i in 0..n {
        for a in 0..k {
            for j in 0..n {
                for b in 0..k {
                    c[(i * k + a, j * k + b)] -= s[i][a] * s[j][b];
                }
            }
        }
    }
    Ok(c)
}

/// `nk × nk` matrix of `Pr[X_i = a, X_j = b]`; diagonal blocks are diagonal.
pub fn pair_probability_matrix<M: Marginals + ?Sized>(m: &M) -> Result<DMatrix<f64>> {
    let (n, k) = (m.n(), m.k());
    let mut g = DMatrix::zeros(n * k, n * k);
    for i in 0..n {
        for j in i..n {
            let p = m.pair(i, j)?;
            for a in 0..k {
                for b in 0..k {
                    g[(i * k + a, j * k + b)] = p[a * k + b];
                    g[(j * k + b, i * k + a)] = p[a * k + b];
                }
            }
        }
    }
    Ok(g)
}

/// `E_i Var[X_i]`.
pub fn average_variance<M: Marginals + ?Sized>(m: &M) -> Result<f64> {
    let s = m.singletons()?;
    Ok(s.iter().map(|p| variance_k(p)).sum::<f64>() / m.n() as f64)
}

/// `E_{x_S} Var[X_i | X_S = x_S]`.
pub fn expected_conditional_variance(family: &LocalDistributionFamily, i: usize, seeds: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for part in family.partition(seeds)? {
        total += part.mass() * variance_k(&part.singleton(i)?);
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `‖{X_i X_j} − {X_i}{X_j}‖₁` against `Σ_{a,b} |Cov(X_ia, X_jb)|`.
pub fn check_statdist_cov_identity<M: Marginals + ?Sized>(m: &M, i: usize, j: usize) -> Result<IdentityCheck> {
    let k = m.k();
    let joint = m.pair(i, j)?;
    let pi = m.singleton(i)?;
    let pj = m.singleton(j)?;
    let product: Vec<f64> = (0..k * k).map(|x| pi[x / k] * pj[x % k]).collect();
    let lhs = statistical_distance(&joint, &product)?;
    let mut rhs = 0.0;
    for a in 0..k {
        for b in 0..k {
            rhs += covariance(m, (i, a), (j, b))?.abs();
        }
    }
    Ok(IdentityCheck {
        lhs,
        rhs,
        pass: (lhs - rhs).abs() <= 1e-9,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecrementCheck {
    /// `Var X_i − E_{X_j} Var[X_i | X_j]`
    pub decrement: f64,
    /// `(1/k) Σ_{a,b} Cov(X_ia, X_jb)² / Var X_jb`, terms under the floor skipped
    pub bound: f64,
    pub pass: bool,
}

/// Variance of `X_i` removed by conditioning on `X_j`, with its covariance bound.
pub fn conditional_variance_decrement<M: Marginals + ?Sized>(m: &M, i: usize, j: usize) -> Result<DecrementCheck> {
    let k = m.k();
    let p = m.pair(i, j)?;
    let pi = m.singleton(i)?;
    let pj = m.singleton(j)?;
    let mut expected = 0.0;
    for b in 0..k {
        let mass: f64 = (0..k).map(|a| p[a * k + b]).sum();
        if mass > super::family::ZERO_MASS {
            let cond: Vec<f64> = (0..k).map(|a| p[a * k + b] / mass).collect();
            expected += mass * variance_k(&cond);
        }
    }
    let decrement = variance_k(&pi) - expected;
    let mut bound = 0.0;
    for b in 0..k {
        let var_b = pj[b] * (1.0 - pj[b]);
        if var_b < VARIANCE_FLOOR {
            continue;
        }
        for a in 0..k {
            let c = p[a * k + b] - pi[a] * pj[b];
            bound += c * c / var_b;
        }
    }
    bound /= k as f64;
    Ok(DecrementCheck {
        decrement,
        bound,
        pass: decrement >= bound - 1e-9,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PiDistance {
    /// `Σ_a |Pr[X_i=a, X_j=π(a)] − Pr[X_i=a] Pr[X_j=π(a)]|`
    pub distance: f64,
    /// `Σ_a |Cov(X_ia, X_jπ(a))|`
    pub covariance_sum: f64,
    pub pass: bool,
}

/// Statistical distance restricted to the graph of `pi`.
pub fn pi_distance<M: Marginals + ?Sized>(m: &M, i: usize, j: usize, pi: &[usize]) -> Result<PiDistance> {
    let k = m.k();
    if crate::csp::Relation::from_bijection(pi).is_err() || pi.len() != k {
        return input(format!("{pi:?} is not a bijection of [{k}]"));
    }
    let joint = m.pair(i, j)?;
    let pi_m = m.singleton(i)?;
    let pj_m = m.singleton(j)?;
    let on_graph: Vec<f64> = (0..k).map(|a| joint[a * k + pi[a]]).collect();
    let product: Vec<f64> = (0..k).map(|a| pi_m[a] * pj_m[pi[a]]).collect();
    let distance = statistical_distance(&on_graph, &product)?;
    let mut covariance_sum = 0.0;
    for (a, &b) in pi.iter().enumerate() {
        covariance_sum += covariance(m, (i, a), (j, b))?.abs();
    }
    Ok(PiDistance {
        distance,
        covariance_sum,
        pass: (distance - covariance_sum).abs() <= 1e-9,
    })
}

/// Both sides of `E Var[X|Y] = Var X − Cov(X,Y)² / Var Y` for real 0/1
/// variables with joint table `p[x][y]`.
pub fn binary_conditioning_identity(p: [[f64; 2]; 2]) -> (f64, f64) {
    let px1 = p[1][0] + p[1][1];
    let py1 = p[0][1] + p[1][1];
    let var_x = px1 * (1.0 - px1);
    let var_y = py1 * (1.0 - py1);
    let cov = p[1][1] - px1 * py1;
    let mut lhs = 0.0;
    for y in 0..2 {
        let mass = p[0][y] + p[1][y];
        if mass > 0.0 {
            let q = p[1][y] / mass;
            lhs += mass * q * (1.0 - q);
        }
    }
    (lhs, var_x - cov * cov / var_y)
}
