//! ADMM on the conic form `max cᵀx  s.t.  Ax + g ∈ PSD × R₊`.
//!
//! Every few hundred iterations the current iterate is mixed with the
//! strictly feasible uniform point until it is exactly feasible, and the
//! scaled dual iterate is projected onto the cone to give a certified upper
//! bound. The solve stops once the two are within `gap_tol`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::moment::MomentMatrix;
use super::problem::RelaxationProblem;
use crate::error::Result;
use crate::pseudodist::Provenance;
use crate::spectral::sorted_eigen;

/// Normal-equation size above which conjugate gradients replace Cholesky.
const DENSE_LIMIT: usize = 2500;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Feasibility tolerance reported against.
    pub tol: f64,
    /// Stop once certified upper bound minus feasible objective is below this.
    pub gap_tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    /// Iterations between certificate checks.
    pub check_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-6,
            gap_tol: 1e-4,
            max_iter: 20_000,
            rho: 1.0,
            alpha: 1.6,
            check_every: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Objective of the returned (exactly feasible) point.
    pub objective: f64,
    /// Certified upper bound on the relaxation optimum.
    pub upper_bound: f64,
    pub gap: f64,
    pub psd_violation: f64,
    pub consistency_violation: f64,
    pub iterations: usize,
    pub wall_time_ms: u64,
    pub depth: usize,
    pub basis_size: usize,
    pub converged: bool,
}

struct Csr {
    ncols: usize,
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn nrows(&self) -> usize {
        self.ptr.len() - 1
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.nrows() {
            let mut s = 0.0;
            for t in self.ptr[r]..self.ptr[r + 1] {
                s += self.val[t] * x[self.idx[t]];
            }
            out[r] = s;
        }
    }

    fn tmul(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.nrows() {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for t in self.ptr[r]..self.ptr[r + 1] {
                out[self.idx[t]] += self.val[t] * yr;
            }
        }
    }

    fn column_sq_norms(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.ncols];
        for t in 0..self.val.len() {
            d[self.idx[t]] += self.val[t] * self.val[t];
        }
        d
    }

    fn normal_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.ncols, self.ncols);
        for r in 0..self.nrows() {
            let span = self.ptr[r]..self.ptr[r + 1];
            for a in span.clone() {
                for b in span.clone() {
                    m[(self.idx[a], self.idx[b])] += self.val[a] * self.val[b];
                }
            }
        }
        m
    }
}

/// The scaled conic data.
struct Conic {
    a: Csr,
    g: Vec<f64>,
    c: Vec<f64>,
    psd_dim: usize,
    psd_rows: usize,
}

impl Conic {
    fn build(p: &RelaxationProblem) -> Self {
        let nvars = p.num_vars();
        let mut ptr = vec![0];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        let mut g = Vec::new();
        let psd_dim = p.reduced_basis().len();
        let sq2 = std::f64::consts::SQRT_2;
        for (r, q, e) in p.reduced_entries() {
            let s = if r == q { 1.0 } else { sq2 };
            for &(v, co) in &e.terms {
                idx.push(v);
                val.push(co * s);
            }
            g.push(e.constant * s);
            ptr.push(idx.len());
        }
        let psd_rows = g.len();
        for set in 0..p.sets().len() {
            for e in p.table_exprs_of(set) {
                let norm = e.terms.iter().map(|t| t.1 * t.1).sum::<f64>().sqrt().max(1.0);
                for &(v, co) in &e.terms {
                    idx.push(v);
                    val.push(co / norm);
                }
                g.push(e.constant / norm);
                ptr.push(idx.len());
            }
        }
        let mut c = vec![0.0; nvars];
        for &(v, co) in &p.objective_affine().terms {
            c[v] += co;
        }
        Conic {
            a: Csr {
                ncols: nvars,
                ptr,
                idx,
                val,
            },
            g,
            c,
            psd_dim,
            psd_rows,
        }
    }

    fn unpack(&self, w: &[f64]) -> DMatrix<f64> {
        let n = self.psd_dim;
        let mut m = DMatrix::zeros(n, n);
        let mut t = 0;
        let isq2 = std::f64::consts::FRAC_1_SQRT_2;
        for p in 0..n {
            for q in p..n {
                let v = if p == q { w[t] } else { w[t] * isq2 };
                m[(p, q)] = v;
                m[(q, p)] = v;
                t += 1;
            }
        }
        m
    }

    fn pack(&self, m: &DMatrix<f64>, out: &mut [f64]) {
        let n = self.psd_dim;
        let sq2 = std::f64::consts::SQRT_2;
        let mut t = 0;
        for p in 0..n {
            for q in p..n {
                out[t] = if p == q { m[(p, p)] } else { m[(p, q)] * sq2 };
                t += 1;
            }
        }
    }

    /// Euclidean projection onto `PSD × R₊`.
    fn project(&self, w: &mut [f64]) {
        let m = self.unpack(&w[..self.psd_rows]);
        let (vals, vecs) = sorted_eigen(&m);
        let pos: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.0).collect();
        let mut proj = DMatrix::zeros(self.psd_dim, self.psd_dim);
        for &i in &pos {
            let v = vecs.column(i);
            proj += v * v.transpose() * vals[i];
        }
        self.pack(&proj, &mut w[..self.psd_rows]);
        w[self.psd_rows..].iter_mut().for_each(|x| *x = x.max(0.0));
    }
}

enum NormalSolver {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Cg { diag: Vec<f64> },
}

impl NormalSolver {
    fn new(a: &Csr) -> Self {
        if a.ncols <= DENSE_LIMIT {
            if let Some(ch) = a.normal_matrix().cholesky() {
                return NormalSolver::Dense(ch);
            }
        }
        NormalSolver::Cg {
            diag: a.column_sq_norms().into_iter().map(|d| d.max(1e-12)).collect(),
        }
    }

    fn solve(&self, a: &Csr, rhs: &[f64], x: &mut [f64]) {
        match self {
            NormalSolver::Dense(ch) => {
                let sol = ch.solve(&DVector::from_column_slice(rhs));
                x.copy_from_slice(sol.as_slice());
            }
            NormalSolver::Cg { diag } => pcg(a, diag, rhs, x),
        }
    }
}

/// Jacobi-preconditioned conjugate gradients on `AᵀA x = rhs`, warm started.
fn pcg(a: &Csr, diag: &[f64], rhs: &[f64], x: &mut [f64]) {
    let n = x.len();
    let mut tmp = vec![0.0; a.nrows()];
    let apply = |v: &[f64], out: &mut [f64], tmp: &mut [f64]| {
        a.mul(v, tmp);
        a.tmul(tmp, out);
    };
    let mut r = vec![0.0; n];
    apply(x, &mut r, &mut tmp);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-30);
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..1000 {
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-12 * bnorm {
            break;
        }
        apply(&p, &mut ap, &mut tmp);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Smallest `t` such that `(1−t) x + t x0` satisfies every constraint.
fn repair(p: &RelaxationProblem, conic: &Conic, x: &[f64], x0: &[f64]) -> (Vec<f64>, f64) {
    let mix = |t: f64| -> Vec<f64> { x.iter().zip(x0).map(|(a, b)| (1.0 - t) * a + t * b).collect() };
    let m = conic.a.nrows();
    let (mut yx, mut y0) = (vec![0.0; m], vec![0.0; m]);
    conic.a.mul(x, &mut yx);
    conic.a.mul(x0, &mut y0);
    let mut t: f64 = 0.0;
    for r in conic.psd_rows..m {
        let (a, b) = (yx[r] + conic.g[r], y0[r] + conic.g[r]);
        if a < 0.0 {
            t = t.max(-a / (b - a));
        }
    }
    let min_eig = |t: f64| sorted_eigen(&p.reduced_matrix(&mix(t))).0.last().copied().unwrap_or(0.0);
    if min_eig(t) < 0.0 {
        let (mut lo, mut hi) = (t, 1.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if min_eig(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        t = hi;
    }
    t = (t + 1e-13).min(1.0);
    (mix(t), t)
}

/// Certified upper bound from a dual point `λ ∈ K`, using `0 ≤ x ≤ 1`.
fn upper_bound(conic: &Conic, lambda: &[f64], c0: f64) -> f64 {
    let mut at = vec![0.0; conic.a.ncols];
    conic.a.tmul(lambda, &mut at);
    let box_term: f64 = conic.c.iter().zip(&at).map(|(c, a)| (c + a).max(0.0)).sum();
    let lg: f64 = lambda.iter().zip(&conic.g).map(|(l, g)| l * g).sum();
    c0 + box_term + lg
}

/// Solves the relaxation and returns an exactly feasible moment matrix.
pub fn solve(problem: &RelaxationProblem, opts: &SolveOptions) -> Result<(MomentMatrix, SolveReport)> {
    let start = Instant::now();
    let conic = Conic::build(problem);
    let m = conic.a.nrows();
    let nv = problem.num_vars();
    let c0 = problem.objective_affine().constant;
    let solver = NormalSolver::new(&conic.a);
    let x0 = problem.uniform_point();

    let mut x = x0.clone();
    let mut ax = vec![0.0; m];
    conic.a.mul(&x, &mut ax);
    let mut s: Vec<f64> = ax.iter().zip(&conic.g).map(|(a, g)| a + g).collect();
    conic.project(&mut s);
    let mut u = vec![0.0; m];
    let mut rho = opts.rho;

    let mut best_x = x0.clone();
    let mut best_obj = problem.objective_value(&x0);
    let mut best_upper = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    let mut rhs = vec![0.0; nv];
    let mut tmp = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut ds = vec![0.0; nv];
    for it in 1..=opts.max_iter {
        iterations = it;
        for r in 0..m {
            tmp[r] = s[r] - conic.g[r] - u[r];
        }
        conic.a.tmul(&tmp, &mut rhs);
        for j in 0..nv {
            rhs[j] += conic.c[j] / rho;
        }
        solver.solve(&conic.a, &rhs, &mut x);
        conic.a.mul(&x, &mut ax);
        for r in 0..m {
            let axh = opts.alpha * ax[r] + (1.0 - opts.alpha) * (s[r] - conic.g[r]);
            w[r] = axh + conic.g[r] + u[r];
        }
        let s_prev = std::mem::take(&mut s);
        s = w.clone();
        conic.project(&mut s);
        for r in 0..m {
            u[r] = w[r] - s[r];
        }

        if it % 25 == 0 {
            let rp: Vec<f64> = (0..m).map(|r| ax[r] + conic.g[r] - s[r]).collect();
            let diff: Vec<f64> = (0..m).map(|r| s[r] - s_prev[r]).collect();
            conic.a.tmul(&diff, &mut ds);
            let (pr, dr) = (norm(&rp), rho * norm(&ds));
            if pr > 10.0 * dr && rho < 1e4 {
                rho *= 2.0;
                u.iter_mut().for_each(|v| *v /= 2.0);
            } else if dr > 10.0 * pr && rho > 1e-4 {
                rho /= 2.0;
                u.iter_mut().for_each(|v| *v *= 2.0);
            }
        }

        if it % opts.check_every == 0 || it == opts.max_iter {
            let mut lambda: Vec<f64> = u.iter().map(|v| -rho * v).collect();
            conic.project(&mut lambda);
            best_upper = best_upper.min(upper_bound(&conic, &lambda, c0));
            let (xr, _) = repair(problem, &conic, &x, &x0);
            let obj = problem.objective_value(&xr);
            if obj > best_obj {
                best_obj = obj;
                best_x = xr;
            }
            if best_upper - best_obj <= opts.gap_tol {
                converged = true;
                break;
            }
        }
    }

    let tables = problem.tables_at(&best_x);
    let n = problem.instance().n();
    let k = problem.instance().k();
    let mm = MomentMatrix::from_tables(n, k, problem.hierarchy(), Provenance::Solver, tables)?;
    let report = SolveReport {
        objective: best_obj,
        upper_bound: best_upper,
        gap: (best_upper - best_obj).max(0.0),
        psd_violation: mm.psd_violation(),
        consistency_violation: mm.consistency_violation(),
        iterations,
        wall_time_ms: start.elapsed().as_millis() as u64,
        depth: problem.hierarchy().depth_label(),
        basis_size: mm.basis().len(),
        converged,
    };
    Ok((mm, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::{max_cut_instance, ConstraintGraph};
    use crate::sdp::RelaxationProblem;

    #[test]
    fn single_edge_reaches_one() {
        let inst = max_cut_instance(&ConstraintGraph::complete(2).unwrap());
        let p = RelaxationProblem::lasserre(&inst, 1).unwrap();
        let (m, r) = solve(&p, &SolveOptions::default()).unwrap();
        assert!((r.objective - 1.0).abs() < 1e-4, "{r:?}");
        assert!(r.converged);
        assert!(m.psd_violation() <= 1e-6);
    }

    #[test]
    fn triangle_basic_relaxation() {
        let inst = max_cut_instance(&ConstraintGraph::complete(3).unwrap());
        let p = RelaxationProblem::lasserre(&inst, 1).unwrap();
        let (_, r) = solve(&p, &SolveOptions::default()).unwrap();
        assert!((r.objective - 0.75).abs() < 1e-3, "{r:?}");
        assert!(r.upper_bound >= 0.75 - 1e-9);
    }
}
