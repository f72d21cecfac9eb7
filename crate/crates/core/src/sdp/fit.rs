use serde::Serialize;

use crate::embeddings::{EmbeddingSet, IndexSpace};
use crate::error::{input, Result};
use crate::pseudodist::{LocalDistributionFamily, Provenance, Table};

/// Iterations of proportional fitting used to warm start each set.
const IPF_SWEEPS: usize = 500;
const SUBGRADIENT_STEPS: usize = 3000;

/// Fitted tables and how far their singleton and pair moments are from the
/// vector inner products.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub family: LocalDistributionFamily,
    /// Largest absolute moment deviation over all sets.
    pub max_deviation: f64,
    pub per_set: Vec<SetFit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SetFit {
    pub set: Vec<usize>,
    pub deviation: f64,
    /// Moment `(i, a, j, b)` attaining the deviation; singletons have `i == j`.
    pub worst: Option<(usize, usize, usize, usize)>,
}

/// One linear moment condition: the table entries it sums and its target.
struct Moment {
    cells: Vec<usize>,
    target: f64,
    label: (usize, usize, usize, usize),
}

fn moments(v: &EmbeddingSet, set: &[usize], k: usize) -> Vec<Moment> {
    let s = set.len();
    let size = k.pow(s as u32);
    let digit = |idx: usize, p: usize| (idx / k.pow((s - 1 - p) as u32)) % k;
    let mut out = Vec::new();
    for p in 0..s {
        for a in 0..k {
            let i = set[p];
            out.push(Moment {
                cells: (0..size).filter(|&c| digit(c, p) == a).collect(),
                target: v.norm_sq(i * k + a),
                label: (i, a, i, a),
            });
        }
    }
    for p in 0..s {
        for q in p + 1..s {
            for a in 0..k {
                for b in 0..k {
                    let (i, j) = (set[p], set[q]);
                    out.push(Moment {
                        cells: (0..size).filter(|&c| digit(c, p) == a && digit(c, q) == b).collect(),
                        target: v.inner(i * k + a, j * k + b),
                        label: (i, a, j, b),
                    });
                }
            }
        }
    }
    out
}

fn deviation(mu: &[f64], ms: &[Moment]) -> (f64, usize, f64) {
    let mut worst = (0.0, 0, 0.0);
    for (t, m) in ms.iter().enumerate() {
        let r = m.cells.iter().map(|&c| mu[c]).sum::<f64>() - m.target;
        if r.abs() > worst.0 {
            worst = (r.abs(), t, r.signum());
        }
    }
    worst
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(x: &mut [f64]) {
    let mut u = x.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (r, &val) in u.iter().enumerate() {
        css += val;
        let t = (css - 1.0) / (r + 1) as f64;
        if val - t > 0.0 {
            theta = t;
        }
    }
    x.iter_mut().for_each(|v| *v = (*v - theta).max(0.0));
}

fn fit_set(v: &EmbeddingSet, set: &[usize], k: usize) -> (Vec<f64>, f64, Option<(usize, usize, usize, usize)>) {
    let size = k.pow(set.len() as u32);
    let ms = moments(v, set, k);
    let mut mu = vec![1.0 / size as f64; size];
    // Proportional fitting over the pair (or singleton) marginals.
    let groups: Vec<&[Moment]> = if set.len() >= 2 {
        let singles = set.len() * k;
        ms[singles..].chunks(k * k).collect()
    } else {
        ms.chunks(k).collect()
    };
    for _ in 0..IPF_SWEEPS {
        let mut change: f64 = 0.0;
        for g in &groups {
            for m in g.iter() {
                let cur: f64 = m.cells.iter().map(|&c| mu[c]).sum();
                let target = m.target.max(0.0);
                let f = if cur > 0.0 { target / cur } else { 0.0 };
                if cur > 0.0 {
                    change = change.max((target - cur).abs());
                }
                m.cells.iter().for_each(|&c| mu[c] *= f);
            }
            let total: f64 = mu.iter().sum();
            if total > 0.0 {
                mu.iter_mut().for_each(|p| *p /= total);
            } else {
                mu.iter_mut().for_each(|p| *p = 1.0 / size as f64);
            }
        }
        if change < 1e-14 {
            break;
        }
    }
    let (mut best_dev, mut best_t, _) = deviation(&mu, &ms);
    let mut best = mu.clone();
    // Projected subgradient on the maximum deviation.
    let mut x = mu;
    for step in 1..=SUBGRADIENT_STEPS {
        if best_dev <= 1e-12 {
            break;
        }
        let (_, t, sg) = deviation(&x, &ms);
        let len = (ms[t].cells.len() as f64).sqrt();
        let eta = best_dev / (len * (step as f64).sqrt());
        for &c in &ms[t].cells {
            x[c] -= eta * sg / len;
        }
        project_simplex(&mut x);
        let (d, t2, _) = deviation(&x, &ms);
        if d < best_dev {
            best_dev = d;
            best_t = t2;
            best.copy_from_slice(&x);
        }
    }
    let worst = (best_dev > 0.0).then(|| ms[best_t].label);
    (best, best_dev, worst)
}

/// For each requested set, the distribution whose singleton and pair moments
/// are closest in maximum deviation to the label vectors' inner products
/// (`‖v_ia‖²` and `⟨v_ia, v_jb⟩`). A deviation above tolerance certifies that
/// no consistent local distribution matches the vectors on that set.
pub fn fit_local_distributions(vectors: &EmbeddingSet, sets: &[Vec<usize>]) -> Result<FitResult> {
    let IndexSpace::VertexLabel { n, k } = vectors.index() else {
        return input("fitting needs vectors indexed by (vertex, label)");
    };
    let mut tables = Vec::with_capacity(sets.len());
    let mut per_set = Vec::with_capacity(sets.len());
    let mut max_deviation: f64 = 0.0;
    for set in sets {
        let mut s = set.clone();
        s.sort_unstable();
        s.dedup();
        if s.is_empty() || s.iter().any(|&i| i >= n) {
            return input(format!("invalid set {set:?}"));
        }
        let (probs, dev, worst) = fit_set(vectors, &s, k);
        max_deviation = max_deviation.max(dev);
        tables.push(Table::new(s.clone(), k, probs)?);
        per_set.push(SetFit {
            set: s,
            deviation: dev,
            worst,
        });
    }
    let family = LocalDistributionFamily::from_tables(n, k, tables, Provenance::Fitted)?;
    Ok(FitResult {
        family,
        max_deviation,
        per_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection() {
        let mut x = vec![0.5, 0.5, 0.5];
        project_simplex(&mut x);
        assert!(x.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-12));
        let mut y = vec![2.0, 0.0];
        project_simplex(&mut y);
        assert_eq!(y, vec![1.0, 0.0]);
    }
}
