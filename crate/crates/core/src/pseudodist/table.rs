use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

/// Probability table over `[k]^vars`, `vars` strictly increasing, row-major
/// with the first variable most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    vars: Vec<usize>,
    k: usize,
    probs: Vec<f64>,
}

impl Table {
    pub fn new(vars: Vec<usize>, k: usize, probs: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return input("alphabet must be nonempty");
        }
        if vars.windows(2).any(|w| w[0] >= w[1]) {
            return input(format!("table variables {vars:?} are not strictly increasing"));
        }
        let len = checked_pow(k, vars.len())?;
        if probs.len() != len {
            return input(format!("table over {vars:?} needs {len} entries, got {}", probs.len()));
        }
        Ok(Table { vars, k, probs })
    }

    pub fn uniform(vars: Vec<usize>, k: usize) -> Result<Self> {
        let len = checked_pow(k, vars.len())?;
        Table::new(vars, k, vec![1.0 / len as f64; len])
    }

    pub fn point_mass(vars: Vec<usize>, k: usize, labels: &[usize]) -> Result<Self> {
        let len = checked_pow(k, vars.len())?;
        let mut t = Table::new(vars, k, vec![0.0; len])?;
        let idx = t.index_of(labels);
        t.probs[idx] = 1.0;
        Ok(t)
    }

    /// Product of per-variable distributions.
    pub fn product(vars: Vec<usize>, k: usize, marginals: &[&[f64]]) -> Result<Self> {
        let len = checked_pow(k, vars.len())?;
        let mut probs = vec![1.0; len];
        let mut labels = vec![0; vars.len()];
        for p in probs.iter_mut() {
            for (pos, &a) in labels.iter().enumerate() {
                *p *= marginals[pos][a];
            }
            advance(&mut labels, k);
        }
        Table::new(vars, k, probs)
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn probs_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn index_of(&self, labels: &[usize]) -> usize {
        labels.iter().fold(0, |acc, &a| acc * self.k + a)
    }

    pub fn labels_of(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.vars.len()];
        for slot in out.iter_mut().rev() {
            *slot = idx % self.k;
            idx /= self.k;
        }
        out
    }

    pub fn prob(&self, labels: &[usize]) -> f64 {
        self.probs[self.index_of(labels)]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest of `|Σ p − 1|` and `max(0, −min p)`.
    pub fn validity_violation(&self) -> f64 {
        (self.total() - 1.0).abs().max(-self.min_entry()).max(0.0)
    }

    /// Position of `v` in `vars`.
    pub fn position(&self, v: usize) -> Option<usize> {
        self.vars.binary_search(&v).ok()
    }

    /// Sums out every variable not in `sub` (which must be a subset of `vars`).
    pub fn marginalize(&self, sub: &[usize]) -> Result<Table> {
        let mut sub: Vec<usize> = sub.to_vec();
        sub.sort_unstable();
        sub.dedup();
        if sub == self.vars {
            return Ok(self.clone());
        }
        let pos: Vec<usize> = sub
            .iter()
            .map(|&v| self.position(v).ok_or(()))
            .collect::<std::result::Result<_, _>>()
            .or_else(|_| input(format!("{sub:?} is not a subset of {:?}", self.vars)))?;
        let k = self.k;
        let mut out = vec![0.0; checked_pow(k, sub.len())?];
        let mut labels = vec![0; self.vars.len()];
        for &p in &self.probs {
            let idx = pos.iter().fold(0, |acc, &q| acc * k + labels[q]);
            out[idx] += p;
            advance(&mut labels, k);
        }
        Table::new(sub, k, out)
    }

    /// Entries consistent with `fixed` (pairs of variable and label, every
    /// variable in `vars`), as an unnormalized table over the other variables.
    pub fn slice(&self, fixed: &[(usize, usize)]) -> Result<Table> {
        let mut fixed_pos = Vec::with_capacity(fixed.len());
        for &(v, a) in fixed {
            let p = self
                .position(v)
                .ok_or_else(|| crate::error::Error::Input(format!("vertex {v} not in {:?}", self.vars)))?;
            fixed_pos.push((p, a));
        }
        let rest: Vec<usize> = (0..self.vars.len())
            .filter(|p| !fixed_pos.iter().any(|(q, _)| q == p))
            .collect();
        let k = self.k;
        let mut out = vec![0.0; checked_pow(k, rest.len())?];
        let mut labels = vec![0; self.vars.len()];
        for &(q, a) in &fixed_pos {
            labels[q] = a;
        }
        for (idx, slot) in out.iter_mut().enumerate() {
            let mut r = idx;
            for &p in rest.iter().rev() {
                labels[p] = r % k;
                r /= k;
            }
            *slot = self.prob(&labels);
        }
        Table::new(rest.iter().map(|&p| self.vars[p]).collect(), k, out)
    }

    pub fn scaled(mut self, s: f64) -> Table {
        self.probs.iter_mut().for_each(|p| *p *= s);
        self
    }

    /// `Σ |p − q|` over the common support.
    pub fn l1_distance(&self, other: &Table) -> Result<f64> {
        if self.vars != other.vars || self.k != other.k {
            return input("tables are over different variables");
        }
        statistical_distance(&self.probs, &other.probs)
    }
}

/// `Σ_x |p(x) − q(x)|`.
pub fn statistical_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return input(format!("distributions have {} and {} entries", p.len(), q.len()));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// `Σ_a p_a²`.
pub fn collision_probability(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum()
}

/// Variance over `[k]`: `Σ_a p_a (1 − p_a)`.
pub fn variance_k(p: &[f64]) -> f64 {
    p.iter().map(|x| x * (1.0 - x)).sum()
}

/// Odometer increment, last position fastest.
pub(crate) fn advance(labels: &mut [usize], k: usize) -> bool {
    for slot in labels.iter_mut().rev() {
        *slot += 1;
        if *slot < k {
            return true;
        }
        *slot = 0;
    }
    false
}

pub(crate) fn checked_pow(k: usize, e: usize) -> Result<usize> {
    match k.checked_pow(e as u32) {
        Some(v) if v <= 1 << 28 => Ok(v),
        _ => input(format!("table of size {k}^{e} is too large")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginalize_and_slice() {
        // X0 uniform, X1 = X0, X2 independent fair
        let mut p = vec![0.0; 8];
        for a in 0..2 {
            for c in 0..2 {
                p[a * 4 + a * 2 + c] = 0.25;
            }
        }
        let t = Table::new(vec![0, 1, 2], 2, p).unwrap();
        let m = t.marginalize(&[0, 1]).unwrap();
        assert_eq!(m.probs(), &[0.5, 0.0, 0.0, 0.5]);
        let s = t.slice(&[(1, 1)]).unwrap();
        assert_eq!(s.vars(), &[0, 2]);
        assert_eq!(s.probs(), &[0.0, 0.0, 0.25, 0.25]);
        assert_eq!(t.labels_of(5), vec![1, 0, 1]);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance_k(&[1.0, 0.0]), 0.0);
        assert_eq!(collision_probability(&[0.0, 1.0, 0.0]), 1.0);
        let u = [0.25; 4];
        assert!((variance_k(&u) - 0.75).abs() < 1e-15);
        let p = [0.5, 0.3, 0.2];
        assert!((collision_probability(&p) - 0.38).abs() < 1e-15);
        assert!((variance_k(&p) - 0.62).abs() < 1e-15);
    }

    #[test]
    fn distances() {
        let a = [0.5, 0.0, 0.0, 0.5];
        let b = [0.25; 4];
        assert_eq!(statistical_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(statistical_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(statistical_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert!(statistical_distance(&[1.0], &[0.5, 0.5]).is_err());
    }
}
