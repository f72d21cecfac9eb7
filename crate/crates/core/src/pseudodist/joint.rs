use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::table::{checked_pow, Table};
use crate::csp::Csp2Instance;
use crate::error::{input, Result};

/// Sparse distribution over `[k]^n`: support points and their probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    n: usize,
    k: usize,
    /// Support points, `n` labels each, concatenated.
    labels: Vec<u8>,
    probs: Vec<f64>,
}

impl JointDistribution {
    /// Normalizes nonnegative weights; zero weights are dropped and repeated
    /// points merged.
    pub fn from_weights(n: usize, k: usize, entries: impl IntoIterator<Item = (Vec<usize>, f64)>) -> Result<Self> {
        if k == 0 || k > 256 {
            return input("alphabet size must be in 1..=256");
        }
        let mut merged: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for (x, w) in entries {
            if x.len() != n || x.iter().any(|&a| a >= k) {
                return input(format!("support point {x:?} is not in [{k}]^{n}"));
            }
            if !(w.is_finite() && w >= 0.0) {
                return input(format!("weight {w} is invalid"));
            }
            if w > 0.0 {
                *merged.entry(x.iter().map(|&a| a as u8).collect()).or_insert(0.0) += w;
            }
        }
        let total: f64 = merged.values().sum();
        if total <= 0.0 {
            return input("distribution has no mass");
        }
        let mut labels = Vec::with_capacity(merged.len() * n);
        let mut probs = Vec::with_capacity(merged.len());
        for (x, w) in merged {
            labels.extend(x);
            probs.push(w / total);
        }
        Ok(JointDistribution { n, k, labels, probs })
    }

    pub fn point_mass(k: usize, x: &[usize]) -> Result<Self> {
        Self::from_weights(x.len(), k, [(x.to_vec(), 1.0)])
    }

    /// Independent product of per-vertex distributions, enumerated densely.
    pub fn product(k: usize, marginals: &[Vec<f64>]) -> Result<Self> {
        let n = marginals.len();
        checked_pow(k, n)?;
        let mut entries = Vec::new();
        let mut x = vec![0; n];
        loop {
            let w: f64 = x.iter().enumerate().map(|(i, &a)| marginals[i][a]).product();
            if w > 0.0 {
                entries.push((x.clone(), w));
            }
            if !super::table::advance(&mut x, k) {
                break;
            }
        }
        Self::from_weights(n, k, entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn support_len(&self) -> usize {
        self.probs.len()
    }

    pub fn point(&self, s: usize) -> &[u8] {
        &self.labels[s * self.n..(s + 1) * self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], f64)> + '_ {
        self.labels.chunks(self.n.max(1)).zip(self.probs.iter().copied())
    }

    /// Marginal on sorted distinct `vars`.
    pub fn marginal(&self, vars: &[usize]) -> Result<Table> {
        if vars.iter().any(|&v| v >= self.n) {
            return input(format!("{vars:?} out of range for n={}", self.n));
        }
        let k = self.k;
        let mut out = vec![0.0; checked_pow(k, vars.len())?];
        for (x, p) in self.iter() {
            let idx = vars.iter().fold(0, |acc, &v| acc * k + x[v] as usize);
            out[idx] += p;
        }
        Table::new(vars.to_vec(), k, out)
    }

    /// All singleton marginals in one pass.
    pub fn singletons(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.k]; self.n];
        for (x, p) in self.iter() {
            for (i, &a) in x.iter().enumerate() {
                out[i][a as usize] += p;
            }
        }
        out
    }

    /// Groups the support by the labels on `vars`; returns each seed
    /// assignment with its mass and the conditioned distribution.
    pub fn partition(&self, vars: &[usize]) -> Vec<(Vec<usize>, f64, JointDistribution)> {
        let mut groups: BTreeMap<Vec<u8>, (f64, Vec<usize>)> = BTreeMap::new();
        for (s, (x, p)) in self.iter().enumerate() {
            let key: Vec<u8> = vars.iter().map(|&v| x[v]).collect();
            let g = groups.entry(key).or_insert((0.0, Vec::new()));
            g.0 += p;
            g.1.push(s);
        }
        groups
            .into_iter()
            .map(|(key, (mass, members))| {
                let mut labels = Vec::with_capacity(members.len() * self.n);
                let mut probs = Vec::with_capacity(members.len());
                for s in members {
                    labels.extend_from_slice(self.point(s));
                    probs.push(self.probs[s] / mass);
                }
                let d = JointDistribution {
                    n: self.n,
                    k: self.k,
                    labels,
                    probs,
                };
                (key.into_iter().map(usize::from).collect(), mass, d)
            })
            .collect()
    }

    /// Distribution conditioned on `X_vars = values`, with the event's mass.
    pub fn condition(&self, vars: &[usize], values: &[usize]) -> Option<(JointDistribution, f64)> {
        let mut labels = Vec::new();
        let mut probs = Vec::new();
        for (x, p) in self.iter() {
            if vars.iter().zip(values).all(|(&v, &a)| x[v] as usize == a) {
                labels.extend_from_slice(x);
                probs.push(p);
            }
        }
        let mass: f64 = probs.iter().sum();
        if mass <= 0.0 {
            return None;
        }
        probs.iter_mut().for_each(|p| *p /= mass);
        Some((
            JointDistribution {
                n: self.n,
                k: self.k,
                labels,
                probs,
            },
            mass,
        ))
    }

    pub fn expected_value(&self, inst: &Csp2Instance) -> f64 {
        let mut x = vec![0usize; self.n];
        self.iter()
            .map(|(pt, p)| {
                for (slot, &a) in x.iter_mut().zip(pt) {
                    *slot = a as usize;
                }
                p * inst.value_of(&x)
            })
            .sum()
    }

    /// Probability of a full assignment.
    pub fn prob_of(&self, x: &[usize]) -> f64 {
        self.iter()
            .filter(|(pt, _)| pt.iter().zip(x).all(|(&a, &b)| a as usize == b))
            .map(|(_, p)| p)
            .sum()
    }

    /// `Σ_x |p(x) − q(x)|` over the union of supports.
    pub fn l1_distance(&self, other: &JointDistribution) -> f64 {
        let mut m: BTreeMap<&[u8], f64> = BTreeMap::new();
        for (x, p) in self.iter() {
            *m.entry(x).or_insert(0.0) += p;
        }
        for (x, p) in other.iter() {
            *m.entry(x).or_insert(0.0) -= p;
        }
        m.values().map(|v| v.abs()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_and_condition_agree() {
        let d = JointDistribution::from_weights(3, 2, [(vec![0, 0, 1], 1.0), (vec![1, 1, 0], 1.0), (vec![0, 1, 1], 2.0)])
            .unwrap();
        let parts = d.partition(&[0]);
        assert_eq!(parts.len(), 2);
        let (vals, mass, cond) = &parts[0];
        assert_eq!(vals, &vec![0]);
        assert!((mass - 0.75).abs() < 1e-15);
        let (c2, m2) = d.condition(&[0], &[0]).unwrap();
        assert_eq!(&c2, cond);
        assert_eq!(m2, *mass);
        assert!(d.condition(&[2], &[1]).is_some());
        assert!(JointDistribution::from_weights(1, 2, [(vec![1], 1.0)]).unwrap().condition(&[0], &[0]).is_none());
    }

    #[test]
    fn marginal_and_singletons() {
        let d = JointDistribution::product(3, &[vec![0.2, 0.3, 0.5], vec![1.0, 0.0, 0.0]]).unwrap();
        let m = d.marginal(&[0]).unwrap();
        assert!((m.probs()[2] - 0.5).abs() < 1e-15);
        assert_eq!(d.singletons()[1], vec![1.0, 0.0, 0.0]);
    }
}
