//! Exhaustive ground truth for tiny instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csp::{Assignment, Csp2Instance};
use crate::error::{Error, Result};
use crate::pseudodist::{JointDistribution, LocalDistributionFamily, Marginals};
use crate::rounding::conditional_singletons;

/// Largest `k^n` enumerated by the brute-force routines.
pub const ENUMERATION_CAP: f64 = 2e7;
/// Largest `k^n` for which output laws are held densely.
pub const LAW_CAP: f64 = 1_048_576.0;
/// Largest number of `(seed sequence, seed labels)` cases in an exact law.
pub const LAW_CASES_CAP: f64 = 2e6;

fn space_size(n: usize, k: usize, cap: f64, what: &'static str) -> Result<usize> {
    let size = (k as f64).powi(n as i32);
    if size > cap {
        return Err(Error::Cap { what, size, cap });
    }
    Ok(size as usize)
}

fn decode(mut idx: usize, n: usize, k: usize, out: &mut [usize]) {
    for slot in out[..n].iter_mut().rev() {
        *slot = idx % k;
        idx /= k;
    }
}

/// Exact optimum by enumeration in odometer order (first vertex most
/// significant). Ties go to the lexicographically smallest assignment.
pub fn brute_force_optimum(instance: &Csp2Instance) -> Result<(f64, Assignment)> {
    let (n, k) = (instance.n(), instance.k());
    let size = space_size(n, k, ENUMERATION_CAP, "assignment space")?;
    const CHUNK: usize = 1 << 14;
    let best = (0..size.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut x = vec![0; n];
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for idx in c * CHUNK..((c + 1) * CHUNK).min(size) {
                decode(idx, n, k, &mut x);
                let v = instance.value_of(&x);
                if v > best.0 {
                    best = (v, idx);
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    let mut x = vec![0; n];
    decode(best.1, n, k, &mut x);
    Ok((best.0, Assignment(x)))
}

/// Which explicit distribution to build over all assignments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DistributionMode {
    UniformOverOptima,
    /// Weight proportional to `exp(β · value(x))`.
    Boltzmann { beta: f64 },
}

/// Explicit distribution over `[k]^n` built by enumeration.
pub fn exhaustive_distribution(instance: &Csp2Instance, mode: DistributionMode) -> Result<JointDistribution> {
    let (n, k) = (instance.n(), instance.k());
    let size = space_size(n, k, LAW_CAP, "assignment space")?;
    let mut x = vec![0; n];
    let values: Vec<f64> = (0..size)
        .map(|idx| {
            decode(idx, n, k, &mut x);
            instance.value_of(&x)
        })
        .collect();
    let opt = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = match mode {
        DistributionMode::UniformOverOptima => values.iter().map(|&v| if v >= opt - 1e-12 { 1.0 } else { 0.0 }).collect(),
        DistributionMode::Boltzmann { beta } => values.iter().map(|&v| (beta * (v - opt)).exp()).collect(),
    };
    dense_to_joint(n, k, &weights)
}

pub(crate) fn dense_to_joint(n: usize, k: usize, dense: &[f64]) -> Result<JointDistribution> {
    let mut x = vec![0; n];
    let entries: Vec<(Vec<usize>, f64)> = dense
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(idx, &w)| {
            decode(idx, n, k, &mut x);
            (x.clone(), w)
        })
        .collect();
    JointDistribution::from_weights(n, k, entries)
}

/// Adds `weight · Π_i p_i` to a dense law.
fn accumulate_product(law: &mut [f64], marginals: &[Vec<f64>], weight: f64) {
    let mut cur = vec![weight];
    for p in marginals {
        let mut next = Vec::with_capacity(cur.len() * p.len());
        for &c in &cur {
            for &q in p {
                next.push(c * q);
            }
        }
        cur = next;
    }
    law.iter_mut().zip(cur).for_each(|(l, c)| *l += c);
}

/// Exact law of propagation rounding with a fixed seed multiset, as a dense
/// vector over `[k]^n`, accumulated with `weight`.
fn add_propagation_law(family: &LocalDistributionFamily, seeds: &[usize], weight: f64, law: &mut [f64]) -> Result<()> {
    for cond in family.partition(seeds)? {
        let ps = conditional_singletons(family, &cond)?;
        accumulate_product(law, &ps, weight * cond.mass());
    }
    Ok(())
}

fn check_law_budget(family: &LocalDistributionFamily, max_seeds: usize) -> Result<usize> {
    let (n, k) = (family.n(), family.k());
    let size = space_size(n, k, LAW_CAP, "output law")?;
    if max_seeds < n && max_seeds + 1 > family.max_set() {
        return Err(Error::Budget {
            needed: max_seeds + 1,
            available: family.max_set(),
        });
    }
    Ok(size)
}

/// Exact output law of propagation rounding with the given seeds.
pub fn exact_propagation_law(family: &LocalDistributionFamily, seeds: &[usize]) -> Result<JointDistribution> {
    let mut s = seeds.to_vec();
    s.sort_unstable();
    s.dedup();
    let size = check_law_budget(family, s.len())?;
    let mut law = vec![0.0; size];
    add_propagation_law(family, &s, 1.0, &mut law)?;
    dense_to_joint(family.n(), family.k(), &law)
}

/// Exact output law of propagation sampling with `r` levels: `m` uniform in
/// `1..=r`, a uniform seed sequence in `V^m`, seed labels from `μ_S`, and
/// every other vertex from its conditional marginal.
pub fn exact_rounding_distribution(family: &LocalDistributionFamily, r: usize) -> Result<JointDistribution> {
    let (n, k) = (family.n(), family.k());
    if r == 0 {
        return Err(Error::Input("at least one level is required".into()));
    }
    let size = check_law_budget(family, r.min(n))?;
    let cases: f64 = (1..=r).map(|m| (n as f64).powi(m as i32) * (k as f64).powi(m.min(n) as i32)).sum();
    if cases * size as f64 > LAW_CASES_CAP * LAW_CAP {
        return Err(Error::Cap {
            what: "rounding law cases",
            size: cases,
            cap: LAW_CASES_CAP,
        });
    }
    let mut law = vec![0.0; size];
    for m in 1..=r {
        let w = 1.0 / (r as f64 * (n as f64).powi(m as i32));
        let mut seq = vec![0usize; m];
        loop {
            add_propagation_law(family, &seq, w, &mut law)?;
            if !crate::pseudodist::advance(&mut seq, n) {
                break;
            }
        }
    }
    dense_to_joint(n, k, &law)
}

/// Exact `E[value]` under a family's pair marginals.
pub fn family_value<M: Marginals + ?Sized>(family: &M, instance: &Csp2Instance) -> Result<f64> {
    instance.expected_value_with(|i, j| family.pair(i, j))
}
