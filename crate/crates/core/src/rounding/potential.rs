use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{conditional_singletons, distinct_sorted};
use crate::csp::Csp2Instance;
use crate::error::{input, Error, Result};
use crate::oracle::{exact_rounding_distribution, family_value};
use crate::pseudodist::{advance, statistical_distance, variance_k, LocalDistributionFamily, Marginals};
use crate::spectral::{threshold_rank, SpectralProfile, MAX_DENSE_N};

/// Largest `Σ_{m≤r} n^m` for which seed sequences are enumerated exactly.
pub const EXACT_SEED_CAP: f64 = 20_000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialLevel {
    pub m: usize,
    /// `Φ_m = E_S E_{x_S} E_i Var[X_i | x_S]`.
    pub phi: f64,
    /// `ε_m = E_S E_{x_S} E_{ij~G} ‖{X_i X_j | x_S} − {X_i | x_S}{X_j | x_S}‖₁`.
    pub eps: f64,
    pub phi_stderr: f64,
    pub eps_stderr: f64,
    /// `Φ_m − Φ_{m+1}`.
    pub measured_decrement: Option<f64>,
    /// `ε_m² / (k · rank_{≥(ε_m/k)²})`, without the unspecified constant.
    pub nominal_decrement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSchedule {
    pub levels: Vec<PotentialLevel>,
    pub exact: bool,
    pub samples: usize,
    /// `Φ` never rises by more than the allowed slack between levels.
    pub monotone: bool,
    pub max_increase: f64,
}

impl PotentialSchedule {
    /// First level whose `ε_m` is at most `threshold`.
    pub fn first_level_below(&self, threshold: f64) -> Option<usize> {
        self.levels.iter().find(|l| l.eps <= threshold).map(|l| l.m)
    }
}

/// `(Φ, ε)` after conditioning on a fixed seed set, averaged over `x_S`.
fn set_stats(family: &LocalDistributionFamily, instance: &Csp2Instance, seeds: &[usize]) -> Result<(f64, f64)> {
    let n = family.n();
    let graph = instance.graph();
    let mut phi = 0.0;
    let mut eps = 0.0;
    for cond in family.partition(seeds)? {
        let ps = conditional_singletons(family, &cond)?;
        let avg_var = ps.iter().map(|p| variance_k(p)).sum::<f64>() / n as f64;
        let k = family.k();
        let mut err = None;
        let e = graph.edge_expectation(|i, j| {
            if cond.seed_value(i).is_some() || cond.seed_value(j).is_some() {
                return 0.0;
            }
            let joint = match cond.pair(i, j) {
                Ok(p) => p,
                Err(e) => {
                    err.get_or_insert(e);
                    return 0.0;
                }
            };
            let prod: Vec<f64> = (0..k * k).map(|t| ps[i][t / k] * ps[j][t % k]).collect();
            statistical_distance(&joint, &prod).unwrap_or(f64::NAN)
        });
        if let Some(e) = err {
            return Err(e);
        }
        phi += cond.mass() * avg_var;
        eps += cond.mass() * e;
    }
    Ok((phi, eps))
}

fn check_pair_budget(family: &LocalDistributionFamily, r: usize) -> Result<()> {
    let n = family.n();
    let distinct = r.min(n);
    if family.max_set() < n && distinct + 2 > family.max_set() {
        return Err(Error::Budget {
            needed: distinct + 2,
            available: family.max_set(),
        });
    }
    Ok(())
}

struct Cache<'a> {
    family: &'a LocalDistributionFamily,
    instance: &'a Csp2Instance,
    memo: HashMap<Vec<usize>, (f64, f64)>,
}

impl Cache<'_> {
    fn get(&mut self, seq: &[usize]) -> Result<(f64, f64)> {
        let key = distinct_sorted(seq);
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        let v = set_stats(self.family, self.instance, &key)?;
        self.memo.insert(key, v);
        Ok(v)
    }
}

/// Exact `(Φ_m, ε_m)` by enumerating all of `V^m`.
fn exact_level(cache: &mut Cache<'_>, n: usize, m: usize) -> Result<(f64, f64)> {
    let mut seq = vec![0usize; m];
    let w = (n as f64).powi(m as i32);
    let (mut phi, mut eps) = (0.0, 0.0);
    loop {
        let (p, e) = cache.get(&seq)?;
        phi += p;
        eps += e;
        if !advance(&mut seq, n) {
            break;
        }
    }
    Ok((phi / w, eps / w))
}

/// `Φ_m` and `ε_m` for `m = 0..=r`. Seed sequences are enumerated when there
/// are few enough, otherwise `samples` sequences of length `r` are drawn and
/// level `m` uses their length-`m` prefixes; the expectation over `x_S` is
/// always exact.
pub fn potential_schedule<R: Rng + ?Sized>(
    family: &LocalDistributionFamily,
    instance: &Csp2Instance,
    r: usize,
    samples: usize,
    rng: &mut R,
) -> Result<PotentialSchedule> {
    let n = family.n();
    if instance.n() != n || instance.k() != family.k() {
        return input("family and instance have different shapes");
    }
    check_pair_budget(family, r)?;
    let mut cache = Cache {
        family,
        instance,
        memo: HashMap::new(),
    };
    let total: f64 = (0..=r).map(|m| (n as f64).powi(m as i32)).sum();
    let exact = total <= EXACT_SEED_CAP;
    let mut raw = Vec::with_capacity(r + 1);
    if exact {
        for m in 0..=r {
            let (p, e) = exact_level(&mut cache, n, m)?;
            raw.push((p, e, 0.0, 0.0));
        }
    } else {
        if samples < 2 {
            return input("Monte Carlo estimation needs at least two samples");
        }
        let mut per_level = vec![Vec::with_capacity(samples); r + 1];
        for _ in 0..samples {
            let seq: Vec<usize> = (0..r).map(|_| rng.gen_range(0..n)).collect();
            for m in 0..=r {
                per_level[m].push(cache.get(&seq[..m])?);
            }
        }
        for obs in per_level {
            let s = obs.len() as f64;
            let mean = |f: &dyn Fn(&(f64, f64)) -> f64| obs.iter().map(f).sum::<f64>() / s;
            let mp = mean(&|o| o.0);
            let me = mean(&|o| o.1);
            let sd = |f: &dyn Fn(&(f64, f64)) -> f64, mu: f64| {
                (obs.iter().map(|o| (f(o) - mu).powi(2)).sum::<f64>() / (s - 1.0)).sqrt() / s.sqrt()
            };
            raw.push((mp, me, sd(&|o| o.0, mp), sd(&|o| o.1, me)));
        }
    }
    let profile = if instance.graph().n() <= MAX_DENSE_N {
        Some(SpectralProfile::of_graph(instance.graph())?)
    } else {
        None
    };
    let k = family.k() as f64;
    let mut levels = Vec::with_capacity(r + 1);
    let mut monotone = true;
    let mut max_increase: f64 = f64::NEG_INFINITY;
    for m in 0..=r {
        let (phi, eps, pse, ese) = raw[m];
        let measured = (m < r).then(|| phi - raw[m + 1].0);
        if let Some(d) = measured {
            let slack = 1e-9 + 3.0 * (pse * pse + raw[m + 1].2 * raw[m + 1].2).sqrt();
            max_increase = max_increase.max(-d);
            if -d > slack {
                monotone = false;
            }
        }
        let nominal = profile.as_ref().map(|p| {
            if eps <= 0.0 {
                0.0
            } else {
                let rank = threshold_rank(p, (eps / k).powi(2)).max(1);
                eps * eps / (k * rank as f64)
            }
        });
        levels.push(PotentialLevel {
            m,
            phi,
            eps,
            phi_stderr: pse,
            eps_stderr: ese,
            measured_decrement: measured,
            nominal_decrement: nominal,
        });
    }
    if let Some(l) = levels.first() {
        if l.phi > 1.0 + 1e-9 {
            monotone = false;
        }
    }
    if levels.last().is_some_and(|l| l.phi < -1e-6) {
        monotone = false;
    }
    Ok(PotentialSchedule {
        levels,
        exact,
        samples: if exact { 0 } else { samples },
        monotone,
        max_increase: max_increase.max(0.0),
    })
}

/// Transport and value-loss checks against the exact output law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportCheck {
    pub r: usize,
    /// `E_{ij~G} ‖{X_i X_j} − {X'_i X'_j}‖₁`.
    pub distance: f64,
    /// `E_{m ∈ 1..=r} ε_m`.
    pub eps_mean: f64,
    /// Expected value of the output law.
    pub law_value: f64,
    /// Value of the family's pair marginals.
    pub relaxation_value: f64,
    pub transport_ok: bool,
    pub value_ok: bool,
}

/// Compares the family's pair marginals with those of the exact output law
/// of propagation sampling with `r` levels.
pub fn transport_check(family: &LocalDistributionFamily, instance: &Csp2Instance, r: usize) -> Result<TransportCheck> {
    check_pair_budget(family, r)?;
    let law = exact_rounding_distribution(family, r)?;
    let k = family.k();
    let mut err = None;
    let distance = instance.graph().edge_expectation(|i, j| {
        let res = (|| -> Result<f64> {
            let p = family.pair(i, j)?;
            let t = law.marginal(&[i.min(j), i.max(j)])?;
            let q: Vec<f64> = (0..k * k)
                .map(|s| {
                    let (a, b) = (s / k, s % k);
                    if i < j {
                        t.prob(&[a, b])
                    } else {
                        t.prob(&[b, a])
                    }
                })
                .collect();
            statistical_distance(&p, &q)
        })();
        res.unwrap_or_else(|e| {
            err.get_or_insert(e);
            0.0
        })
    });
    if let Some(e) = err {
        return Err(e);
    }
    let mut cache = Cache {
        family,
        instance,
        memo: HashMap::new(),
    };
    let n = family.n();
    let mut eps_sum = 0.0;
    for m in 1..=r {
        eps_sum += exact_level(&mut cache, n, m)?.1;
    }
    let eps_mean = eps_sum / r as f64;
    let law_value = law.expected_value(instance);
    let relaxation_value = family_value(family, instance)?;
    Ok(TransportCheck {
        r,
        distance,
        eps_mean,
        law_value,
        relaxation_value,
        transport_ok: distance <= eps_mean + 1e-6,
        value_ok: law_value >= relaxation_value - 0.5 * distance - 1e-6,
    })
}
