//! Propagation sampling and propagation rounding, the conditioning
//! potential, and the checks tying rounded values to the relaxation.

mod potential;
mod run;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::csp::{Assignment, Csp2Instance};
use crate::error::{input, Error, Result};
use crate::pseudodist::{
    statistical_distance, variance_k, ConditionedFamily, LocalDistributionFamily, Marginals, ZERO_MASS,
};

pub use potential::{
    potential_schedule, transport_check, PotentialLevel, PotentialSchedule, TransportCheck, EXACT_SEED_CAP,
};
pub use run::{round_family, round_instance, EdgeDiagnostic, GreedySummary, RoundingOptions, RoundingRun, Strategy};

/// Redraws of a seed assignment before its last vertex is dropped.
pub const MAX_RETRIES: usize = 100;

/// Seeds used by one sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedDraw {
    /// Seed vertices in draw order (repetition allowed).
    pub seeds: Vec<usize>,
    /// Distinct seeds, sorted, that were conditioned on.
    pub conditioned: Vec<usize>,
    /// Labels of `conditioned`.
    pub values: Vec<usize>,
    /// Seeds discarded after repeated zero-mass draws.
    pub dropped: Vec<usize>,
    pub retries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub assignment: Assignment,
    pub draw: SeedDraw,
}

fn clip_normalize(p: &mut [f64]) -> bool {
    p.iter_mut().for_each(|x| *x = x.max(0.0));
    let s: f64 = p.iter().sum();
    if s <= ZERO_MASS {
        return false;
    }
    p.iter_mut().for_each(|x| *x /= s);
    true
}

/// Marginal of each vertex given the conditioning event: a point mass on
/// seeds, the conditioned singleton elsewhere. Negative cells are clipped;
/// a vertex whose conditional has no mass falls back to its marginal.
pub fn conditional_singletons(family: &LocalDistributionFamily, cond: &ConditionedFamily<'_>) -> Result<Vec<Vec<f64>>> {
    let k = family.k();
    (0..family.n())
        .map(|i| {
            if let Some(a) = cond.seed_value(i) {
                let mut p = vec![0.0; k];
                p[a] = 1.0;
                return Ok(p);
            }
            let mut p = match cond.singleton(i) {
                Ok(p) => p,
                Err(Error::ZeroProbability(_)) => family.singleton(i)?,
                Err(e) => return Err(e),
            };
            if !clip_normalize(&mut p) {
                p = family.singleton(i)?;
                if !clip_normalize(&mut p) {
                    p = vec![1.0 / k as f64; k];
                }
            }
            Ok(p)
        })
        .collect()
}

fn check_budget(family: &LocalDistributionFamily, distinct: usize) -> Result<()> {
    let needed = if distinct < family.n() { distinct + 1 } else { distinct };
    if needed > family.max_set() {
        return Err(Error::Budget {
            needed,
            available: family.max_set(),
        });
    }
    Ok(())
}

fn distinct_sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

/// Draws `x_S ~ μ_S`, redrawing zero-mass outcomes and dropping the last
/// seed after [`MAX_RETRIES`] failures.
fn draw_seed_values<'f, R: Rng + ?Sized>(
    family: &'f LocalDistributionFamily,
    seeds: &[usize],
    rng: &mut R,
) -> Result<(ConditionedFamily<'f>, SeedDraw)> {
    let mut draw = SeedDraw {
        seeds: seeds.to_vec(),
        ..Default::default()
    };
    let mut active = distinct_sorted(seeds);
    loop {
        if active.is_empty() {
            let cond = family.condition(&[], &[])?;
            draw.conditioned = vec![];
            draw.values = vec![];
            return Ok((cond, draw));
        }
        let t = family.marginal(&active)?;
        let weights: Vec<f64> = t.probs().iter().map(|p| p.max(0.0)).collect();
        if let Ok(dist) = WeightedIndex::new(&weights) {
            for _ in 0..MAX_RETRIES {
                let idx = dist.sample(rng);
                if weights[idx] <= ZERO_MASS {
                    draw.retries += 1;
                    continue;
                }
                let values = t.labels_of(idx);
                match family.condition(&active, &values) {
                    Ok(cond) => {
                        draw.conditioned = active;
                        draw.values = values;
                        return Ok((cond, draw));
                    }
                    Err(Error::ZeroProbability(_)) => draw.retries += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        let last = *draw.seeds.iter().rev().find(|s| active.contains(s)).expect("active seed");
        active.retain(|&s| s != last);
        draw.dropped.push(last);
    }
}

fn sample_rest<R: Rng + ?Sized>(
    family: &LocalDistributionFamily,
    cond: &ConditionedFamily<'_>,
    scope: Option<&[usize]>,
    x: &mut [usize],
    rng: &mut R,
) -> Result<()> {
    let ps = conditional_singletons(family, cond)?;
    let mut assign = |i: usize| -> Result<()> {
        let dist = WeightedIndex::new(&ps[i]).map_err(|e| Error::Invariant(format!("vertex {i}: {e}")))?;
        x[i] = dist.sample(rng);
        Ok(())
    };
    match scope {
        Some(vs) => vs.iter().try_for_each(|&i| assign(i)),
        None => (0..family.n()).try_for_each(assign),
    }
}

/// Propagation rounding restricted to `scope` (all vertices when `None`),
/// writing labels into `x`.
pub(crate) fn propagate_into<R: Rng + ?Sized>(
    family: &LocalDistributionFamily,
    seeds: &[usize],
    scope: Option<&[usize]>,
    x: &mut [usize],
    rng: &mut R,
) -> Result<SeedDraw> {
    check_budget(family, distinct_sorted(seeds).len())?;
    let (cond, draw) = draw_seed_values(family, seeds, rng)?;
    sample_rest(family, &cond, scope, x, rng)?;
    Ok(draw)
}

/// One run of propagation sampling with `r` levels: `m` uniform in `1..=r`,
/// `m` seeds uniform with repetition, seed labels from `μ_S`, every other
/// vertex from its conditional marginal.
pub fn propagation_sampling<R: Rng + ?Sized>(family: &LocalDistributionFamily, r: usize, rng: &mut R) -> Result<Sample> {
    if r == 0 {
        return input("at least one level is required");
    }
    let n = family.n();
    check_budget(family, r.min(n))?;
    let m = rng.gen_range(1..=r);
    let seeds: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
    let mut x = vec![0; n];
    let draw = propagate_into(family, &seeds, None, &mut x, rng)?;
    Ok(Sample {
        assignment: Assignment(x),
        draw,
    })
}

/// Propagation rounding with an explicit seed set.
pub fn propagation_rounding<R: Rng + ?Sized>(
    family: &LocalDistributionFamily,
    seeds: &[usize],
    rng: &mut R,
) -> Result<Sample> {
    if let Some(&s) = seeds.iter().find(|&&s| s >= family.n()) {
        return input(format!("seed {s} out of range"));
    }
    let mut x = vec![0; family.n()];
    let draw = propagate_into(family, seeds, None, &mut x, rng)?;
    Ok(Sample {
        assignment: Assignment(x),
        draw,
    })
}

/// Exact expected value of propagation rounding with fixed seeds.
pub fn propagation_expected_value(
    family: &LocalDistributionFamily,
    instance: &Csp2Instance,
    seeds: &[usize],
) -> Result<f64> {
    let seeds = distinct_sorted(seeds);
    check_budget(family, seeds.len())?;
    let k = family.k();
    let mut total = 0.0;
    for cond in family.partition(&seeds)? {
        let ps = conditional_singletons(family, &cond)?;
        let v = instance.expected_value_with(|i, j| {
            let mut t = vec![0.0; k * k];
            for a in 0..k {
                for b in 0..k {
                    t[a * k + b] = ps[i][a] * ps[j][b];
                }
            }
            Ok(t)
        })?;
        total += cond.mass() * v;
    }
    Ok(total)
}

/// Exact expected value when every vertex is sampled from its own marginal.
pub fn independent_sampling_value<M: Marginals + ?Sized>(family: &M, instance: &Csp2Instance) -> Result<f64> {
    let k = family.k();
    let s = family.singletons()?;
    instance.expected_value_with(|i, j| {
        let mut t = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                t[a * k + b] = s[i][a] * s[j][b];
            }
        }
        Ok(t)
    })
}

/// Propagation rounding error on a target set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundingErrorBound {
    /// `Σ_{t∈T} E_{x_S} Var[X_t | X_S]`.
    pub bound: f64,
    /// `‖μ_T − μ'_T‖₁` with `μ'` the output law, when it could be enumerated.
    pub distance: Option<f64>,
    pub holds: Option<bool>,
}

/// Largest `k^{|T|}` table compared exactly.
const ERROR_TABLE_CAP: usize = 1 << 20;

/// Bounds the `ℓ1` error of propagation rounding on `T` by the summed
/// conditional variances of `T` given `S`.
pub fn rounding_error_bound(family: &LocalDistributionFamily, seeds: &[usize], target: &[usize]) -> Result<RoundingErrorBound> {
    let seeds = distinct_sorted(seeds);
    let target = distinct_sorted(target);
    check_budget(family, seeds.len())?;
    let k = family.k();
    let parts = family.partition(&seeds)?;
    let mut bound = 0.0;
    let mut conds = Vec::with_capacity(parts.len());
    for cond in &parts {
        let ps = conditional_singletons(family, cond)?;
        bound += cond.mass() * target.iter().map(|&t| variance_k(&ps[t])).sum::<f64>();
        conds.push((cond.mass(), ps));
    }
    let feasible = target.len() <= family.max_set() && k.checked_pow(target.len() as u32).is_some_and(|s| s <= ERROR_TABLE_CAP);
    if !feasible {
        return Ok(RoundingErrorBound {
            bound,
            distance: None,
            holds: None,
        });
    }
    let mu = if target.is_empty() {
        return Ok(RoundingErrorBound {
            bound,
            distance: Some(0.0),
            holds: Some(true),
        });
    } else {
        family.marginal(&target)?
    };
    let mut out = vec![0.0; mu.len()];
    for (mass, ps) in &conds {
        for (idx, slot) in out.iter_mut().enumerate() {
            let labels = mu.labels_of(idx);
            *slot += mass * target.iter().zip(&labels).map(|(&t, &a)| ps[t][a]).product::<f64>();
        }
    }
    let distance = statistical_distance(mu.probs(), &out)?;
    Ok(RoundingErrorBound {
        bound,
        distance: Some(distance),
        holds: Some(distance <= bound + 1e-6),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::{max_cut_instance, ConstraintGraph};
    use crate::oracle::{exhaustive_distribution, DistributionMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_mass_always_recovered() {
        let f = LocalDistributionFamily::point_mass(3, &[2, 0, 1, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let s = propagation_sampling(&f, 2, &mut rng).unwrap();
            assert_eq!(s.assignment.0, vec![2, 0, 1, 1]);
        }
    }

    #[test]
    fn empty_seed_is_independent() {
        let c5 = max_cut_instance(&ConstraintGraph::cycle(5).unwrap());
        let f = LocalDistributionFamily::from_joint(exhaustive_distribution(&c5, DistributionMode::UniformOverOptima).unwrap());
        let e = propagation_expected_value(&f, &c5, &[]).unwrap();
        let i = independent_sampling_value(&f, &c5).unwrap();
        assert!((e - i).abs() < 1e-12);
        assert!((i - 0.5).abs() < 1e-12);
    }

    #[test]
    fn error_bound_trivial_cases() {
        let c5 = max_cut_instance(&ConstraintGraph::cycle(5).unwrap());
        let f = LocalDistributionFamily::from_joint(exhaustive_distribution(&c5, DistributionMode::UniformOverOptima).unwrap());
        let b = rounding_error_bound(&f, &[0, 1], &[0, 1]).unwrap();
        assert!(b.bound.abs() < 1e-15 && b.distance.unwrap().abs() < 1e-15);
        let b = rounding_error_bound(&f, &[0], &[1, 2]).unwrap();
        assert!(b.holds.unwrap(), "{b:?}");
    }
}
