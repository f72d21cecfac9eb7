use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    conditional_singletons, distinct_sorted, independent_sampling_value, propagate_into, propagation_expected_value,
    SeedDraw,
};
use crate::artifact::SCHEMA_VERSION;
use crate::csp::{Assignment, Csp2Instance};
use crate::embeddings::seed_from_sdp_vectors;
use crate::error::{input, Error, Result};
use crate::oracle::{brute_force_optimum, family_value, ENUMERATION_CAP};
use crate::pseudodist::{statistical_distance, variance_k, LocalDistributionFamily, Marginals};
use crate::sdp::{extract_local_family, subsets_up_to, MomentMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Propagation sampling with random seeds.
    Random,
    /// Propagation rounding from greedily selected seeds.
    Greedy,
    /// Propagation rounding from the seed set with the best exact expected
    /// value among all sets up to a size cap.
    Exhaustive,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "greedy" => Ok(Strategy::Greedy),
            "exhaustive" => Ok(Strategy::Exhaustive),
            other => input(format!("unknown strategy {other:?}")),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Random => "random",
            Strategy::Greedy => "greedy",
            Strategy::Exhaustive => "exhaustive",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundingOptions {
    pub strategy: Strategy,
    pub trials: usize,
    /// Levels for random seeds; defaults to the family order (at least 1).
    pub rounds: Option<usize>,
    /// `m` in the greedy seed budget `k² m`.
    pub greedy_m: usize,
    /// Largest seed set tried by the exhaustive strategy.
    pub exhaustive_cap: usize,
    /// Vertex parts rounded independently, each with its own seeds.
    pub partition: Option<Vec<Vec<usize>>>,
    /// Compute the brute-force optimum when the assignment space is small.
    pub oracle: bool,
}

impl Default for RoundingOptions {
    fn default() -> Self {
        RoundingOptions {
            strategy: Strategy::Random,
            trials: 64,
            rounds: None,
            greedy_m: 1,
            exhaustive_cap: 2,
            partition: None,
            oracle: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDiagnostic {
    pub i: usize,
    pub j: usize,
    pub w: f64,
    /// `‖{X_i X_j} − {X_i}{X_j}‖₁`.
    pub local_distance: f64,
    /// The same distance conditioned on the best trial's seeds, averaged
    /// over seed labels; absent when the family is too small.
    pub conditioned_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedySummary {
    pub seeds: Vec<usize>,
    pub mean_variance_bound: f64,
    pub residual_statistic: f64,
    pub eps: f64,
    /// Seeds beyond the family's conditioning budget were cut.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundingRun {
    pub schema_version: u32,
    pub strategy: Strategy,
    pub trials: usize,
    pub master_seed: u64,
    pub rounds: usize,
    /// Fixed seeds of the greedy and exhaustive strategies.
    pub seed_set: Option<Vec<usize>>,
    pub greedy: Option<GreedySummary>,
    pub best_trial: usize,
    pub best_value: f64,
    pub best_assignment: Assignment,
    /// Seed draws of the best trial, one per part.
    pub best_draws: Vec<SeedDraw>,
    pub trial_values: Vec<f64>,
    /// `Φ` after conditioning on each prefix of the best trial's seeds.
    pub potential: Vec<f64>,
    /// Value of the relaxation's pair marginals.
    pub sdp_objective: f64,
    pub independent_value: f64,
    /// Exact expected value of rounding from `seed_set`.
    pub seeded_expected_value: Option<f64>,
    pub optimum: Option<f64>,
    pub optimum_assignment: Option<Assignment>,
    pub edges: Vec<EdgeDiagnostic>,
}

/// Largest number of seed sets the exhaustive strategy evaluates.
const EXHAUSTIVE_SET_CAP: usize = 100_000;

/// Extracts local distributions from `m` and rounds them.
pub fn round_instance(
    instance: &Csp2Instance,
    m: &MomentMatrix,
    opts: &RoundingOptions,
    master_seed: u64,
) -> Result<RoundingRun> {
    let family = extract_local_family(m)?;
    round_family(instance, &family, opts, master_seed)
}

fn budget(family: &LocalDistributionFamily) -> usize {
    if family.max_set() >= family.n() {
        family.n()
    } else {
        family.max_set() - 1
    }
}

fn exhaustive_seeds(family: &LocalDistributionFamily, instance: &Csp2Instance, cap: usize) -> Result<(Vec<usize>, f64)> {
    let max = cap.min(budget(family));
    let mut cands: Vec<Vec<usize>> = vec![vec![]];
    let count: f64 = (1..=max).map(|s| binom(family.n(), s)).sum();
    if count > EXHAUSTIVE_SET_CAP as f64 {
        return Err(Error::Cap {
            what: "exhaustive seed sets",
            size: count,
            cap: EXHAUSTIVE_SET_CAP as f64,
        });
    }
    cands.extend(subsets_up_to(family.n(), max));
    let values = cands
        .par_iter()
        .map(|s| propagation_expected_value(family, instance, s))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (t, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = t;
        }
    }
    Ok((cands.swap_remove(best), values[best]))
}

fn binom(n: usize, s: usize) -> f64 {
    (0..s).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

/// Average conditional variance after conditioning on `seeds`.
fn potential_of(family: &LocalDistributionFamily, seeds: &[usize]) -> Result<f64> {
    let n = family.n() as f64;
    let mut phi = 0.0;
    for cond in family.partition(seeds)? {
        let ps = conditional_singletons(family, &cond)?;
        phi += cond.mass() * ps.iter().map(|p| variance_k(p)).sum::<f64>() / n;
    }
    Ok(phi)
}

fn edge_diagnostics(family: &LocalDistributionFamily, instance: &Csp2Instance, seeds: &[usize]) -> Result<Vec<EdgeDiagnostic>> {
    let k = family.k();
    let s = family.singletons()?;
    let seeds = distinct_sorted(seeds);
    let conditioned = if family.max_set() >= family.n() || seeds.len() + 2 <= family.max_set() {
        Some(family.partition(&seeds)?)
    } else {
        None
    };
    let product = |p: &[f64], q: &[f64]| -> Vec<f64> { (0..k * k).map(|t| p[t / k] * q[t % k]).collect() };
    let mut out = Vec::with_capacity(instance.graph().edges().len());
    for e in instance.graph().edges() {
        let (i, j) = (e.i, e.j);
        let local_distance = statistical_distance(&family.pair(i, j)?, &product(&s[i], &s[j]))?;
        let conditioned_distance = match &conditioned {
            None => None,
            Some(parts) => {
                let mut d = 0.0;
                for cond in parts {
                    if cond.seed_value(i).is_some() || cond.seed_value(j).is_some() {
                        continue;
                    }
                    let pi = cond.singleton(i)?;
                    let pj = cond.singleton(j)?;
                    d += cond.mass() * statistical_distance(&cond.pair(i, j)?, &product(&pi, &pj))?;
                }
                Some(d)
            }
        };
        out.push(EdgeDiagnostic {
            i,
            j,
            w: e.w,
            local_distance,
            conditioned_distance,
        });
    }
    Ok(out)
}

/// Rounds a family `trials` times with the chosen strategy. Trial `t` draws
/// from its own stream of the master seed, so results do not depend on
/// scheduling.
pub fn round_family(
    instance: &Csp2Instance,
    family: &LocalDistributionFamily,
    opts: &RoundingOptions,
    master_seed: u64,
) -> Result<RoundingRun> {
    let (n, k) = (instance.n(), instance.k());
    if family.n() != n || family.k() != k {
        return input("family and instance have different shapes");
    }
    if opts.trials == 0 {
        return input("at least one trial is required");
    }
    let parts: Vec<Vec<usize>> = match &opts.partition {
        None => vec![(0..n).collect()],
        Some(p) => {
            let mut seen = vec![false; n];
            for &v in p.iter().flatten() {
                if v >= n || std::mem::replace(&mut seen[v], true) {
                    return input(format!("partition repeats or exceeds vertex {v}"));
                }
            }
            if seen.iter().any(|s| !s) {
                return input("partition does not cover every vertex");
            }
            p.iter().map(|part| distinct_sorted(part)).collect()
        }
    };
    let rounds = opts.rounds.unwrap_or(family.order().max(1));
    if rounds == 0 {
        return input("at least one level is required");
    }

    let mut greedy = None;
    let mut seed_set = None;
    let mut seeded_expected_value = None;
    match opts.strategy {
        Strategy::Random => {}
        Strategy::Greedy => {
            let sys = family.label_vectors()?;
            let report = seed_from_sdp_vectors(&sys.labels, opts.greedy_m.max(1))?;
            let mut seeds = report.seeds.clone();
            let cap = budget(family);
            let truncated = seeds.len() > cap;
            seeds.truncate(cap);
            greedy = Some(GreedySummary {
                seeds: seeds.clone(),
                mean_variance_bound: report.mean_variance_bound,
                residual_statistic: report.selection.residual_statistic,
                eps: report.selection.eps,
                truncated,
            });
            seeded_expected_value = Some(propagation_expected_value(family, instance, &seeds)?);
            seed_set = Some(seeds);
        }
        Strategy::Exhaustive => {
            let (seeds, v) = exhaustive_seeds(family, instance, opts.exhaustive_cap)?;
            seeded_expected_value = Some(v);
            seed_set = Some(seeds);
        }
    }

    let trial = |t: usize| -> Result<(f64, Vec<usize>, Vec<SeedDraw>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(t as u64);
        let mut x = vec![0; n];
        let mut draws = Vec::with_capacity(parts.len());
        for part in &parts {
            let seeds: Vec<usize> = match &seed_set {
                None => {
                    let m = rng.gen_range(1..=rounds);
                    (0..m).map(|_| part[rng.gen_range(0..part.len())]).collect()
                }
                Some(s) => s.iter().copied().filter(|v| part.binary_search(v).is_ok()).collect(),
            };
            draws.push(propagate_into(family, &seeds, Some(part), &mut x, &mut rng)?);
        }
        Ok((instance.value_of(&x), x, draws))
    };
    let results = (0..opts.trials).into_par_iter().map(trial).collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (t, r) in results.iter().enumerate() {
        if r.0 > results[best].0 {
            best = t;
        }
    }
    let trial_values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let (best_value, best_x, best_draws) = results.into_iter().nth(best).expect("at least one trial");

    let sequence: Vec<usize> = best_draws.iter().flat_map(|d| d.conditioned.iter().copied()).collect();
    let mut potential = vec![potential_of(family, &[])?];
    for m in 1..=sequence.len() {
        let prefix = distinct_sorted(&sequence[..m]);
        if prefix.len() > budget(family) {
            break;
        }
        potential.push(potential_of(family, &prefix)?);
    }
    let edges = edge_diagnostics(family, instance, &sequence)?;

    let (optimum, optimum_assignment) = if opts.oracle && (k as f64).powi(n as i32) <= ENUMERATION_CAP {
        let (v, x) = brute_force_optimum(instance)?;
        if best_value > v + 1e-9 {
            return Err(Error::Invariant(format!("rounded value {best_value} exceeds the optimum {v}")));
        }
        (Some(v), Some(x))
    } else {
        (None, None)
    };

    Ok(RoundingRun {
        schema_version: SCHEMA_VERSION,
        strategy: opts.strategy,
        trials: opts.trials,
        master_seed,
        rounds,
        seed_set,
        greedy,
        best_trial: best,
        best_value,
        best_assignment: Assignment(best_x),
        best_draws,
        trial_values,
        potential,
        sdp_objective: family_value(family, instance)?,
        independent_value: independent_sampling_value(family, instance)?,
        seeded_expected_value,
        optimum,
        optimum_assignment,
        edges,
    })
}
