//! Seeded instance generators.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csp::{max_cut_instance, unique_games_instance, ConstraintGraph, Csp2Instance};
use crate::error::{input, Result};

/// Attempts of the configuration model before giving up.
const REGULAR_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphSpec {
    RandomRegular { n: usize, d: usize },
    Cycle { n: usize },
    Complete { n: usize },
    /// Noisy hypercube on `{0,1}^dim`: vertices at Hamming distance `h ≥ 1`
    /// are joined with weight `noise^h (1 − noise)^(dim − h)`.
    Hypercube { dim: usize, noise: f64 },
    DisjointCopies { base: Box<GraphSpec>, t: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    MaxCut,
    /// Hidden labeling with consistent bijections; a `noise` fraction of the
    /// edges (rounded to the nearest count) gets a fresh random bijection.
    PlantedUg { k: usize, noise: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub graph: GraphSpec,
    pub problem: ProblemSpec,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub instance: Csp2Instance,
    /// The hidden labeling of planted instances.
    pub planted: Option<Vec<usize>>,
}

pub fn generate(spec: &GenSpec) -> Result<Generated> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let graph = build_graph(&spec.graph, &mut rng)?;
    match spec.problem {
        ProblemSpec::MaxCut => Ok(Generated {
            instance: max_cut_instance(&graph),
            planted: None,
        }),
        ProblemSpec::PlantedUg { k, noise } => {
            let (instance, labels) = planted_ug(&graph, k, noise, &mut rng)?;
            Ok(Generated {
                instance,
                planted: Some(labels),
            })
        }
    }
}

pub fn build_graph<R: Rng + ?Sized>(spec: &GraphSpec, rng: &mut R) -> Result<ConstraintGraph> {
    match spec {
        GraphSpec::RandomRegular { n, d } => random_regular(*n, *d, rng),
        GraphSpec::Cycle { n } => ConstraintGraph::cycle(*n),
        GraphSpec::Complete { n } => ConstraintGraph::complete(*n),
        GraphSpec::Hypercube { dim, noise } => hypercube(*dim, *noise),
        GraphSpec::DisjointCopies { base, t } => build_graph(base, rng)?.disjoint_copies(*t),
    }
}

/// Uniform simple `d`-regular graph by the configuration model, rejecting
/// pairings with self-loops or repeated edges.
pub fn random_regular<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<ConstraintGraph> {
    if d == 0 || d >= n {
        return input(format!("degree {d} is not in 1..{n}"));
    }
    if (n * d) % 2 == 1 {
        return input(format!("n·d = {} is odd", n * d));
    }
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    'attempt: for _ in 0..REGULAR_ATTEMPTS {
        stubs.shuffle(rng);
        let mut seen = BTreeSet::new();
        for pair in stubs.chunks(2) {
            let (i, j) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if i == j || !seen.insert((i, j)) {
                continue 'attempt;
            }
        }
        return ConstraintGraph::new(n, seen.into_iter().map(|(i, j)| (i, j, 1.0)));
    }
    input(format!("no simple {d}-regular graph on {n} vertices found"))
}

pub fn hypercube(dim: usize, noise: f64) -> Result<ConstraintGraph> {
    if dim == 0 || dim > 12 {
        return input("hypercube dimension must be in 1..=12");
    }
    if !(noise > 0.0 && noise <= 0.5) {
        return input("hypercube noise must be in (0, 1/2]");
    }
    let n = 1usize << dim;
    let mut edges = Vec::new();
    for x in 0..n {
        for y in x + 1..n {
            let h = (x ^ y).count_ones() as i32;
            edges.push((x, y, noise.powi(h) * (1.0 - noise).powi(dim as i32 - h)));
        }
    }
    ConstraintGraph::new(n, edges)
}

fn random_permutation<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..k).collect();
    p.shuffle(rng);
    p
}

/// Planted unique-games instance on `graph`; returns the hidden labeling.
pub fn planted_ug<R: Rng + ?Sized>(
    graph: &ConstraintGraph,
    k: usize,
    noise: f64,
    rng: &mut R,
) -> Result<(Csp2Instance, Vec<usize>)> {
    if k < 2 {
        return input("alphabet must have at least two labels");
    }
    if !(0.0..=1.0).contains(&noise) {
        return input("noise must be in [0, 1]");
    }
    let n = graph.n();
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let edges = graph.edges();
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.shuffle(rng);
    let noisy: BTreeSet<usize> = order[..((noise * edges.len() as f64).round() as usize)].iter().copied().collect();
    let mut perms = BTreeMap::new();
    for (t, e) in edges.iter().enumerate() {
        let mut pi = random_permutation(k, rng);
        if !noisy.contains(&t) {
            let at = pi.iter().position(|&b| b == labels[e.j]).expect("permutation");
            pi.swap(labels[e.i], at);
        }
        perms.insert((e.i, e.j), pi);
    }
    Ok((unique_games_instance(graph, k, &perms)?, labels))
}
