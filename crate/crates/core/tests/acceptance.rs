//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p lasround --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use lasround::csp::{max_cut_instance, ConstraintGraph, Csp2Instance};
use lasround::embeddings::{
    greedy_basis, high_local_correlation_check, label_vector_system, tensor_embedding_general, tensor_embedding_ug,
    variance_bound_from_projection, vertex_vectors_u, EmbeddingSet, IndexSpace,
};
use lasround::generate::{generate, random_regular, GenSpec, GraphSpec, ProblemSpec};
use lasround::oracle::{brute_force_optimum, exhaustive_distribution, DistributionMode};
use lasround::pseudodist::{
    binary_conditioning_identity, check_statdist_cov_identity, conditional_variance_decrement, JointDistribution, Marginals,
    LocalDistributionFamily,
};
use lasround::rounding::{
    potential_schedule, round_family, rounding_error_bound, transport_check, RoundingOptions, Strategy,
};
use lasround::sdp::{
    exact_moment_matrix, extract_local_family, extract_vector_system, solve, MomentMatrix, RelaxationConfig,
    RelaxationProblem, SolveOptions, SolveReport,
};
use lasround::spectral::{locally_correlated_vectors, threshold_rank, verify_rank_witness, SpectralProfile};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

struct Solved {
    name: String,
    instance: Csp2Instance,
    config: RelaxationConfig,
    moments: MomentMatrix,
    report: SolveReport,
    family: LocalDistributionFamily,
}

fn max_cut(g: ConstraintGraph) -> Csp2Instance {
    max_cut_instance(&g)
}

fn planted(graph: GraphSpec, k: usize, noise: f64, seed: u64) -> Csp2Instance {
    generate(&GenSpec {
        graph,
        problem: ProblemSpec::PlantedUg { k, noise },
        seed,
    })
    .expect("generator")
    .instance
}

fn named_instances() -> Vec<(&'static str, Csp2Instance)> {
    vec![
        ("K2", max_cut(ConstraintGraph::complete(2).unwrap())),
        ("K3", max_cut(ConstraintGraph::complete(3).unwrap())),
        ("C4", max_cut(ConstraintGraph::cycle(4).unwrap())),
        ("C5", max_cut(ConstraintGraph::cycle(5).unwrap())),
        ("UG12", planted(GraphSpec::RandomRegular { n: 12, d: 3 }, 3, 0.0, 4)),
        ("UG8-noisy", planted(GraphSpec::RandomRegular { n: 8, d: 3 }, 3, 0.25, 5)),
    ]
}

fn fixture_configs(name: &str) -> Vec<RelaxationConfig> {
    match name {
        "K2" => vec![RelaxationConfig::lasserre(1)],
        "K3" | "C4" | "C5" => (1..=3).map(RelaxationConfig::lasserre).collect(),
        "UG12" => vec![RelaxationConfig::local(3)],
        _ => vec![RelaxationConfig::lasserre(1), RelaxationConfig::local(3)],
    }
}

fn solve_fixtures() -> Result<Vec<Solved>, String> {
    let mut out = Vec::new();
    for (name, inst) in named_instances() {
        for config in fixture_configs(name) {
            let p = RelaxationProblem::new(&inst, config).map_err(err)?;
            let (moments, report) = solve(&p, &SolveOptions::default()).map_err(err)?;
            let family = extract_local_family(&moments).map_err(err)?;
            out.push(Solved {
                name: format!("{name}/{:?}", config.hierarchy),
                instance: inst.clone(),
                config,
                moments,
                report,
                family,
            });
        }
    }
    Ok(out)
}

fn random_dist<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Random joint law over `[k]^n`, with a random sparsity pattern so that
/// some fixtures sit on the boundary of the simplex.
fn random_joint<R: Rng>(n: usize, k: usize, rng: &mut R) -> JointDistribution {
    let size = k.pow(n as u32);
    let mut w = random_dist(size, rng);
    if rng.gen_bool(0.3) {
        for x in w.iter_mut() {
            if rng.gen_bool(0.4) {
                *x = 0.0;
            }
        }
        if w.iter().all(|&x| x == 0.0) {
            w[0] = 1.0;
        }
    }
    let entries = w.into_iter().enumerate().map(|(idx, p)| {
        let mut x = vec![0; n];
        let mut r = idx;
        for v in x.iter_mut().rev() {
            *v = r % k;
            r /= k;
        }
        (x, p)
    });
    JointDistribution::from_weights(n, k, entries).expect("valid weights")
}

fn all_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
}

fn exact_family(inst: &Csp2Instance) -> LocalDistributionFamily {
    LocalDistributionFamily::from_joint(
        exhaustive_distribution(inst, DistributionMode::UniformOverOptima).expect("small instance"),
    )
}

fn criterion_1(solved: &[Solved]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.gen_range(2..=4);
        let f = LocalDistributionFamily::from_joint(random_joint(2, k, &mut rng));
        let c = check_statdist_cov_identity(&f, 0, 1).map_err(err)?;
        worst = worst.max((c.lhs - c.rhs).abs());
    }
    let mut pairs = 0;
    for s in solved {
        for i in 0..s.family.n() {
            for j in i + 1..s.family.n() {
                let c = check_statdist_cov_identity(&s.family, i, j).map_err(err)?;
                worst = worst.max((c.lhs - c.rhs).abs());
                pairs += 1;
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max gap {worst:e}"))?;
    Ok(format!("200 random tables + {pairs} solver pairs, max gap {worst:.1e}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let w = random_dist(4, &mut rng);
        let (lhs, rhs) = binary_conditioning_identity([[w[0], w[1]], [w[2], w[3]]]);
        worst = worst.max((lhs - rhs).abs());
    }
    ensure(worst <= 1e-9, || format!("max gap {worst:e}"))?;
    Ok(format!("500 tables, max gap {worst:.1e}"))
}

fn random_bijection<R: Rng>(k: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..k).collect();
    p.shuffle(rng);
    p
}

/// Decrement, general and UG sandwiches on one family; returns the number
/// of UG lower bounds checked.
fn lemma5_checks(f: &LocalDistributionFamily, ug: &[(usize, usize, Vec<usize>)], label: &str) -> Result<usize, String> {
    for (i, j) in all_pairs(f.n()) {
        let d = conditional_variance_decrement(f, i, j).map_err(err)?;
        ensure(d.pass, || format!("{label}: decrement {} < bound {} on ({i},{j})", d.decrement, d.bound))?;
    }
    let sys = label_vector_system(f).map_err(err)?;
    let g = tensor_embedding_general(&sys.covariance, f.k()).map_err(err)?;
    ensure(g.check.pass, || format!("{label}: general sandwich {:?}", g.check))?;
    let u = tensor_embedding_ug(&sys.covariance, &sys.labels, f.k(), ug).map_err(err)?;
    ensure(u.check.pass, || format!("{label}: unique-games sandwich {:?}", u.check))?;
    Ok(ug.len())
}

fn criterion_3(solved: &[Solved]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut ug_edges = 0;
    for t in 0..100 {
        let k = rng.gen_range(2..=3);
        let n = if k == 2 { rng.gen_range(2..=4) } else { rng.gen_range(2..=3) };
        let f = LocalDistributionFamily::from_joint(random_joint(n, k, &mut rng));
        let cons: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, random_bijection(k, &mut rng)))
            .collect();
        ug_edges += lemma5_checks(&f, &cons, &format!("fixture {t}"))?;
    }
    let mut outputs = 0;
    for s in solved {
        let cons: Vec<_> = s
            .instance
            .constraints()
            .iter()
            .filter_map(|c| c.pi.clone().map(|p| (c.i, c.j, p)))
            .collect();
        ug_edges += lemma5_checks(&s.family, &cons, &s.name)?;
        outputs += 1;
    }
    Ok(format!("100 fixtures + {outputs} solver outputs, {ug_edges} unique-games lower bounds"))
}

fn criterion_4() -> Outcome {
    let mut cases = Vec::new();
    for t in [2, 3, 4] {
        cases.push((format!("{t}xK3"), ConstraintGraph::complete(3).unwrap().disjoint_copies(t).unwrap(), t));
    }
    cases.push(("C20".to_string(), ConstraintGraph::cycle(20).unwrap(), 3));
    let mut lines = Vec::new();
    for (name, g, m) in cases {
        let p = SpectralProfile::of_graph(&g).map_err(err)?;
        let eps = (1.0 - p.adjacency_eigenvalue(m)).max(0.0) + 0.02;
        let v = locally_correlated_vectors(&p, m).map_err(err)?;
        let w = verify_rank_witness(&v, &g, eps, m, 2.0).map_err(err)?;
        ensure(w.stats.local >= 1.0 - eps - 1e-9, || format!("{name}: local {}", w.stats.local))?;
        ensure((w.stats.global_sq - 1.0 / m as f64).abs() <= 1e-7, || {
            format!("{name}: global {} vs 1/{m}", w.stats.global_sq)
        })?;
        ensure(w.passed() && w.eigenvalue > 1.0 - 2.0 * eps, || format!("{name}: {:?}", w.outcome))?;
        lines.push(format!("{name} m={m}"));
    }
    Ok(lines.join(", "))
}

fn criterion_5() -> Outcome {
    let mut worst_excess = f64::NEG_INFINITY;
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let mut m = DMatrix::from_fn(500, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
        for mut r in m.row_iter_mut() {
            let norm = r.norm();
            r /= norm;
        }
        let v = EmbeddingSet::explicit(IndexSpace::Vertex { n: 500 }, m);
        for eps in [0.05, 0.1, 0.25] {
            let s = greedy_basis(&v, eps).map_err(err)?;
            let budget = (1.0 / eps).ceil() as usize;
            ensure(s.selected.len() <= budget, || format!("eps {eps}: |U| = {}", s.selected.len()))?;
            ensure(s.residual_statistic <= eps + 1e-7, || {
                format!("eps {eps}: residual {}", s.residual_statistic)
            })?;
            ensure(s.all_steps_ok(), || format!("eps {eps}: a step missed its decrease"))?;
            worst_excess = worst_excess.max(s.residual_statistic - eps);
        }
    }
    Ok(format!("3 draws x 3 eps, max residual − eps {worst_excess:.3}"))
}

fn criterion_6(solved: &[Solved]) -> Outcome {
    let exact: Vec<(&str, Csp2Instance)> = vec![
        ("K3", max_cut(ConstraintGraph::complete(3).unwrap())),
        ("C5", max_cut(ConstraintGraph::cycle(5).unwrap())),
        ("UG-C6", planted(GraphSpec::Cycle { n: 6 }, 3, 0.0, 2)),
        ("2xK3", max_cut(ConstraintGraph::complete(3).unwrap().disjoint_copies(2).unwrap())),
    ];
    let (mut error_checks, mut var_checks) = (0, 0);
    for (name, inst) in &exact {
        let f = exact_family(inst);
        let n = f.n();
        let v = label_vector_system(&f).map_err(err)?.labels;
        let mut seed_sets: Vec<Vec<usize>> = vec![vec![]];
        seed_sets.extend((0..n).map(|i| vec![i]));
        seed_sets.extend((0..n).flat_map(|i| (i + 1..n).map(move |j| vec![i, j])));
        for s in &seed_sets {
            for c in inst.constraints() {
                let b = rounding_error_bound(&f, s, &[c.i, c.j]).map_err(err)?;
                ensure(b.holds == Some(true), || format!("{name}: S={s:?} T=({},{}) {b:?}", c.i, c.j))?;
                error_checks += 1;
            }
            for row in variance_bound_from_projection(&f, &v, s).map_err(err)? {
                ensure(row.holds, || format!("{name}: S={s:?} vertex {} {row:?}", row.vertex))?;
                var_checks += 1;
            }
        }
    }
    let mut eta_checks = Vec::new();
    let ug_exact = planted(GraphSpec::Cycle { n: 6 }, 3, 0.0, 2);
    let sys = label_vector_system(&exact_family(&ug_exact)).map_err(err)?;
    let mut vector_sets = vec![("UG-C6 exact".to_string(), ug_exact, sys)];
    for s in solved.iter().filter(|s| s.instance.flagged_unique_games()) {
        vector_sets.push((s.name.clone(), s.instance.clone(), extract_vector_system(&s.moments).map_err(err)?));
    }
    for (name, inst, sys) in vector_sets {
        let u = vertex_vectors_u(&sys.covariance, &sys.labels).map_err(err)?;
        let c = high_local_correlation_check(&u, &sys.labels, &inst).map_err(err)?;
        ensure(c.holds, || format!("{name}: E|U_i − U_j|² = {} > 3η = {}", c.edge_distance, 3.0 * c.eta))?;
        eta_checks.push(format!("{name} {:.3}≤{:.3}", c.edge_distance, 3.0 * c.eta));
    }
    Ok(format!(
        "{error_checks} error bounds, {var_checks} projection bounds, η: {}",
        eta_checks.join(", ")
    ))
}

fn criterion_7(solved: &[Solved]) -> Outcome {
    let mut lines = Vec::new();
    for (name, inst) in named_instances().into_iter().filter(|(n, _)| *n != "UG8-noisy") {
        let (opt, _) = brute_force_optimum(&inst).map_err(err)?;
        let runs: Vec<&Solved> = solved.iter().filter(|s| s.name.starts_with(&format!("{name}/"))).collect();
        let mut recovered = false;
        for s in &runs {
            ensure(opt <= s.report.objective + 2e-3, || {
                format!("{}: OPT {opt} above relaxation {}", s.name, s.report.objective)
            })?;
            for strategy in [Strategy::Random, Strategy::Greedy] {
                let opts = RoundingOptions {
                    strategy,
                    trials: 64,
                    ..Default::default()
                };
                let r = round_family(&inst, &s.family, &opts, 7).map_err(err)?;
                ensure(r.best_value <= opt + 1e-12, || format!("{}: rounded {} > OPT {opt}", s.name, r.best_value))?;
                recovered |= r.best_value == opt;
            }
        }
        ensure(recovered, || format!("{name}: no run recovered OPT {opt}"))?;
        lines.push(format!("{name} OPT {opt:.4}"));
    }
    Ok(lines.join(", "))
}

fn criterion_8(solved: &[Solved]) -> Outcome {
    let mut families: Vec<(String, Csp2Instance, LocalDistributionFamily)> = Vec::new();
    for (name, g) in [
        ("K3", ConstraintGraph::complete(3).unwrap()),
        ("C4", ConstraintGraph::cycle(4).unwrap()),
        ("C5", ConstraintGraph::cycle(5).unwrap()),
    ] {
        let inst = max_cut(g);
        families.push((format!("{name} exact"), inst.clone(), exact_family(&inst)));
    }
    for s in solved.iter().filter(|s| s.instance.n() <= 5 && s.instance.k() == 2) {
        families.push((s.name.clone(), s.instance.clone(), s.family.clone()));
    }
    let mut count = 0;
    let mut worst_slack = f64::INFINITY;
    for (name, inst, f) in &families {
        let n = f.n();
        for r in 1..=3 {
            if f.max_set() < n && r + 2 > f.max_set() {
                continue;
            }
            let t = transport_check(f, inst, r).map_err(err)?;
            ensure(t.transport_ok && t.value_ok, || format!("{name} r={r}: {t:?}"))?;
            worst_slack = worst_slack.min(t.eps_mean - t.distance);
            count += 1;
        }
    }
    ensure(count > 0, || "no family admitted a check".into())?;
    Ok(format!("{count} checks, min slack {worst_slack:.3e}"))
}

fn criterion_9() -> Outcome {
    let levels_for = |t: usize, seed: u64| -> Result<usize, String> {
        let g = ConstraintGraph::complete(3).unwrap().disjoint_copies(t).map_err(err)?;
        let p = SpectralProfile::of_graph(&g).map_err(err)?;
        ensure(threshold_rank(&p, 0.9) == t, || format!("rank of {t} copies"))?;
        let inst = max_cut(g);
        let f = exact_family(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = 4 * t + 4;
        let s = potential_schedule(&f, &inst, r, 400, &mut rng).map_err(err)?;
        s.first_level_below(0.1)
            .ok_or_else(|| format!("{t} copies: ε never below 0.1 within {r} levels"))
    };
    let mut table = Vec::new();
    for seed in 0..5 {
        let levels: Vec<usize> = [1, 2, 4].iter().map(|&t| levels_for(t, 900 + seed)).collect::<Result<_, _>>()?;
        ensure(levels.windows(2).all(|w| w[0] <= w[1]), || format!("seed {seed}: levels {levels:?}"))?;
        table.push(format!("{levels:?}"));
    }

    // Rank-one expanders: the first cubic graphs on 12 vertices whose
    // threshold rank at 0.9 is 1.
    let mut values = Vec::new();
    let mut graph_seed = 0u64;
    while values.len() < 5 {
        let g = random_regular(12, 3, &mut ChaCha8Rng::seed_from_u64(graph_seed)).map_err(err)?;
        graph_seed += 1;
        if threshold_rank(&SpectralProfile::of_graph(&g).map_err(err)?, 0.9) != 1 || !g.is_connected() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(graph_seed);
        let inst = {
            let (inst, _) = lasround::generate::planted_ug(&g, 3, 0.0, &mut rng).map_err(err)?;
            inst
        };
        let p = RelaxationProblem::new(&inst, RelaxationConfig::local(3)).map_err(err)?;
        let (m, _) = solve(&p, &SolveOptions::default()).map_err(err)?;
        let f = extract_local_family(&m).map_err(err)?;
        let opts = RoundingOptions {
            strategy: Strategy::Greedy,
            trials: 16,
            rounds: Some(1),
            oracle: false,
            ..Default::default()
        };
        let run = round_family(&inst, &f, &opts, values.len() as u64).map_err(err)?;
        ensure(run.best_value >= 0.9, || format!("graph seed {}: value {}", graph_seed - 1, run.best_value))?;
        values.push(run.best_value);
    }
    Ok(format!("levels for t=1,2,4 per seed: {}; planted values {values:?}", table.join(" ")))
}

fn criterion_10(solved: &[Solved]) -> Outcome {
    for s in solved.iter().filter(|s| s.report.converged) {
        ensure(s.moments.psd_violation() <= 1e-6 && s.moments.consistency_violation() <= 1e-6, || {
            format!(
                "{}: psd {:e} consistency {:e}",
                s.name,
                s.moments.psd_violation(),
                s.moments.consistency_violation()
            )
        })?;
        ensure(s.report.psd_violation <= 1e-6 && s.report.consistency_violation <= 1e-6, || {
            format!("{}: reported residuals {:?}", s.name, s.report)
        })?;
    }
    let converged = solved.iter().filter(|s| s.report.converged).count();
    ensure(converged == solved.len(), || format!("{}/{} runs converged", converged, solved.len()))?;
    for name in ["K3", "C4", "C5"] {
        let values: Vec<f64> = solved
            .iter()
            .filter(|s| s.name.starts_with(&format!("{name}/")) && s.config.sampled_sets.is_none())
            .map(|s| s.report.objective)
            .collect();
        ensure(values.windows(2).all(|w| w[1] <= w[0] + 2e-3), || format!("{name}: depth values {values:?}"))?;
    }
    let mut worst: f64 = 0.0;
    for (_, inst) in named_instances().iter().filter(|(n, _)| ["K2", "K3", "C4", "C5"].contains(n)) {
        let law = exhaustive_distribution(inst, DistributionMode::UniformOverOptima).map_err(err)?;
        for d in 1..=2 {
            let m = exact_moment_matrix(&law, d).map_err(err)?;
            worst = worst.max(m.psd_violation()).max(m.consistency_violation());
        }
    }
    ensure(worst <= 1e-10, || format!("exact fixture residual {worst:e}"))?;
    Ok(format!("{converged} converged runs, exact fixtures max residual {worst:.1e}"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let solved = match solve_fixtures() {
        Ok(s) => s,
        Err(e) => {
            println!("FAIL fixtures: {e}");
            return ExitCode::FAILURE;
        }
    };
    let solve_time = start.elapsed();
    println!("fixtures: {} relaxations solved in {:.1?}", solved.len(), solve_time);

    let criteria: Vec<(u32, &str, Duration, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "statistical distance equals covariance sum", Duration::from_secs(5), Box::new(|| criterion_1(&solved))),
        (2, "binary conditioning identity", Duration::from_secs(1), Box::new(criterion_2)),
        (3, "conditional variance bound and tensoring sandwiches", Duration::from_secs(30), Box::new(|| criterion_3(&solved))),
        (4, "local-to-global and rank witness", Duration::from_secs(5), Box::new(criterion_4)),
        (5, "greedy basis guarantee", Duration::from_secs(60), Box::new(criterion_5)),
        (6, "rounding error, projection and η bounds", Duration::from_secs(120), Box::new(|| criterion_6(&solved))),
        (7, "end-to-end sandwich and value recovery", Duration::from_secs(600), Box::new(|| criterion_7(&solved))),
        (8, "transport check by enumeration", Duration::from_secs(120), Box::new(|| criterion_8(&solved))),
        (9, "round count against threshold rank", Duration::from_secs(600), Box::new(criterion_9)),
        (10, "solver health", Duration::from_secs(300), Box::new(|| criterion_10(&solved))),
    ];
    let mut failed = 0;
    for (id, title, limit, run) in criteria {
        let t = Instant::now();
        let outcome = run();
        // Criteria built on solver output are charged the solve time too.
        let mut took = t.elapsed();
        if matches!(id, 7 | 10) {
            took += solve_time;
        }
        let outcome = outcome.and_then(|d| {
            if took <= limit {
                Ok(d)
            } else {
                Err(format!("took {took:.1?}, limit {limit:?}"))
            }
        });
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {title} ({took:.1?}): {detail}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {id:>2} {title} ({took:.1?}): {e}");
            }
        }
    }
    println!("{} of 10 criteria passed in {:.1?}", 10 - failed, start.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
