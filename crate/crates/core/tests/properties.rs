use lasround::csp::{max_cut_instance, unique_games_instance, ConstraintGraph, Csp2Instance};
use lasround::generate::random_regular;
use lasround::embeddings::{greedy_basis, EmbeddingSet, IndexSpace};
use lasround::oracle::brute_force_optimum;
use lasround::pseudodist::{
    binary_conditioning_identity, check_statdist_cov_identity, collision_probability,
    conditional_variance_decrement, expected_conditional_variance, variance_k, JointDistribution,
    LocalDistributionFamily, Marginals,
};
use lasround::rounding::propagation_rounding;
use lasround::spectral::{threshold_rank, SpectralProfile};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn distribution(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, k).prop_filter_map("nonzero mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| w.iter().map(|x| x / s).collect())
    })
}

/// A random joint law over `[k]^n` with full support weights.
fn joint(n: usize, k: usize) -> impl Strategy<Value = JointDistribution> {
    distribution(k.pow(n as u32)).prop_map(move |w| {
        let entries = w.into_iter().enumerate().map(|(idx, p)| {
            let mut x = vec![0; n];
            let mut r = idx;
            for v in x.iter_mut().rev() {
                *v = r % k;
                r /= k;
            }
            (x, p)
        });
        JointDistribution::from_weights(n, k, entries).unwrap()
    })
}

fn random_graph(n: usize) -> impl Strategy<Value = ConstraintGraph> {
    prop::collection::vec((0..n, 0..n, 0.1f64..2.0), 1..3 * n).prop_filter_map("needs an edge", move |es| {
        let mut m = BTreeMap::new();
        for (i, j, w) in es {
            if i != j {
                m.insert((i.min(j), i.max(j)), w);
            }
        }
        if m.is_empty() {
            return None;
        }
        ConstraintGraph::with_regularity(n, m.into_iter().map(|((i, j), w)| (i, j, w)), true).ok()
    })
}

fn ug_instance(n: usize, k: usize) -> impl Strategy<Value = Csp2Instance> {
    (random_graph(n), any::<u64>()).prop_map(move |(g, seed)| {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perms = g
            .edges()
            .iter()
            .map(|e| {
                let mut p: Vec<usize> = (0..k).collect();
                p.shuffle(&mut rng);
                ((e.i, e.j), p)
            })
            .collect();
        unique_games_instance(&g, k, &perms).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variance_is_one_minus_collision(p in (2usize..6).prop_flat_map(distribution)) {
        prop_assert!((variance_k(&p) - (1.0 - collision_probability(&p))).abs() < 1e-12);
        prop_assert!(variance_k(&p) >= -1e-15);
        prop_assert!(variance_k(&p) <= 1.0 - 1.0 / p.len() as f64 + 1e-12);
    }

    #[test]
    fn statdist_equals_covariance_sum(j in (2usize..5).prop_flat_map(|k| joint(2, k))) {
        let f = LocalDistributionFamily::from_joint(j);
        let c = check_statdist_cov_identity(&f, 0, 1).unwrap();
        prop_assert!((c.lhs - c.rhs).abs() <= 1e-9, "{} vs {}", c.lhs, c.rhs);
    }

    #[test]
    fn binary_conditioning_is_exact(w in distribution(4)) {
        let (lhs, rhs) = binary_conditioning_identity([[w[0], w[1]], [w[2], w[3]]]);
        prop_assert!((lhs - rhs).abs() <= 1e-9);
    }

    #[test]
    fn decrement_dominates_bound(j in (2usize..4).prop_flat_map(|k| joint(2, k))) {
        let f = LocalDistributionFamily::from_joint(j);
        for (a, b) in [(0, 1), (1, 0)] {
            let d = conditional_variance_decrement(&f, a, b).unwrap();
            prop_assert!(d.decrement >= d.bound - 1e-9, "{:?}", d);
        }
    }

    #[test]
    fn conditioning_is_a_martingale(j in joint(3, 2), seed in 0usize..3) {
        let f = LocalDistributionFamily::from_joint(j);
        let parts = f.partition(&[seed]).unwrap();
        let total: f64 = parts.iter().map(|p| p.mass()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for v in 0..3 {
            let mut avg = [0.0; 2];
            for p in &parts {
                let s = p.singleton(v).unwrap();
                let pair = p.pair(v, (v + 1) % 3).unwrap();
                for a in 0..2 {
                    avg[a] += p.mass() * s[a];
                    let row: f64 = pair[a * 2..a * 2 + 2].iter().sum();
                    prop_assert!((row - s[a]).abs() < 1e-9);
                }
            }
            let s = f.singleton(v).unwrap();
            prop_assert!((avg[0] - s[0]).abs() < 1e-9 && (avg[1] - s[1]).abs() < 1e-9);
            let ecv = expected_conditional_variance(&f, v, &[seed]).unwrap();
            prop_assert!(ecv <= variance_k(&s) + 1e-12);
        }
    }

    #[test]
    fn threshold_rank_is_monotone(n in 4usize..14, d in 1usize..4, seed in any::<u64>(), t1 in -1.0f64..1.0, t2 in -1.0f64..1.0) {
        prop_assume!(n * d % 2 == 0);
        let g = random_regular(n, d, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let p = SpectralProfile::of_graph(&g).unwrap();
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        prop_assert!(threshold_rank(&p, lo) >= threshold_rank(&p, hi));
        prop_assert!((p.eigenvalues[0] - 1.0).abs() < 1e-9);
        prop_assert!(p.eigenvalues.iter().all(|&l| (-1.0 - 1e-9..=1.0 + 1e-9).contains(&l)));
        prop_assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn brute_force_dominates(g in (2usize..7).prop_flat_map(random_graph), x in prop::collection::vec(0usize..2, 7)) {
        let inst = max_cut_instance(&g);
        let (opt, best) = brute_force_optimum(&inst).unwrap();
        prop_assert!((inst.value_of(best.labels()) - opt).abs() < 1e-12);
        prop_assert!(inst.value_of(&x[..g.n()]) <= opt + 1e-12);
    }

    #[test]
    fn ug_value_agrees_with_bijections(inst in ug_instance(5, 3), x in prop::collection::vec(0usize..3, 5)) {
        let v = inst.value_of(&x);
        prop_assert!((inst.value_via_bijections(&x).unwrap() - v).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn instance_json_round_trips(inst in ug_instance(4, 3)) {
        let back = Csp2Instance::from_json(&inst.to_json().unwrap()).unwrap();
        for x in [[0, 1, 2, 0], [2, 2, 1, 0]] {
            prop_assert_eq!(back.value_of(&x), inst.value_of(&x));
        }
    }

    #[test]
    fn propagation_output_is_bounded(j in joint(4, 2), seeds in prop::collection::vec(0usize..4, 0..3), rs in any::<u64>()) {
        let g = ConstraintGraph::cycle(4).unwrap();
        let inst = max_cut_instance(&g);
        let (opt, _) = brute_force_optimum(&inst).unwrap();
        let f = LocalDistributionFamily::from_joint(j);
        let mut rng = ChaCha8Rng::seed_from_u64(rs);
        let s = propagation_rounding(&f, &seeds, &mut rng).unwrap();
        prop_assert!(s.assignment.labels().iter().all(|&a| a < 2));
        prop_assert!(inst.value_of(s.assignment.labels()) <= opt + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn greedy_meets_budget(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 4..30), eps in 0.05f64..0.5) {
        let n = rows.len();
        let mut m = DMatrix::from_fn(n, 6, |i, j| rows[i][j]);
        for mut r in m.row_iter_mut() {
            let norm = r.norm();
            if norm > 1e-9 {
                r /= norm;
            }
        }
        let v = EmbeddingSet::explicit(IndexSpace::Vertex { n }, m);
        let sel = greedy_basis(&v, eps).unwrap();
        prop_assert!(sel.selected.len() <= (1.0 / eps).ceil() as usize);
        prop_assert!(sel.all_steps_ok());
        prop_assert!(sel.met_target() || sel.selected.len() == sel.budget);
    }
}
