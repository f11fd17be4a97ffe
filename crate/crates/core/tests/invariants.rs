use mrfnas::arch::{Backbone, TemplateSpec};
use mrfnas::diverse::{diverse_mbest, DiverseConfig};
use mrfnas::enumerate::{brute_force_map, exact_distribution, DEFAULT_MAX_SPACE};
use mrfnas::exact::{clique_size, map_clique_tree};
use mrfnas::format::{parse_factor_graph, render_factor_graph};
use mrfnas::learn::{estimate_factors_aows, sample_chains, LossTrace};
use mrfnas::mplp::{map_mplp, MplpConfig};
use mrfnas::resource::{fit_latency, generate_profiles, mac_tables, ResourceGraph, ResourceUnit};
use mrfnas::search::{binary_search_gamma, synthetic_benchmark, SearchConfig};
use mrfnas::solver::{Solver, SolverKind};
use mrfnas::{combine_lagrangian, Assignment, FactorGraph, GraphBuilder, Parallelism};
use proptest::prelude::*;

fn graphs(max_vars: usize) -> impl Strategy<Value = FactorGraph> {
    (1..=max_vars)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(1usize..=3, n),
                proptest::collection::vec(-2.0f64..2.0, n * 3),
                proptest::collection::vec(-2.0f64..2.0, n * n * 9),
                proptest::collection::vec(any::<bool>(), n * n),
            )
        })
        .prop_map(|(sizes, u, p, mask)| {
            let n = sizes.len();
            let mut b = GraphBuilder::with_sizes(&sizes);
            for i in 0..n {
                b = b.unary(i, u[i * 3..i * 3 + sizes[i]].to_vec());
            }
            for i in 0..n {
                for j in i + 1..n {
                    if mask[i * n + j] {
                        let base = (i * n + j) * 9;
                        let rows = (0..sizes[i])
                            .map(|a| (0..sizes[j]).map(|c| p[base + a * 3 + c]).collect())
                            .collect();
                        b = b.pairwise(i, j, rows);
                    }
                }
            }
            b.build().unwrap()
        })
}

/// Two graphs on the same variables with independent edge sets.
fn graph_pairs() -> impl Strategy<Value = (FactorGraph, FactorGraph)> {
    (graphs(5), any::<u64>()).prop_map(|(a, seed)| {
        let sizes: Vec<usize> = (0..a.num_vars()).map(|v| a.num_labels(v)).collect();
        let mut b = GraphBuilder::with_sizes(&sizes);
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        for (v, &k) in sizes.iter().enumerate() {
            b = b.unary(v, (0..k).map(|_| next()).collect());
        }
        for i in 0..sizes.len() {
            for j in i + 1..sizes.len() {
                if next() < 0.4 {
                    b = b.pairwise(i, j, (0..sizes[i]).map(|_| (0..sizes[j]).map(|_| next()).collect()).collect());
                }
            }
        }
        (a, b.build().unwrap())
    })
}

fn assignments(g: &FactorGraph) -> Vec<Assignment> {
    exact_distribution(g, DEFAULT_MAX_SPACE).unwrap().iter().map(|(x, _)| x).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn clique_tree_matches_enumeration(g in graphs(7)) {
        let ct = map_clique_tree(&g).unwrap();
        let bf = brute_force_map(&g, DEFAULT_MAX_SPACE).unwrap();
        prop_assert_eq!(&ct.assignment, &bf.assignment);
        prop_assert!((ct.score - bf.score).abs() < 1e-9);
        prop_assert!(clique_size(&g) <= g.num_vars().max(1));
    }

    #[test]
    fn mplp_bounds_sandwich_the_optimum(g in graphs(7)) {
        let exact = brute_force_map(&g, DEFAULT_MAX_SPACE).unwrap().score;
        let r = map_mplp(&g, &MplpConfig::default());
        prop_assert!(r.dual >= exact - 1e-7);
        prop_assert!(r.primal <= exact + 1e-9);
        prop_assert!((g.log_energy(&r.assignment).unwrap() - r.primal).abs() < 1e-9);
        for w in r.dual_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        if g.is_forest() {
            prop_assert!(r.dual - exact <= 1e-6);
        }
    }

    #[test]
    fn diverse_rounds_are_consistent(g in graphs(5), divisor in 0.1f64..20.0) {
        let cfg = DiverseConfig { m: 4, divisor, solver: Solver::new(SolverKind::Exact) };
        let set = diverse_mbest(&g, &cfg).unwrap();
        let map = brute_force_map(&g, DEFAULT_MAX_SPACE).unwrap();
        prop_assert_eq!(&set.solutions[0].assignment, &map.assignment);
        prop_assert_eq!(set.lambdas.len(), 3);
        for (q, s) in set.solutions.iter().enumerate() {
            prop_assert!((s.score - g.log_energy(&s.assignment).unwrap()).abs() < 1e-12);
            prop_assert!(s.penalized_score <= s.score + 1e-12);
            match s.duplicate_of {
                Some(d) => {
                    prop_assert!(d < q);
                    prop_assert_eq!(&set.solutions[d].assignment, &s.assignment);
                }
                None => prop_assert!(set.solutions[..q].iter().all(|o| o.assignment != s.assignment)),
            }
        }
        // penalties only ever lower unaries, so each round's optimum is no higher
        for w in set.solutions.windows(2) {
            prop_assert!(w[1].penalized_score <= w[0].penalized_score + 1e-12);
        }
    }

    #[test]
    fn lagrangian_is_affine_in_resource((perf, res) in graph_pairs(), gamma in -5.0f64..5.0, target in -3.0f64..3.0) {
        let l = combine_lagrangian(&perf, &res, gamma, target).unwrap();
        for x in assignments(&perf) {
            let expect = perf.log_energy(&x).unwrap() + gamma * (res.log_energy(&x).unwrap() - target);
            prop_assert!((l.log_energy(&x).unwrap() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn factor_graph_text_roundtrip(g in graphs(6)) {
        let text = render_factor_graph(&g).unwrap();
        prop_assert_eq!(parse_factor_graph(&text).unwrap(), g);
    }

    #[test]
    fn chains_do_not_depend_on_scheduling(g in graphs(6), seed in any::<u64>()) {
        let seeds = [seed, seed ^ 1, seed ^ 2];
        let a = sample_chains(&g, &seeds, 5, 10, Parallelism::Sequential);
        let b = sample_chains(&g, &seeds, 5, 10, Parallelism::Parallel);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn aows_unaries_are_negative_mean_losses(
        records in proptest::collection::vec((0usize..3, 0usize..2, -5.0f64..5.0), 1..40)
    ) {
        let sk = GraphBuilder::with_sizes(&[3, 2]).build().unwrap();
        let mut trace = LossTrace::new();
        for &(a, b, l) in &records {
            trace.push(Assignment::new(vec![a, b]), l).unwrap();
        }
        let est = estimate_factors_aows(&trace, &sk).unwrap();
        for (v, k) in [(0usize, 3usize), (1, 2)] {
            for l in 0..k {
                let hits: Vec<f64> = records
                    .iter()
                    .filter(|r| if v == 0 { r.0 == l } else { r.1 == l })
                    .map(|r| r.2)
                    .collect();
                prop_assert_eq!(est.counts[v][l], hits.len());
                if hits.is_empty() {
                    prop_assert!(est.unseen.contains(&(v, l)));
                } else {
                    let mean = hits.iter().sum::<f64>() / hits.len() as f64;
                    prop_assert!((est.graph.unary(v)[l] + mean).abs() < 1e-12);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pairwise_macs_equal_direct_count(
        backbone in prop_oneof![Just(Backbone::Unet), Just(Backbone::UnetPlus), Just(Backbone::UnetPlusPlus)],
        depth in 2usize..=4,
        picks in proptest::collection::vec(any::<u16>(), 64),
    ) {
        let t = TemplateSpec { base_width: 16, resolution: 64, ..TemplateSpec::new(backbone, depth) }.build().unwrap();
        let x: Vec<usize> = (0..t.num_nodes()).map(|v| picks[v] as usize % t.choices(v).len()).collect();
        prop_assert_eq!(mac_tables(&t).unwrap().total(&x), t.decode(&x).unwrap().total_macs);
        let product: u128 = (0..t.num_nodes()).map(|v| t.choices(v).len() as u128).product();
        prop_assert_eq!(t.space_size().to_string(), product.to_string());
    }

    #[test]
    fn noiseless_latency_fit_interpolates(seed in any::<u64>()) {
        let sk = GraphBuilder::with_sizes(&[3, 2, 3, 2])
            .pairwise(0, 1, vec![vec![0.0; 2]; 3])
            .pairwise(1, 2, vec![vec![0.0; 3]; 2])
            .build()
            .unwrap();
        let hidden = mrfnas::oracle::random_pairwise(&sk, seed, 1.0, 0.5).unwrap().ground_truth().negated();
        let model = ResourceGraph::new(hidden, ResourceUnit::Ms);
        let train = generate_profiles(&model, 0.0, 200, seed ^ 7).unwrap();
        let fit = fit_latency(&sk, &train).unwrap();
        prop_assert!(fit.residual_rms < 1e-9);
        for x in assignments(&sk) {
            let d = fit.model.graph.log_energy(&x).unwrap() - model.graph.log_energy(&x).unwrap();
            prop_assert!(d.abs() < 1e-8);
        }
    }

    #[test]
    fn search_respects_target_and_budget(seed in 0u64..1000, pick in 0usize..3, m in 1usize..=5, n_iter in 1usize..=20) {
        let inst = synthetic_benchmark(seed, 5, 3, 0.5, 0.5).unwrap();
        let target = inst.ground_truth[pick].target;
        let cfg = SearchConfig { m, n_iter, solver: Solver::new(SolverKind::Exact), ..SearchConfig::new(target, ResourceUnit::Ms) };
        match binary_search_gamma(&inst.perf, &inst.res, &cfg) {
            Ok(report) => {
                prop_assert!(report.inference_count <= m * n_iter);
                for s in &report.solutions {
                    let r = inst.res.graph.log_energy(&s.assignment).unwrap();
                    prop_assert_eq!(s.feasible, r <= target);
                }
                if let Some(b) = report.best() {
                    prop_assert!(b.feasible);
                    prop_assert!(b.perf <= inst.ground_truth[pick].optimum.as_ref().unwrap().score + 1e-9);
                    prop_assert!(report.lagrangian_bound >= b.perf - 1e-9);
                    let gap = report.optimality_gap.expect("enumerable instance");
                    let opt = inst.ground_truth[pick].optimum.as_ref().unwrap().score;
                    prop_assert!((gap - (opt - b.perf)).abs() < 1e-9);
                }
            }
            // a very small budget may run out before reaching feasibility
            Err(mrfnas::Error::InvalidConfig(_)) => prop_assert!(n_iter * m < 10),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
