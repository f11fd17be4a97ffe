//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use mrfnas::arch::{Backbone, Template, TemplateSpec};
use mrfnas::diverse::{diverse_mbest, DiverseConfig};
use mrfnas::enumerate::{all_scores, brute_force_map, exact_distribution, DEFAULT_MAX_SPACE};
use mrfnas::exact::{clique_size, map_clique_tree};
use mrfnas::learn::{
    estimate_factors_aows, grad_expected_loss_exact, grad_with_std_error, learn_factors, lsbs_draw,
    sample_chains, expected_loss_exact, FactorTables, GibbsChain, LearnConfig, LossTrace, LsbsConfig, Phase,
};
use mrfnas::mplp::{map_mplp, MplpConfig};
use mrfnas::oracle::{separable_oracle, ObjectiveOracle};
use mrfnas::resource::{fit_latency, generate_profiles, mac_tables, ResourceGraph, ResourceUnit};
use mrfnas::search::{binary_search_gamma, synthetic_benchmark, SearchConfig};
use mrfnas::solver::{Solver, SolverKind};
use mrfnas::{Assignment, FactorGraph, GraphBuilder, Parallelism, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Random pairwise graph. With `integral` set, factor values are drawn from
/// {-1, 0, 1} so that ties are common.
fn random_graph(rng: &mut ChaCha8Rng, n_max: usize, k_max: usize, p_max: f64, integral: bool) -> FactorGraph {
    let n = rng.random_range(1..=n_max);
    let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(1..=k_max)).collect();
    let p = rng.random_range(0.0..=p_max);
    let draw = |rng: &mut ChaCha8Rng| {
        if integral {
            rng.random_range(-1i32..=1) as f64
        } else {
            rng.random_range(-1.0..1.0)
        }
    };
    let mut b = GraphBuilder::with_sizes(&sizes);
    for (v, &k) in sizes.iter().enumerate() {
        b = b.unary(v, (0..k).map(|_| draw(rng)).collect());
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                let rows = (0..sizes[i])
                    .map(|_| (0..sizes[j]).map(|_| draw(rng)).collect())
                    .collect();
                b = b.pairwise(i, j, rows);
            }
        }
    }
    b.build().unwrap()
}

fn graph_for_seed(seed: u64) -> FactorGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_graph(&mut rng, 10, 4, 0.5, seed.is_multiple_of(4))
}

fn exact_map_equivalence() -> Result<Outcome> {
    let start = Instant::now();
    let mut bad = Vec::new();
    for seed in 0..200 {
        let g = graph_for_seed(seed);
        let ct = map_clique_tree(&g)?;
        let bf = brute_force_map(&g, DEFAULT_MAX_SPACE)?;
        if (ct.score - bf.score).abs() > 1e-9 || ct.assignment != bf.assignment {
            bad.push(seed);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        bad.is_empty() && secs < 60.0,
        format!("200 graphs, mismatches {bad:?}, {secs:.2}s"),
    ))
}

fn mplp_soundness() -> Result<Outcome> {
    let tol = 1e-7;
    let (mut violations, mut trees, mut tree_gaps, mut loopy, mut loopy_match) = (Vec::new(), 0, Vec::new(), 0, 0);
    for seed in 0..200 {
        let g = graph_for_seed(seed);
        let exact = brute_force_map(&g, DEFAULT_MAX_SPACE)?.score;
        let r = map_mplp(&g, &MplpConfig::default());
        if r.dual < exact - tol || exact < r.primal - tol {
            violations.push(seed);
        }
        if g.is_forest() {
            trees += 1;
            if r.dual - r.primal > tol {
                tree_gaps.push(seed);
            }
        } else {
            loopy += 1;
            if (r.primal - exact).abs() <= tol {
                loopy_match += 1;
            }
        }
    }
    Ok(outcome(
        violations.is_empty() && tree_gaps.is_empty(),
        format!(
            "bound violations {violations:?}; {trees} trees, nonzero gaps {tree_gaps:?}; loopy exact-match {loopy_match}/{loopy}"
        ),
    ))
}

/// Penalized graphs rebuilt from scratch: each round subtracts, at the
/// previous solution's labels, (max - min of the current unary) / L.
fn penalized_rounds(g: &FactorGraph, picks: &[Assignment], divisor: f64) -> Vec<FactorGraph> {
    let mut unary: Vec<Vec<f64>> = g.unaries().to_vec();
    let mut out = vec![g.clone()];
    for prev in &picks[..picks.len() - 1] {
        for (u, &l) in unary.iter_mut().zip(prev.labels()) {
            let hi = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = u.iter().cloned().fold(f64::INFINITY, f64::min);
            u[l] -= (hi - lo) / divisor;
        }
        out.push(g.with_unaries(unary.clone()).unwrap());
    }
    out
}

fn diverse_correctness() -> Result<Outcome> {
    let mut bad = Vec::new();
    let mut distinct = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let g = random_graph(&mut rng, 6, 3, 0.5, false);
        for divisor in [0.5, 10.0] {
            let cfg = DiverseConfig {
                m: 5,
                divisor,
                solver: Solver::new(SolverKind::Exact),
            };
            let set = diverse_mbest(&g, &cfg)?;
            let picks: Vec<Assignment> = set.solutions.iter().map(|s| s.assignment.clone()).collect();
            for (p, pg) in penalized_rounds(&g, &picks, divisor).iter().enumerate() {
                let bf = brute_force_map(pg, DEFAULT_MAX_SPACE)?;
                let s = &set.solutions[p];
                if bf.assignment != s.assignment || (bf.score - s.penalized_score).abs() > 1e-9 {
                    bad.push((seed, divisor, p));
                }
            }
            distinct += set.solutions.iter().filter(|s| s.duplicate_of.is_none()).count();
        }
        let cfg = DiverseConfig {
            m: 5,
            divisor: 1e6,
            solver: Solver::new(SolverKind::Exact),
        };
        let map = brute_force_map(&g, DEFAULT_MAX_SPACE)?;
        if diverse_mbest(&g, &cfg)?.solutions.iter().any(|s| s.assignment != map.assignment) {
            bad.push((seed, 1e6, 0));
        }
    }
    Ok(outcome(
        bad.is_empty(),
        format!("100 runs of 5 rounds, mismatches {bad:?}, distinct solutions {distinct}/500"),
    ))
}

fn space_cardinality() -> Result<Outcome> {
    let t = TemplateSpec::new(Backbone::Unet, 5).build()?;
    let size = t.space_size();
    let expected = num_bigint::BigUint::from(390_625u32) * num_bigint::BigUint::from(10u32).pow(18);
    let ratio = 4e23 / 3.90625e23;
    Ok(outcome(
        size == expected && ratio <= 1.024,
        format!("{size} configurations, ratio to 4e23 is {ratio:.4}"),
    ))
}

fn clique_sizes() -> Result<Outcome> {
    let sizes = |b: Backbone, d: usize| -> Result<usize> {
        Ok(clique_size(&TemplateSpec::new(b, d).build()?.to_factor_graph_skeleton()))
    };
    let depth5 = sizes(Backbone::Unet, 5)?;
    let mut ordered = true;
    let mut table = Vec::new();
    for d in 2..=7 {
        let a = sizes(Backbone::Unet, d)?;
        let b = sizes(Backbone::UnetPlus, d)?;
        let c = sizes(Backbone::UnetPlusPlus, d)?;
        ordered &= a <= b && b <= c;
        table.push(format!("d{d}:{a}/{b}/{c}"));
    }
    Ok(outcome(
        depth5 == 5 && ordered,
        format!(
            "depth-5 UNet clique size {depth5} (expected 5); unet/unet+/unet++ {}; ordering {}",
            table.join(" "),
            if ordered { "holds" } else { "violated" }
        ),
    ))
}

fn counts_of(g: &FactorGraph, samples: impl IntoIterator<Item = Assignment>) -> Result<Vec<u64>> {
    let d = exact_distribution(g, DEFAULT_MAX_SPACE)?;
    let mut c = vec![0u64; d.len()];
    for x in samples {
        c[d.index_of(&x)] += 1;
    }
    Ok(c)
}

fn gibbs_correctness() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut worst_lsbs: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let sizes: Vec<usize> = (0..4).map(|_| rng.random_range(2..=4)).collect();
        let mut b = GraphBuilder::with_sizes(&sizes);
        for (v, &k) in sizes.iter().enumerate() {
            b = b.unary(v, (0..k).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if rng.random_bool(0.5) {
                    let rows = (0..sizes[i])
                        .map(|_| (0..sizes[j]).map(|_| rng.random_range(-1.0..1.0)).collect())
                        .collect();
                    b = b.pairwise(i, j, rows);
                }
            }
        }
        let g = b.build()?;
        let d = exact_distribution(&g, DEFAULT_MAX_SPACE)?;

        let chain = sample_chains(&g, &[seed], 1000, 100_000, Parallelism::default()).remove(0);
        worst = worst.max(d.tv_distance(&counts_of(&g, chain)?));

        let cfg = LsbsConfig::default();
        let mut chain = GibbsChain::new(&g, seed);
        lsbs_draw(&mut chain, &g, &cfg, Phase::EpochStart);
        let mut draws = Vec::with_capacity(100_000);
        while draws.len() < 100_000 {
            draws.extend(lsbs_draw(&mut chain, &g, &cfg, Phase::Iteration));
        }
        worst_lsbs = worst_lsbs.max(d.tv_distance(&counts_of(&g, draws)?));
    }
    Ok(outcome(
        worst < 0.02 && worst_lsbs < 0.03,
        format!("worst TV {worst:.4} (< 0.02), worst LSBS TV {worst_lsbs:.4} (< 0.03)"),
    ))
}

/// Arbitrary loss given by a lookup table over the joint space.
struct TableLoss {
    sizes: Vec<usize>,
    values: Vec<f64>,
}

impl ObjectiveOracle for TableLoss {
    fn loss(&self, x: &[usize]) -> Result<f64> {
        let idx = x.iter().zip(&self.sizes).fold(0, |acc, (&l, &k)| acc * k + l);
        Ok(self.values[idx])
    }

    fn describe(&self) -> String {
        "table".into()
    }
}

fn perturbed(g: &FactorGraph, idx: usize, h: f64) -> FactorGraph {
    let mut t = FactorTables {
        unary: g.unaries().to_vec(),
        pairwise: g.pairwise_tables().to_vec(),
    };
    *t.values_mut().nth(idx).unwrap() += h;
    g.with_factors(t.unary, t.pairwise, g.constant()).unwrap()
}

fn gradient_check() -> Result<Outcome> {
    let h = 1e-4;
    let (mut worst_rel, mut worst_z, mut entries) = (0.0f64, 0.0f64, 0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let g = loop {
            let g = random_graph(&mut rng, 4, 3, 0.6, false);
            if g.num_vars() >= 2 {
                break g;
            }
        };
        let sizes: Vec<usize> = (0..g.num_vars()).map(|v| g.num_labels(v)).collect();
        let oracle = TableLoss {
            values: (0..g.space_size()).map(|_| rng.random_range(0.0..3.0)).collect(),
            sizes,
        };
        let grad = grad_expected_loss_exact(&g, &oracle, DEFAULT_MAX_SPACE)?;
        for (idx, &an) in grad.values().enumerate() {
            let up = expected_loss_exact(&perturbed(&g, idx, h), &oracle, DEFAULT_MAX_SPACE)?;
            let dn = expected_loss_exact(&perturbed(&g, idx, -h), &oracle, DEFAULT_MAX_SPACE)?;
            let fd = (up - dn) / (2.0 * h);
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
            worst_rel = worst_rel.max(rel);
            entries += 1;
        }

        let d = exact_distribution(&g, DEFAULT_MAX_SPACE)?;
        let samples: Vec<Assignment> = (0..10_000).map(|_| d.sample(&mut rng)).collect();
        let (est, se) = grad_with_std_error(&g, &oracle, &samples)?;
        for ((e, s), x) in est.values().zip(se.values()).zip(grad.values()) {
            let z = (e - x).abs() / s.max(1e-12);
            if (e - x).abs() > 1e-12 {
                worst_z = worst_z.max(z);
            }
        }
    }
    Ok(outcome(
        worst_rel < 1e-3 && worst_z <= 4.0,
        format!("{entries} entries, worst relative error {worst_rel:.2e}, worst stochastic deviation {worst_z:.2} SE"),
    ))
}

/// MAC count of one node computed from the layer shapes.
fn node_macs(t: &Template, v: usize, x: &[usize]) -> u64 {
    let node = &t.nodes()[v];
    let choice = &t.choices(v)[x[v]];
    let out = choice.channels(node.base_channels) as u64;
    let preds = t.predecessors(v);
    let inp: u64 = if preds.is_empty() {
        t.in_channels() as u64
    } else {
        preds
            .iter()
            .map(|&p| t.choices(p)[x[p]].channels(t.nodes()[p].base_channels) as u64)
            .sum()
    };
    let k = choice.kernel as u64;
    k * k * inp * out * node.mac_area()
}

fn flops_exactness() -> Result<Outcome> {
    // depth 2: every assignment
    let t2 = TemplateSpec {
        base_width: 16,
        ..TemplateSpec::new(Backbone::Unet, 2)
    }
    .build()?;
    let tables = mac_tables(&t2)?;
    let sizes: Vec<usize> = (0..t2.num_nodes()).map(|v| t2.choices(v).len()).collect();
    let mut x = vec![0usize; sizes.len()];
    let mut checked: u64 = 0;
    let mut mismatches: u64 = 0;
    loop {
        let direct: u64 = (0..x.len()).map(|v| node_macs(&t2, v, &x)).sum();
        if direct != tables.total(&x) {
            mismatches += 1;
        }
        if checked.is_multiple_of(1_000_003) && t2.decode(&x)?.total_macs != direct {
            mismatches += 1;
        }
        checked += 1;
        let mut i = x.len();
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            x[i] += 1;
            if x[i] < sizes[i] {
                break;
            }
            x[i] = 0;
        }
        if x.iter().all(|&l| l == 0) {
            break;
        }
    }

    // depth 3: each table entry belongs to exactly one node (unary entries to
    // their own node, edge entries to the consuming node), so the totals agree
    // for every assignment iff every node's share matches its direct count over
    // all joint labels of the node and its predecessors.
    let t3 = TemplateSpec {
        base_width: 16,
        ..TemplateSpec::new(Backbone::Unet, 3)
    }
    .build()?;
    let tab3 = mac_tables(&t3)?;
    let mut local_checked: u64 = 0;
    let mut local_bad: u64 = 0;
    for v in 0..t3.num_nodes() {
        let scope: Vec<usize> = t3.predecessors(v).iter().copied().chain([v]).collect();
        let radices: Vec<usize> = scope.iter().map(|&u| t3.choices(u).len()).collect();
        let total: usize = radices.iter().product();
        let mut y = vec![0usize; t3.num_nodes()];
        for mut idx in 0..total {
            for (&u, &k) in scope.iter().zip(&radices).rev() {
                y[u] = idx % k;
                idx /= k;
            }
            let share = tab3.unary[v][y[v]]
                + tab3
                    .pairwise
                    .iter()
                    .filter(|((_, s), _)| *s == v)
                    .map(|((p, _), tb)| tb[y[*p] * t3.choices(v).len() + y[v]])
                    .sum::<u64>();
            if share != node_macs(&t3, v, &y) {
                local_bad += 1;
            }
            local_checked += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut random_bad = 0;
    for _ in 0..100_000 {
        let y: Vec<usize> = (0..t3.num_nodes()).map(|v| rng.random_range(0..t3.choices(v).len())).collect();
        if tab3.total(&y) != t3.decode(&y)?.total_macs {
            random_bad += 1;
        }
    }
    Ok(outcome(
        mismatches == 0 && local_bad == 0 && random_bad == 0,
        format!(
            "depth 2: {checked} assignments, {mismatches} mismatches; depth 3: {local_checked} node-local configurations, {local_bad} mismatches, 100000 random assignments, {random_bad} mismatches"
        ),
    ))
}

fn hidden_latency(t: &Template, seed: u64) -> Result<ResourceGraph> {
    let sk = t.to_factor_graph_skeleton();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unary = (0..sk.num_vars())
        .map(|v| (0..sk.num_labels(v)).map(|_| rng.random_range(0.1..1.0)).collect())
        .collect();
    let pair = sk
        .pairwise_tables()
        .iter()
        .map(|p| mrfnas::PairTable::from_fn(p.rows(), p.cols(), |_, _| rng.random_range(0.0..0.5)))
        .collect();
    Ok(ResourceGraph::new(sk.with_factors(unary, pair, 0.0)?, ResourceUnit::Ms))
}

fn rms_against(model: &ResourceGraph, samples: &[mrfnas::resource::ProfilingSample]) -> f64 {
    let se: f64 = samples
        .iter()
        .map(|s| (model.graph.score_unchecked(&s.assignment) - s.measured).powi(2))
        .sum();
    (se / samples.len() as f64).sqrt()
}

fn latency_fitting() -> Result<Outcome> {
    let t = TemplateSpec {
        base_width: 8,
        ..TemplateSpec::new(Backbone::Unet, 2)
    }
    .build()?;
    let sk = t.to_factor_graph_skeleton();
    let hidden = hidden_latency(&t, 90)?;
    let train = generate_profiles(&hidden, 0.0, 3000, 91)?;
    let test = generate_profiles(&hidden, 0.0, 500, 92)?;
    let fit = fit_latency(&sk, &train)?;
    let held_out = rms_against(&fit.model, &test);

    let sigma = 0.05;
    let noisy = |seed: u64| -> Result<f64> {
        let hidden = hidden_latency(&t, 100 + seed)?;
        let train = generate_profiles(&hidden, sigma, 2000, 200 + seed)?;
        let test = generate_profiles(&hidden, sigma, 500, 300 + seed)?;
        Ok(rms_against(&fit_latency(&sk, &train)?.model, &test))
    };
    let rmse: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..20u64).map(|seed| scope.spawn(move || noisy(seed))).collect();
        handles.into_iter().map(|h| h.join().expect("fit thread")).collect()
    });
    let mean = rmse.into_iter().sum::<Result<f64>>()? / 20.0;
    Ok(outcome(
        fit.residual_rms <= 1e-8 && held_out <= 1e-8 && mean <= 2.0 * sigma,
        format!(
            "noiseless residual {:.2e}, held-out {held_out:.2e}, rank {}/{}; noisy held-out RMSE {mean:.4} (<= {})",
            fit.residual_rms,
            fit.rank,
            fit.parameters,
            2.0 * sigma
        ),
    ))
}

/// Lagrangian dual `min_{t >= 0} max_x perf(x) - t (res(x) - target)` by the
/// upper concave envelope of the (resource, perf) points.
fn lagrangian_dual(perf: &[f64], res: &[f64], target: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = res.iter().copied().zip(perf.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    if target < pts[0].0 {
        return None;
    }
    let peak = pts.iter().copied().fold(pts[0], |best, p| if p.1 > best.1 { p } else { best });
    if target >= peak.0 {
        return Some(peak.1);
    }
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().filter(|p| p.0 <= peak.0) {
        if hull.last().is_some_and(|h| h.0 == p.0) {
            continue;
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull.windows(2).find(|w| w[0].0 <= target && target <= w[1].0).map(|w| {
        let f = (target - w[0].0) / (w[1].0 - w[0].0);
        w[0].1 + f * (w[1].1 - w[0].1)
    })
}

fn constrained_search() -> Result<Outcome> {
    let (mut runs, mut infeasible_returned, mut over_budget, mut zero_gap, mut gap_misses) = (0, 0, 0, 0, Vec::new());
    let mut ratio_sum = 0.0;
    for seed in 0..50u64 {
        let inst = synthetic_benchmark(seed, 6, 3, 0.4, 0.5)?;
        let ps = all_scores(&inst.perf, DEFAULT_MAX_SPACE, Parallelism::default())?;
        let rs = all_scores(&inst.res.graph, DEFAULT_MAX_SPACE, Parallelism::default())?;
        for gt in inst.ground_truth.iter().filter(|g| g.percentile < 100.0) {
            runs += 1;
            let cfg = SearchConfig {
                solver: Solver::new(SolverKind::Exact),
                ..SearchConfig::new(gt.target, ResourceUnit::Ms)
            };
            let report = binary_search_gamma(&inst.perf, &inst.res, &cfg)?;
            if report.inference_count > 100 {
                over_budget += 1;
            }
            for s in &report.solutions {
                let r = inst.res.graph.log_energy(&s.assignment)?;
                if s.feasible != (r <= gt.target) {
                    infeasible_returned += 1;
                }
            }
            let opt = gt.optimum.as_ref().expect("feasible at these percentiles");
            let best = report.best().map(|b| b.perf);
            let worst = ps
                .iter()
                .zip(&rs)
                .filter(|(_, &r)| r <= gt.target)
                .map(|(&p, _)| p)
                .fold(f64::INFINITY, f64::min);
            if let Some(b) = best {
                ratio_sum += if opt.score > worst { (b - worst) / (opt.score - worst) } else { 1.0 };
            }
            let dual = lagrangian_dual(&ps, &rs, gt.target).expect("target above minimum");
            if dual - opt.score <= 1e-9 * opt.score.abs().max(1.0) {
                zero_gap += 1;
                if best.is_none_or(|b| (b - opt.score).abs() > 1e-9) {
                    gap_misses.push((seed, gt.percentile));
                }
            }
        }
    }
    Ok(outcome(
        infeasible_returned == 0 && over_budget == 0 && gap_misses.is_empty(),
        format!(
            "{runs} searches; wrong feasibility flags {infeasible_returned}; over budget {over_budget}; zero-gap {zero_gap}, optimum missed on {gap_misses:?}; mean normalized perf ratio {:.4}",
            ratio_sum / runs as f64
        ),
    ))
}

fn aows_estimator() -> Result<Outcome> {
    let sk = GraphBuilder::with_sizes(&[2, 3]).pairwise(0, 1, vec![vec![0.0; 3]; 2]).build()?;
    let mut trace = LossTrace::new();
    for (x, l) in [(vec![0, 0], 1.0), (vec![1, 2], 3.0), (vec![0, 2], 2.0), (vec![0, 1], 0.5), (vec![1, 2], 0.25)] {
        trace.push(Assignment::new(x), l)?;
    }
    let est = estimate_factors_aows(&trace, &sk)?;
    let expected = [vec![-3.5 / 3.0, -3.25 / 2.0], vec![-1.0, -0.5, -5.25 / 3.0]];
    let exact = est.graph.unaries() == expected && est.unseen.is_empty();

    let mut recovered = 0;
    let seeds = 5;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let sizes = [3usize, 4, 2, 3, 5, 3];
        let tables: Vec<Vec<f64>> = sizes.iter().map(|&k| (0..k).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let oracle = separable_oracle(tables.clone())?;
        let skel = GraphBuilder::with_sizes(&sizes).build()?;
        let mut trace = LossTrace::new();
        for _ in 0..10_000 {
            let x: Vec<usize> = sizes.iter().map(|&k| rng.random_range(0..k)).collect();
            let l = oracle.loss(&x)?;
            trace.push(Assignment::new(x), l)?;
        }
        let est = estimate_factors_aows(&trace, &skel)?;
        let ok = est.graph.unaries().iter().zip(&tables).all(|(u, t)| {
            let best = (0..u.len()).fold(0, |b, l| if u[l] > u[b] { l } else { b });
            let truth = (0..t.len()).fold(0, |b, l| if t[l] < t[b] { l } else { b });
            best == truth
        });
        recovered += ok as usize;
    }
    Ok(outcome(
        exact && recovered == seeds as usize,
        format!("constructed trace exact: {exact}; argmax recovered on {recovered}/{seeds} six-variable oracles"),
    ))
}

fn learning_end_to_end() -> Result<Outcome> {
    let sizes = [3usize, 4, 3, 4];
    let tables = vec![vec![0.8, 0.2, 0.5], vec![0.3, 0.9, 0.1, 0.6], vec![0.4, 0.7, 0.0], vec![1.0, 0.5, 0.6, 0.2]];
    let optimum = Assignment::new(vec![1, 2, 2, 3]);
    let oracle = separable_oracle(tables)?;
    let mut b = GraphBuilder::with_sizes(&sizes);
    for i in 0..3 {
        b = b.pairwise(i, i + 1, vec![vec![0.0; sizes[i + 1]]; sizes[i]]);
    }
    let skeleton = b.build()?;
    let (mut map_hits, mut set_hits) = (0, 0);
    for seed in 0..20u64 {
        let cfg = LearnConfig {
            seed,
            ..LearnConfig::default()
        };
        let learned = learn_factors(&skeleton, &oracle, &cfg)?.graph;
        if Solver::default().solve(&learned)?.best.assignment == optimum {
            map_hits += 1;
        }
        let set = diverse_mbest(&learned, &DiverseConfig::default())?;
        if set.solutions.iter().any(|s| s.assignment == optimum) {
            set_hits += 1;
        }
    }
    Ok(outcome(
        map_hits >= 18 && set_hits == 20,
        format!("MAP optimal in {map_hits}/20 seeds (>= 18), in diverse 5-best set {set_hits}/20"),
    ))
}

fn main() -> ExitCode {
    type Criterion = fn() -> Result<Outcome>;
    let criteria: [(&str, Criterion); 12] = [
        ("exact inference matches enumeration", exact_map_equivalence),
        ("MPLP bounds", mplp_soundness),
        ("diverse M-best", diverse_correctness),
        ("search-space size", space_cardinality),
        ("clique sizes", clique_sizes),
        ("Gibbs sampling", gibbs_correctness),
        ("gradient", gradient_check),
        ("pairwise FLOPs", flops_exactness),
        ("latency fit", latency_fitting),
        ("constrained search", constrained_search),
        ("AOWS estimator", aows_estimator),
        ("learning end to end", learning_end_to_end),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|a| a == &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let o = f().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        println!(
            "criterion {n:2}: {} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
