//! Resource-constrained search by bisection on the Lagrange multiplier.
//!
//! For `γ ≤ 0` the combined graph scores `S_perf(x) + γ (S_res(x) - R_T)`.
//! Its MAP is feasible for strong enough penalties; bisection looks for the
//! weakest feasible penalty. Diverse M-best inference then runs once at the
//! chosen multiplier.
//!
//! Every MAP solve counts as one inference. Probes are budgeted so that the
//! total, diverse round included, stays within `m * n_iter`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{NetConfig, Template};
use crate::diverse::{diverse_mbest_from, DiverseConfig};
use crate::enumerate::{all_scores, DEFAULT_MAX_SPACE};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::graph::{combine_lagrangian, Assignment, FactorGraph, GraphBuilder, ScoredAssignment};
use crate::learn::{learn_factors, LearnConfig};
use crate::oracle::ObjectiveOracle;
use crate::resource::{ResourceGraph, ResourceUnit};
use crate::solver::Solver;
use crate::util::decode_index;

pub const REPORT_FORMAT: &str = "mrfnas-search-report 1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Resource target `R_T`.
    pub target: f64,
    pub unit: ResourceUnit,
    pub n_iter: usize,
    pub m: usize,
    /// Diversity divisor `L`.
    pub divisor: f64,
    pub solver: Solver,
    /// Initial lower end of the multiplier bracket `[gamma_lo, 0]`.
    pub gamma_lo: f64,
    pub max_doublings: usize,
}

impl SearchConfig {
    pub fn new(target: f64, unit: ResourceUnit) -> Self {
        Self {
            target,
            unit,
            n_iter: 20,
            m: 5,
            divisor: 10.0,
            solver: Solver::default(),
            gamma_lo: -1.0,
            max_doublings: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.target.is_finite() {
            return Err(Error::InvalidConfig("target must be finite".into()));
        }
        if self.n_iter == 0 {
            return Err(Error::InvalidConfig("n_iter must be at least 1".into()));
        }
        if !self.gamma_lo.is_finite() || self.gamma_lo >= 0.0 {
            return Err(Error::InvalidConfig("gamma_lo must be negative and finite".into()));
        }
        self.diverse().validate()
    }

    pub fn diverse(&self) -> DiverseConfig {
        DiverseConfig {
            m: self.m,
            divisor: self.divisor,
            solver: self.solver,
        }
    }

    /// Maximum number of inference calls a search may make.
    pub fn inference_budget(&self) -> usize {
        self.m * self.n_iter
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    /// The unpenalized problem.
    Check,
    /// Widening the bracket until a feasible multiplier is found.
    Expand,
    Bisect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaProbe {
    pub kind: ProbeKind,
    pub gamma: f64,
    pub assignment: Assignment,
    /// Combined Lagrangian score of the MAP.
    pub map_score: f64,
    /// Solver upper bound on the combined score.
    pub upper_bound: f64,
    pub perf: f64,
    pub resource: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedSolution {
    pub assignment: Assignment,
    pub perf: f64,
    pub resource: f64,
    pub feasible: bool,
    pub duplicate_of: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub format: String,
    pub target: f64,
    pub unit: ResourceUnit,
    pub probes: Vec<GammaProbe>,
    /// Multiplier of the best-performing feasible probe.
    pub final_gamma: f64,
    /// Final bracket `(feasible end, infeasible end)`; equal ends mean the
    /// constraint was inactive.
    pub bracket: (f64, f64),
    pub solutions: Vec<ReportedSolution>,
    pub best_feasible: Option<usize>,
    /// Smallest dual value seen; bounds the constrained optimum from above.
    pub lagrangian_bound: f64,
    /// `lagrangian_bound` minus the best feasible performance.
    pub duality_gap: Option<f64>,
    /// Brute-force constrained optimum minus the best feasible performance;
    /// set when the space is small enough to enumerate.
    #[serde(default)]
    pub optimality_gap: Option<f64>,
    pub inference_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded: Option<Vec<NetConfig>>,
}

impl SearchReport {
    pub fn best(&self) -> Option<&ReportedSolution> {
        self.best_feasible.map(|i| &self.solutions[i])
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if r.format != REPORT_FORMAT {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported report format `{}`", r.format),
            });
        }
        Ok(r)
    }
}

struct Prober<'a> {
    perf: &'a FactorGraph,
    res: &'a ResourceGraph,
    config: &'a SearchConfig,
    probes: Vec<GammaProbe>,
    bests: Vec<ScoredAssignment>,
    count: usize,
}

impl Prober<'_> {
    fn probe(&mut self, kind: ProbeKind, gamma: f64) -> Result<bool> {
        let combined = combine_lagrangian(self.perf, &self.res.graph, gamma, self.config.target)?;
        let sol = self.config.solver.solve(&combined)?;
        self.count += 1;
        let x = &sol.best.assignment;
        let resource = self.res.graph.score_unchecked(x);
        let feasible = resource <= self.config.target;
        self.probes.push(GammaProbe {
            kind,
            gamma,
            assignment: x.clone(),
            map_score: sol.best.score,
            upper_bound: sol.upper_bound,
            perf: self.perf.score_unchecked(x),
            resource,
            feasible,
        });
        self.bests.push(sol.best);
        Ok(feasible)
    }
}

pub fn binary_search_gamma(
    perf: &FactorGraph,
    res: &ResourceGraph,
    config: &SearchConfig,
) -> Result<SearchReport> {
    config.validate()?;
    if res.unit != config.unit {
        return Err(Error::UnitMismatch {
            model: res.unit.to_string(),
            target: config.unit.to_string(),
        });
    }
    perf.check_same_structure(&res.graph)?;

    // the diverse round reuses the MAP of the final probe
    let probe_budget = config.inference_budget() - (config.m - 1);
    let mut p = Prober {
        perf,
        res,
        config,
        probes: Vec::new(),
        bests: Vec::new(),
        count: 0,
    };

    let bracket;
    if p.probe(ProbeKind::Check, 0.0)? {
        bracket = (0.0, 0.0);
    } else {
        let mut hi = 0.0;
        let mut lo = config.gamma_lo;
        let mut doublings = 0;
        loop {
            if p.count >= probe_budget {
                break;
            }
            if p.probe(ProbeKind::Expand, lo)? {
                break;
            }
            hi = lo;
            if doublings == config.max_doublings {
                break;
            }
            lo *= 2.0;
            doublings += 1;
        }
        if !p.probes.iter().any(|q| q.feasible) {
            let min = config.solver.solve(&res.graph.negated())?;
            let min_resource = res.graph.score_unchecked(&min.best.assignment);
            if min_resource <= config.target {
                return Err(Error::InvalidConfig(format!(
                    "inference budget of {} ran out before a feasible multiplier was found",
                    config.inference_budget()
                )));
            }
            return Err(Error::Infeasible {
                min_resource,
                target: config.target,
            });
        }
        for _ in 0..config.n_iter {
            if p.count >= probe_budget {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if p.probe(ProbeKind::Bisect, mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        bracket = (lo, hi);
    }

    // best feasible probe; earliest wins ties
    let chosen = p
        .probes
        .iter()
        .enumerate()
        .filter(|(_, q)| q.feasible)
        .fold(None::<usize>, |b, (i, q)| match b {
            Some(j) if p.probes[j].perf >= q.perf => Some(j),
            _ => Some(i),
        })
        .expect("a feasible probe exists");
    let final_gamma = p.probes[chosen].gamma;
    let combined = combine_lagrangian(perf, &res.graph, final_gamma, config.target)?;
    let set = diverse_mbest_from(&combined, &config.diverse(), Some(p.bests[chosen].clone()))?;
    let count = p.count + set.solutions.len() - 1;

    let solutions: Vec<ReportedSolution> = set
        .solutions
        .into_iter()
        .map(|s| {
            let resource = res.graph.score_unchecked(&s.assignment);
            ReportedSolution {
                perf: perf.score_unchecked(&s.assignment),
                resource,
                feasible: resource <= config.target,
                duplicate_of: s.duplicate_of,
                assignment: s.assignment,
            }
        })
        .collect();
    let best_feasible = solutions
        .iter()
        .enumerate()
        .filter(|(_, s)| s.feasible)
        .fold(None::<usize>, |b, (i, s)| match b {
            Some(j) if solutions[j].perf >= s.perf => Some(j),
            _ => Some(i),
        });
    let lagrangian_bound = p
        .probes
        .iter()
        .map(|q| q.upper_bound)
        .fold(f64::INFINITY, f64::min);
    let duality_gap = best_feasible.map(|i| lagrangian_bound - solutions[i].perf);
    let optimality_gap = match best_feasible {
        Some(i) if perf.space_size() <= config.solver.max_space => {
            constrained_optimum(perf, &res.graph, config.target, config.solver.max_space)?
                .map(|(opt, _)| opt.score - solutions[i].perf)
        }
        _ => None,
    };
    debug_assert!(count <= config.inference_budget());
    Ok(SearchReport {
        format: REPORT_FORMAT.to_string(),
        target: config.target,
        unit: config.unit,
        probes: p.probes,
        final_gamma,
        bracket,
        solutions,
        best_feasible,
        lagrangian_bound,
        duality_gap,
        optimality_gap,
        inference_count: count,
        decoded: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub percentile: f64,
    pub target: f64,
    pub optimum: Option<ScoredAssignment>,
    pub optimum_resource: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub perf: FactorGraph,
    pub res: ResourceGraph,
    pub ground_truth: Vec<GroundTruth>,
}

pub const GROUND_TRUTH_PERCENTILES: [f64; 4] = [25.0, 50.0, 75.0, 100.0];

/// Nearest-rank percentile of `values`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// Best performance among assignments with resource at most `target`;
/// lexicographically smallest on ties.
pub fn constrained_optimum(
    perf: &FactorGraph,
    res: &FactorGraph,
    target: f64,
    max_space: u128,
) -> Result<Option<(ScoredAssignment, f64)>> {
    perf.check_same_structure(res)?;
    let ps = all_scores(perf, max_space, Parallelism::default())?;
    let rs = all_scores(res, max_space, Parallelism::default())?;
    let best = (0..ps.len())
        .filter(|&i| rs[i] <= target)
        .fold(None::<usize>, |b, i| match b {
            Some(j) if ps[j] >= ps[i] => Some(j),
            _ => Some(i),
        });
    Ok(best.map(|i| {
        let radices: Vec<usize> = (0..perf.num_vars()).map(|v| perf.num_labels(v)).collect();
        let mut x = vec![0; radices.len()];
        decode_index(i as u128, &radices, &mut x);
        (
            ScoredAssignment {
                assignment: Assignment::new(x),
                score: ps[i],
            },
            rs[i],
        )
    }))
}

/// Random enumerable instance with a positive resource model.
///
/// Performance unaries are uniform on `[-1, 1)` and pairwise terms uniform on
/// `[-noise, noise)`; resource unaries are uniform on `[0.5, 2)` and pairwise
/// terms on `[0, 1)`. Each pair of variables is linked with probability
/// `edge_prob`, with the same edges in both models.
pub fn synthetic_benchmark(
    seed: u64,
    n_vars: usize,
    k: usize,
    edge_prob: f64,
    noise: f64,
) -> Result<SyntheticInstance> {
    if n_vars == 0 || k == 0 {
        return Err(Error::InvalidConfig("need at least one variable and one label".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = vec![k; n_vars];
    let mut pb = GraphBuilder::with_sizes(&sizes);
    let mut rb = GraphBuilder::with_sizes(&sizes);
    for v in 0..n_vars {
        pb = pb.unary(v, (0..k).map(|_| rng.random_range(-1.0..1.0)).collect());
        rb = rb.unary(v, (0..k).map(|_| rng.random_range(0.5..2.0)).collect());
    }
    for i in 0..n_vars {
        for j in i + 1..n_vars {
            if rng.random_bool(edge_prob.clamp(0.0, 1.0)) {
                let p = (0..k)
                    .map(|_| (0..k).map(|_| noise * rng.random_range(-1.0..1.0)).collect())
                    .collect();
                let r = (0..k)
                    .map(|_| (0..k).map(|_| rng.random_range(0.0..1.0)).collect())
                    .collect();
                pb = pb.pairwise(i, j, p);
                rb = rb.pairwise(i, j, r);
            }
        }
    }
    let perf = pb.build()?;
    let res = ResourceGraph::new(rb.build()?, ResourceUnit::Ms);
    let rs = all_scores(&res.graph, DEFAULT_MAX_SPACE, Parallelism::default())?;
    let ground_truth = GROUND_TRUTH_PERCENTILES
        .iter()
        .map(|&q| {
            let target = percentile(&rs, q);
            let opt = constrained_optimum(&perf, &res.graph, target, DEFAULT_MAX_SPACE)?;
            Ok(GroundTruth {
                percentile: q,
                target,
                optimum_resource: opt.as_ref().map(|o| o.1),
                optimum: opt.map(|o| o.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticInstance {
        perf,
        res,
        ground_truth,
    })
}

/// Where the pipeline gets its resource model.
#[derive(Debug, Clone)]
pub enum ResourceSource<'a> {
    Model(ResourceGraph),
    /// Exact MACs of the template.
    Flops(&'a Template),
    /// Latency fitted to profiling samples.
    Profiles(Vec<crate::resource::ProfilingSample>),
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub learned: FactorGraph,
    pub resource: ResourceGraph,
    pub loss_history: Vec<f64>,
    pub report: SearchReport,
}

/// Learn factors, obtain a resource model, search, and decode when a
/// template is given.
pub fn run_pipeline(
    skeleton: &FactorGraph,
    oracle: &dyn ObjectiveOracle,
    learn: &LearnConfig,
    resource: ResourceSource<'_>,
    search: &SearchConfig,
    template: Option<&Template>,
) -> Result<PipelineOutcome> {
    let learned = learn_factors(skeleton, oracle, learn)?;
    let res = match resource {
        ResourceSource::Model(m) => m,
        ResourceSource::Flops(t) => crate::resource::flops_pairwise(t)?,
        ResourceSource::Profiles(samples) => crate::resource::fit_latency(skeleton, &samples)?.model,
    };
    let mut report = binary_search_gamma(&learned.graph, &res, search)?;
    if let Some(t) = template {
        report.decoded = Some(
            report
                .solutions
                .iter()
                .map(|s| t.decode(&s.assignment))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(PipelineOutcome {
        learned: learned.graph,
        resource: res,
        loss_history: learned.loss_history,
        report,
    })
}
