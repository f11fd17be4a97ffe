//! Pairwise resource models: exact MAC counts and fitted latency.
//!
//! FLOPs are counted as multiply-accumulates (MACs), with no factor of two.
//! A conv layer `j` with kernel `k`, `c_out` outputs and `c_in` inputs spends
//! `k² · c_in · c_out · area` MACs, where `area` is the number of kernel
//! positions. Since `c_in` is the sum of the predecessors' output channels,
//! each data-flow edge `p -> j` carries the term `k_j² · c_p · c_j · area_j`,
//! a function of the labels at `p` and `j` only. Layers without predecessors
//! read the network input and get a unary term instead.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::arch::Template;
use crate::error::{Error, Result};
use crate::graph::{Assignment, FactorGraph, PairTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceUnit {
    Macs,
    Ms,
}

impl FromStr for ResourceUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "macs" | "mac" | "flops" => Ok(Self::Macs),
            "ms" | "milliseconds" => Ok(Self::Ms),
            other => Err(Error::InvalidConfig(format!("unknown resource unit `{other}`"))),
        }
    }
}

impl fmt::Display for ResourceUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Macs => "macs",
            Self::Ms => "ms",
        })
    }
}

/// A factor graph whose additive score is a resource amount.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGraph {
    pub graph: FactorGraph,
    pub unit: ResourceUnit,
}

impl ResourceGraph {
    pub fn new(graph: FactorGraph, unit: ResourceUnit) -> Self {
        Self { graph, unit }
    }

    /// All-zero model on a skeleton.
    pub fn zero(skeleton: &FactorGraph, unit: ResourceUnit) -> Self {
        Self::new(skeleton.zeroed(), unit)
    }

    pub fn resource_of(&self, assignment: &[usize]) -> Result<f64> {
        self.graph.log_energy(assignment)
    }
}

pub fn resource_of(model: &ResourceGraph, assignment: &[usize]) -> Result<f64> {
    model.resource_of(assignment)
}

/// Integer MAC tables on a template's skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacTables {
    /// Per node; all zero except for nodes that read the network input.
    pub unary: Vec<Vec<u64>>,
    /// Per data-flow edge `(pred, succ)`, row-major over (pred label, succ label).
    pub pairwise: Vec<((usize, usize), Vec<u64>)>,
    cols: Vec<usize>,
}

impl MacTables {
    pub fn total(&self, assignment: &[usize]) -> u64 {
        let unary: u64 = self
            .unary
            .iter()
            .zip(assignment)
            .map(|(u, &l)| u[l])
            .sum();
        let pair: u64 = self
            .pairwise
            .iter()
            .map(|&((p, s), ref t)| t[assignment[p] * self.cols[s] + assignment[s]])
            .sum();
        unary + pair
    }
}

pub fn mac_tables(template: &Template) -> Result<MacTables> {
    template.check_channel_metadata()?;
    let n = template.num_nodes();
    let out = |v: usize, l: usize| -> u64 {
        template.choices(v)[l].channels(template.nodes()[v].base_channels) as u64
    };
    let per_out = |v: usize, l: usize| -> u64 {
        let k = template.choices(v)[l].kernel as u64;
        k * k * out(v, l) * template.nodes()[v].mac_area()
    };
    let cols: Vec<usize> = (0..n).map(|v| template.choices(v).len()).collect();
    let unary = (0..n)
        .map(|v| {
            (0..cols[v])
                .map(|l| {
                    if template.predecessors(v).is_empty() {
                        template.in_channels() as u64 * per_out(v, l)
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    let pairwise = template
        .edges()
        .iter()
        .map(|&(p, s)| {
            let mut t = Vec::with_capacity(cols[p] * cols[s]);
            for a in 0..cols[p] {
                for b in 0..cols[s] {
                    t.push(out(p, a) * per_out(s, b));
                }
            }
            ((p, s), t)
        })
        .collect();
    Ok(MacTables {
        unary,
        pairwise,
        cols,
    })
}

/// Exact pairwise MAC model of a template.
pub fn flops_pairwise(template: &Template) -> Result<ResourceGraph> {
    let tables = mac_tables(template)?;
    let skeleton = template.to_factor_graph_skeleton();
    let unary = tables
        .unary
        .iter()
        .map(|u| Some(u.iter().map(|&v| v as f64).collect()))
        .collect();
    let mut pair = vec![PairTable::zeros(0, 0); skeleton.num_edges()];
    for ((p, s), t) in &tables.pairwise {
        let e = skeleton.edge_between(*p, *s).expect("template edge");
        pair[e] = PairTable::from_flat(
            skeleton.num_labels(*p),
            skeleton.num_labels(*s),
            t.iter().map(|&v| v as f64).collect(),
        )?;
    }
    let graph = FactorGraph::new(
        skeleton.label_sets().to_vec(),
        unary,
        skeleton.edges().to_vec(),
        pair,
        0.0,
    )?;
    Ok(ResourceGraph::new(graph, ResourceUnit::Macs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingSample {
    pub assignment: Assignment,
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyFit {
    pub model: ResourceGraph,
    pub residual_rms: f64,
    pub rank_deficient: bool,
    pub rank: usize,
    pub parameters: usize,
}

/// Least-squares fit of pairwise latency entries to measured totals.
///
/// Unary entries are left out of the design: a per-layer term is the same
/// as shifting a whole row or column of any incident pairwise table. Only
/// variables with no edges get unary columns. The returned solution has
/// minimum norm when the design is rank deficient.
pub fn fit_latency(skeleton: &FactorGraph, samples: &[ProfilingSample]) -> Result<LatencyFit> {
    if samples.is_empty() {
        return Err(Error::Empty("no profiling samples".into()));
    }
    for s in samples {
        skeleton.check_assignment(&s.assignment)?;
        if !s.measured.is_finite() {
            return Err(Error::NonFinite("profiling measurement".into()));
        }
    }
    let n = skeleton.num_vars();
    let mut offsets = Vec::with_capacity(skeleton.num_edges());
    let mut cols = 0;
    for e in 0..skeleton.num_edges() {
        offsets.push(cols);
        let t = skeleton.pairwise(e);
        cols += t.rows() * t.cols();
    }
    let isolated: Vec<(usize, usize)> = (0..n)
        .filter(|&v| skeleton.neighbors(v).is_empty())
        .map(|v| {
            let off = cols;
            cols += skeleton.num_labels(v);
            (v, off)
        })
        .collect();

    let rows = samples.len();
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let b = DVector::from_iterator(rows, samples.iter().map(|s| s.measured));
    for (r, s) in samples.iter().enumerate() {
        let x = s.assignment.labels();
        for (e, &(i, j)) in skeleton.edges().iter().enumerate() {
            let width = skeleton.pairwise(e).cols();
            a[(r, offsets[e] + x[i] * width + x[j])] = 1.0;
        }
        for &(v, off) in &isolated {
            a[(r, off + x[v])] = 1.0;
        }
    }

    // With more samples than parameters, A = QR and the minimum-norm
    // solution is R⁺ Qᵀ b; R has the same singular values as A.
    let (a, b) = if rows > cols {
        let qr = a.qr();
        let mut qtb = b;
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, cols).into_owned())
    } else {
        (a, b)
    };
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = rows.max(cols) as f64 * f64::EPSILON * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let theta = svd.solve(&b, eps).map_err(|e| Error::Internal(e.to_string()))?;

    let mut unary = vec![None; n];
    for &(v, off) in &isolated {
        unary[v] = Some(theta.as_slice()[off..off + skeleton.num_labels(v)].to_vec());
    }
    let tables = (0..skeleton.num_edges())
        .map(|e| {
            let t = skeleton.pairwise(e);
            let len = t.rows() * t.cols();
            PairTable::from_flat(t.rows(), t.cols(), theta.as_slice()[offsets[e]..offsets[e] + len].to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let graph = FactorGraph::new(
        skeleton.label_sets().to_vec(),
        unary,
        skeleton.edges().to_vec(),
        tables,
        0.0,
    )?;
    let model = ResourceGraph::new(graph, ResourceUnit::Ms);
    let sq: f64 = samples
        .iter()
        .map(|s| {
            let d = model.graph.score_unchecked(s.assignment.labels()) - s.measured;
            d * d
        })
        .sum();
    Ok(LatencyFit {
        model,
        residual_rms: (sq / rows as f64).sqrt(),
        rank_deficient: rank < cols,
        rank,
        parameters: cols,
    })
}

/// Uniformly drawn assignments measured on a hidden model plus Gaussian noise.
pub fn generate_profiles(
    hidden: &ResourceGraph,
    noise_sigma: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<ProfilingSample>> {
    if noise_sigma.is_nan() || noise_sigma < 0.0 {
        return Err(Error::InvalidConfig("noise sigma must be non-negative".into()));
    }
    let g = &hidden.graph;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok((0..count)
        .map(|_| {
            let x: Vec<usize> = (0..g.num_vars())
                .map(|v| rng.random_range(0..g.num_labels(v)))
                .collect();
            let mut measured = g.score_unchecked(&x);
            if noise_sigma > 0.0 {
                measured += noise.sample(&mut rng);
            }
            ProfilingSample {
                assignment: Assignment::new(x),
                measured,
            }
        })
        .collect())
}
