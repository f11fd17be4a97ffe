//! Score-function gradient of the expected loss.
//!
//! For a factor entry `θ` with indicator `1_θ(x)` and marginal
//! `P_θ = E[1_θ]`, the derivative of `E_P[l]` is the covariance
//! `E[l(x) (1_θ(x) - P_θ)]`.

use crate::enumerate::exact_distribution;
use crate::error::{Error, Result};
use crate::graph::{Assignment, FactorGraph, PairTable};
use crate::oracle::ObjectiveOracle;

/// Values shaped like a graph's unary and pairwise tables.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTables {
    pub unary: Vec<Vec<f64>>,
    pub pairwise: Vec<PairTable>,
}

impl FactorTables {
    pub fn zeros_like(graph: &FactorGraph) -> Self {
        Self {
            unary: (0..graph.num_vars())
                .map(|v| vec![0.0; graph.num_labels(v)])
                .collect(),
            pairwise: graph
                .pairwise_tables()
                .iter()
                .map(|t| PairTable::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    /// Adds `w` at every entry active under `x`.
    pub fn add_indicator(&mut self, graph: &FactorGraph, x: &[usize], w: f64) {
        for (u, &l) in self.unary.iter_mut().zip(x) {
            u[l] += w;
        }
        for (t, &(i, j)) in self.pairwise.iter_mut().zip(graph.edges()) {
            let v = t.get(x[i], x[j]);
            t.set(x[i], x[j], v + w);
        }
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &FactorTables) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.unary
            .iter()
            .flatten()
            .chain(self.pairwise.iter().flat_map(|t| t.data().iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.unary
            .iter_mut()
            .flatten()
            .chain(self.pairwise.iter_mut().flat_map(|t| t.data_mut().iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.values().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Empirical marginals of every factor entry.
pub fn marginals_from_samples(graph: &FactorGraph, samples: &[Assignment]) -> FactorTables {
    let mut m = FactorTables::zeros_like(graph);
    let w = 1.0 / samples.len().max(1) as f64;
    for x in samples {
        m.add_indicator(graph, x, w);
    }
    m
}

/// Exact marginals by enumeration.
pub fn exact_marginals(graph: &FactorGraph, max_space: u128) -> Result<FactorTables> {
    let d = exact_distribution(graph, max_space)?;
    let mut m = FactorTables::zeros_like(graph);
    for (x, p) in d.iter() {
        m.add_indicator(graph, &x, p);
    }
    Ok(m)
}

/// `mean_s (l_s - baseline) (1(x_s) - marginals)`.
pub fn grad_from_losses(
    graph: &FactorGraph,
    samples: &[Assignment],
    losses: &[f64],
    marginals: &FactorTables,
    baseline: f64,
) -> Result<FactorTables> {
    if samples.is_empty() {
        return Err(Error::Empty("gradient needs at least one sample".into()));
    }
    if samples.len() != losses.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples but {} losses",
            samples.len(),
            losses.len()
        )));
    }
    let n = samples.len() as f64;
    let mut g = FactorTables::zeros_like(graph);
    let mut centred_mean = 0.0;
    for (x, &l) in samples.iter().zip(losses) {
        g.add_indicator(graph, x, (l - baseline) / n);
        centred_mean += (l - baseline) / n;
    }
    g.axpy(-centred_mean, marginals);
    Ok(g)
}

fn losses_of(oracle: &dyn ObjectiveOracle, samples: &[Assignment]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|x| {
            let l = oracle.loss(x)?;
            if l.is_finite() {
                Ok(l)
            } else {
                Err(Error::Oracle(format!("non-finite loss at {x}")))
            }
        })
        .collect()
}

/// Stochastic estimate with marginals taken from the same batch.
pub fn grad_expected_loss(
    graph: &FactorGraph,
    oracle: &dyn ObjectiveOracle,
    samples: &[Assignment],
) -> Result<FactorTables> {
    if samples.is_empty() {
        return Err(Error::Empty("gradient needs at least one sample".into()));
    }
    for x in samples {
        graph.check_assignment(x)?;
    }
    let losses = losses_of(oracle, samples)?;
    let m = marginals_from_samples(graph, samples);
    grad_from_losses(graph, samples, &losses, &m, 0.0)
}

/// Batch estimate together with per-entry standard errors, treating the
/// per-sample terms `l_s (1(x_s) - m)` as independent.
pub fn grad_with_std_error(
    graph: &FactorGraph,
    oracle: &dyn ObjectiveOracle,
    samples: &[Assignment],
) -> Result<(FactorTables, FactorTables)> {
    let grad = grad_expected_loss(graph, oracle, samples)?;
    let losses = losses_of(oracle, samples)?;
    let m = marginals_from_samples(graph, samples);
    let n = samples.len() as f64;
    let mut sq = FactorTables::zeros_like(graph);
    let mut term = FactorTables::zeros_like(graph);
    for (x, &l) in samples.iter().zip(&losses) {
        for v in term.values_mut() {
            *v = 0.0;
        }
        term.add_indicator(graph, x, l);
        term.axpy(-l, &m);
        for ((s, t), g) in sq.values_mut().zip(term.values()).zip(grad.values()) {
            *s += (t - g) * (t - g);
        }
    }
    let denom = (n * (n - 1.0).max(1.0)).max(1.0);
    for s in sq.values_mut() {
        *s = (*s / denom).sqrt();
    }
    Ok((grad, sq))
}

pub fn expected_loss_exact(
    graph: &FactorGraph,
    oracle: &dyn ObjectiveOracle,
    max_space: u128,
) -> Result<f64> {
    let d = exact_distribution(graph, max_space)?;
    let mut e = 0.0;
    for (x, p) in d.iter() {
        e += p * oracle.loss(&x)?;
    }
    Ok(e)
}

/// Exact gradient by enumeration.
pub fn grad_expected_loss_exact(
    graph: &FactorGraph,
    oracle: &dyn ObjectiveOracle,
    max_space: u128,
) -> Result<FactorTables> {
    let d = exact_distribution(graph, max_space)?;
    let mut weighted = FactorTables::zeros_like(graph);
    let mut marg = FactorTables::zeros_like(graph);
    let mut mean = 0.0;
    for (x, p) in d.iter() {
        let l = oracle.loss(&x)?;
        weighted.add_indicator(graph, &x, p * l);
        marg.add_indicator(graph, &x, p);
        mean += p * l;
    }
    weighted.axpy(-mean, &marg);
    Ok(weighted)
}
