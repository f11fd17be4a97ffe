//! Diverse M-best inference with Hamming-distance penalties.
//!
//! Round `p` re-solves MAP on a copy of the graph whose unary tables are
//! lowered, at every variable, by `λ_i^q` at the label chosen by each earlier
//! solution `q`. The per-variable penalty is the spread of the current
//! (already penalized) unary table divided by `L`, so a single knob scales
//! diversity across factors of very different magnitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Assignment, FactorGraph, ScoredAssignment};
use crate::solver::Solver;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiverseConfig {
    /// Number of solutions.
    pub m: usize,
    /// Divisor `L` for the per-variable penalty; larger means less diverse.
    pub divisor: f64,
    pub solver: Solver,
}

impl Default for DiverseConfig {
    fn default() -> Self {
        Self {
            m: 5,
            divisor: 10.0,
            solver: Solver::default(),
        }
    }
}

impl DiverseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        if self.divisor.is_nan() || self.divisor <= 0.0 {
            return Err(Error::InvalidConfig("L must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiverseSolution {
    pub assignment: Assignment,
    /// Log-energy on the original, unpenalized graph.
    pub score: f64,
    /// Log-energy on the penalized graph this solution was found on.
    pub penalized_score: f64,
    /// Index of an earlier identical solution, if any.
    pub duplicate_of: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiverseSolutionSet {
    pub solutions: Vec<DiverseSolution>,
    /// `lambdas[q]` is the penalty vector attached to solution `q`, used in
    /// every round after it.
    pub lambdas: Vec<Vec<f64>>,
}

impl DiverseSolutionSet {
    /// Index of the solution with the highest original score; first wins ties.
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, s) in self.solutions.iter().enumerate() {
            if best.is_none_or(|b| s.score > self.solutions[b].score) {
                best = Some(i);
            }
        }
        best
    }
}

/// `λ_i = (max_j φ_i(j) - min_j φ_i(j)) / L` for each variable.
pub fn lambda_vector(unaries: &[Vec<f64>], divisor: f64) -> Vec<f64> {
    assert!(divisor > 0.0, "L must be positive");
    unaries
        .iter()
        .map(|u| {
            let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
            (hi - lo) / divisor
        })
        .collect()
}

/// Lowers each variable's unary entry at `previous`'s label by `lambda`.
pub fn apply_hamming_penalty(
    graph: &FactorGraph,
    previous: &Assignment,
    lambda: &[f64],
) -> Result<FactorGraph> {
    graph.check_assignment(previous)?;
    if lambda.len() != graph.num_vars() {
        return Err(Error::ShapeMismatch(format!(
            "{} penalties for {} variables",
            lambda.len(),
            graph.num_vars()
        )));
    }
    let mut unary = graph.unaries().to_vec();
    for ((u, &l), &lam) in unary.iter_mut().zip(previous.labels()).zip(lambda) {
        u[l] -= lam;
    }
    graph.with_unaries(unary)
}

pub fn diverse_mbest(graph: &FactorGraph, config: &DiverseConfig) -> Result<DiverseSolutionSet> {
    diverse_mbest_from(graph, config, None)
}

/// Like [`diverse_mbest`], reusing an already computed MAP of `graph` as the
/// first solution. The solver then runs `m - 1` times.
pub fn diverse_mbest_from(
    graph: &FactorGraph,
    config: &DiverseConfig,
    first: Option<ScoredAssignment>,
) -> Result<DiverseSolutionSet> {
    config.validate()?;
    let mut first = first;
    let mut current = graph.clone();
    let mut solutions: Vec<DiverseSolution> = Vec::with_capacity(config.m);
    let mut lambdas = Vec::with_capacity(config.m.saturating_sub(1));
    for p in 0..config.m {
        if p > 0 {
            let prev = &solutions[p - 1].assignment;
            let lambda = lambda_vector(current.unaries(), config.divisor);
            current = apply_hamming_penalty(&current, prev, &lambda)?;
            lambdas.push(lambda);
        }
        let found = match first.take() {
            Some(f) if p == 0 => f,
            _ => config.solver.solve(&current)?.best,
        };
        let duplicate_of = solutions.iter().position(|s| s.assignment == found.assignment);
        solutions.push(DiverseSolution {
            score: graph.log_energy(&found.assignment)?,
            penalized_score: found.score,
            assignment: found.assignment,
            duplicate_of,
        });
    }
    Ok(DiverseSolutionSet { solutions, lambdas })
}
