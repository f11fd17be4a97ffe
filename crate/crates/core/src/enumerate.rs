//! Exhaustive-enumeration oracles over small assignment spaces.
//!
//! Assignments are visited in lexicographic order (variable 0 most
//! significant), which gives the global tie-break: among equal scores the
//! lexicographically smallest assignment wins.

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::graph::{Assignment, FactorGraph, ScoredAssignment};
use crate::util::{decode_index, increment};

/// Default limit on the number of enumerated assignments.
pub const DEFAULT_MAX_SPACE: u128 = 10_000_000;

const CHUNK: u128 = 1 << 14;

fn radices(graph: &FactorGraph) -> Vec<usize> {
    (0..graph.num_vars()).map(|i| graph.num_labels(i)).collect()
}

fn check_space(graph: &FactorGraph, max_space: u128) -> Result<u128> {
    let size = graph.space_size();
    if size > max_space {
        return Err(Error::SpaceTooLarge {
            size,
            limit: max_space,
        });
    }
    Ok(size)
}

/// Globally optimal assignment by enumeration.
pub fn brute_force_map(graph: &FactorGraph, max_space: u128) -> Result<ScoredAssignment> {
    brute_force_map_with(graph, max_space, Parallelism::default())
}

pub fn brute_force_map_with(
    graph: &FactorGraph,
    max_space: u128,
    par: Parallelism,
) -> Result<ScoredAssignment> {
    let size = check_space(graph, max_space)?;
    let radices = radices(graph);
    let best = exec::map_chunks(par, size, CHUNK, |start, end| {
        let mut x = vec![0; radices.len()];
        decode_index(start, &radices, &mut x);
        let mut best = (start, f64::NEG_INFINITY);
        for idx in start..end {
            let s = graph.score_unchecked(&x);
            if s > best.1 {
                best = (idx, s);
            }
            increment(&mut x, &radices);
        }
        best
    })
    .into_iter()
    // chunks arrive in index order, so strict improvement keeps the smallest index
    .fold((0u128, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });

    let mut x = vec![0; radices.len()];
    decode_index(best.0, &radices, &mut x);
    Ok(ScoredAssignment {
        assignment: Assignment::new(x),
        score: best.1,
    })
}

/// Scores of every assignment, in lexicographic order.
pub fn all_scores(graph: &FactorGraph, max_space: u128, par: Parallelism) -> Result<Vec<f64>> {
    let size = check_space(graph, max_space)?;
    let radices = radices(graph);
    let chunks = exec::map_chunks(par, size, CHUNK, |start, end| {
        let mut x = vec![0; radices.len()];
        decode_index(start, &radices, &mut x);
        let mut out = Vec::with_capacity((end - start) as usize);
        for _ in start..end {
            out.push(graph.score_unchecked(&x));
            increment(&mut x, &radices);
        }
        out
    });
    Ok(chunks.concat())
}

/// The Gibbs distribution `P(x) ∝ exp(score(x))` as an explicit table.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    radices: Vec<usize>,
    probs: Vec<f64>,
    log_partition: f64,
}

impl ExactDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `log Z`, including the graph constant.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn index_of(&self, x: &[usize]) -> usize {
        x.iter()
            .zip(&self.radices)
            .fold(0usize, |acc, (&l, &k)| acc * k + l)
    }

    pub fn prob(&self, x: &[usize]) -> f64 {
        self.probs[self.index_of(x)]
    }

    pub fn assignment(&self, index: usize) -> Assignment {
        let mut x = vec![0; self.radices.len()];
        decode_index(index as u128, &self.radices, &mut x);
        Assignment::new(x)
    }

    /// `(assignment, probability)` pairs in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (Assignment, f64)> + '_ {
        (0..self.probs.len()).map(|i| (self.assignment(i), self.probs[i]))
    }

    /// One i.i.d. draw by inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return self.assignment(i);
            }
        }
        self.assignment(self.probs.len() - 1)
    }

    /// Total-variation distance to an empirical distribution given as counts.
    pub fn tv_distance(&self, counts: &[u64]) -> f64 {
        let total: u64 = counts.iter().sum();
        0.5 * self
            .probs
            .iter()
            .zip(counts)
            .map(|(&p, &c)| (p - c as f64 / total as f64).abs())
            .sum::<f64>()
    }
}

pub fn exact_distribution(graph: &FactorGraph, max_space: u128) -> Result<ExactDistribution> {
    exact_distribution_with(graph, max_space, Parallelism::default())
}

pub fn exact_distribution_with(
    graph: &FactorGraph,
    max_space: u128,
    par: Parallelism,
) -> Result<ExactDistribution> {
    let scores = all_scores(graph, max_space, par)?;
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores.iter().map(|&s| (s - m).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(ExactDistribution {
        radices: radices(graph),
        probs,
        log_partition: m + z.ln(),
    })
}
