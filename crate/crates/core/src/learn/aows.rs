//! Loss-averaging unary estimates.
//!
//! The unary factor of label `j` at variable `i` is minus the mean loss over
//! all records in which variable `i` took label `j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Assignment, FactorGraph};

/// How far below the worst observed estimate an unseen label is placed.
pub const UNSEEN_MARGIN: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub assignment: Assignment,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, assignment: Assignment, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss for {assignment}")));
        }
        self.records.push(LossRecord { assignment, loss });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AowsEstimate {
    /// Unary-only graph on the skeleton's structure.
    pub graph: FactorGraph,
    /// `counts[i][j]`: records with variable `i` at label `j`.
    pub counts: Vec<Vec<usize>>,
    /// `(variable, label)` pairs never sampled; their entries are sentinels.
    pub unseen: Vec<(usize, usize)>,
}

pub fn estimate_factors_aows(trace: &LossTrace, skeleton: &FactorGraph) -> Result<AowsEstimate> {
    if trace.is_empty() {
        return Err(Error::Empty("loss trace".into()));
    }
    let n = skeleton.num_vars();
    let mut sums: Vec<Vec<f64>> = (0..n).map(|v| vec![0.0; skeleton.num_labels(v)]).collect();
    let mut counts: Vec<Vec<usize>> = (0..n).map(|v| vec![0; skeleton.num_labels(v)]).collect();
    for r in &trace.records {
        skeleton.check_assignment(&r.assignment)?;
        for (v, &l) in r.assignment.iter().enumerate() {
            sums[v][l] += r.loss;
            counts[v][l] += 1;
        }
    }
    let mut unseen = Vec::new();
    let unary = sums
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(v, (s, c))| {
            let mut u: Vec<f64> = s
                .iter()
                .zip(c)
                .map(|(&sum, &k)| if k > 0 { -sum / k as f64 } else { f64::NAN })
                .collect();
            let floor = u
                .iter()
                .copied()
                .filter(|x| !x.is_nan())
                .fold(f64::INFINITY, f64::min);
            for (l, x) in u.iter_mut().enumerate() {
                if x.is_nan() {
                    *x = floor - UNSEEN_MARGIN;
                    unseen.push((v, l));
                }
            }
            u
        })
        .collect();
    Ok(AowsEstimate {
        graph: skeleton.zeroed().with_unaries(unary)?,
        counts,
        unseen,
    })
}
