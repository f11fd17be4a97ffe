//! Approximate MAP by max-product linear programming (MPLP).
//!
//! Edge-based block coordinate descent on the dual of the local-polytope LP
//! relaxation. Every edge update exactly minimizes the dual over that edge's
//! two messages, so the dual bound never increases. A primal assignment is
//! decoded from the reparameterized unaries after each sweep; when the dual
//! meets it the assignment is certified optimal.

use serde::{Deserialize, Serialize};

use crate::graph::{Assignment, FactorGraph};
use crate::util::first_argmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MplpConfig {
    /// Maximum number of full sweeps over the edges.
    pub max_iters: usize,
    /// Stop once a sweep lowers the dual by less than this, and certify when
    /// the duality gap is at most this.
    pub tol: f64,
}

impl Default for MplpConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MplpResult {
    pub assignment: Assignment,
    /// Log-energy of `assignment`.
    pub primal: f64,
    /// Upper bound on the MAP log-energy.
    pub dual: f64,
    pub iterations: usize,
    /// Set when the gap closed to within the tolerance.
    pub converged: bool,
    /// Dual value before the first sweep and after each sweep.
    pub dual_trace: Vec<f64>,
}

/// `dual - primal`; zero proves the assignment optimal.
pub fn certify_gap(result: &MplpResult) -> f64 {
    result.dual - result.primal
}

struct State<'g> {
    graph: &'g FactorGraph,
    /// Message from each edge into its first endpoint.
    to_first: Vec<Vec<f64>>,
    /// Message from each edge into its second endpoint.
    to_second: Vec<Vec<f64>>,
    /// Reparameterized unaries: own unary plus all incoming edge messages.
    beliefs: Vec<Vec<f64>>,
}

impl<'g> State<'g> {
    fn new(graph: &'g FactorGraph) -> Self {
        let to_first = graph
            .edges()
            .iter()
            .map(|&(i, _)| vec![0.0; graph.num_labels(i)])
            .collect();
        let to_second = graph
            .edges()
            .iter()
            .map(|&(_, j)| vec![0.0; graph.num_labels(j)])
            .collect();
        Self {
            graph,
            to_first,
            to_second,
            beliefs: graph.unaries().to_vec(),
        }
    }

    fn update_edge(&mut self, e: usize) {
        let (i, j) = self.graph.edges()[e];
        let table = self.graph.pairwise(e);
        let others_i: Vec<f64> = self.beliefs[i]
            .iter()
            .zip(&self.to_first[e])
            .map(|(b, m)| b - m)
            .collect();
        let others_j: Vec<f64> = self.beliefs[j]
            .iter()
            .zip(&self.to_second[e])
            .map(|(b, m)| b - m)
            .collect();
        let new_i: Vec<f64> = (0..others_i.len())
            .map(|a| {
                let best = (0..others_j.len())
                    .map(|b| table.get(a, b) + others_j[b])
                    .fold(f64::NEG_INFINITY, f64::max);
                0.5 * (best - others_i[a])
            })
            .collect();
        let new_j: Vec<f64> = (0..others_j.len())
            .map(|b| {
                let best = (0..others_i.len())
                    .map(|a| table.get(a, b) + others_i[a])
                    .fold(f64::NEG_INFINITY, f64::max);
                0.5 * (best - others_j[b])
            })
            .collect();
        for (a, v) in new_i.iter().enumerate() {
            self.beliefs[i][a] = others_i[a] + v;
        }
        for (b, v) in new_j.iter().enumerate() {
            self.beliefs[j][b] = others_j[b] + v;
        }
        self.to_first[e] = new_i;
        self.to_second[e] = new_j;
    }

    fn dual(&self) -> f64 {
        let node: f64 = self
            .beliefs
            .iter()
            .map(|b| b.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .sum();
        let edge: f64 = (0..self.graph.num_edges())
            .map(|e| {
                let t = self.graph.pairwise(e);
                let mut best = f64::NEG_INFINITY;
                for a in 0..t.rows() {
                    for b in 0..t.cols() {
                        best = best.max(t.get(a, b) - self.to_first[e][a] - self.to_second[e][b]);
                    }
                }
                best
            })
            .sum();
        self.graph.constant() + node + edge
    }

    fn decode(&self) -> Vec<usize> {
        self.beliefs
            .iter()
            .map(|b| {
                let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                first_argmax(b, 1e-12 * scale)
            })
            .collect()
    }

    /// Fixes variables in index order, scoring each label by its unary, the
    /// pairwise terms to already fixed neighbours and the edge messages from
    /// the rest. Resolves ties that independent decoding gets wrong.
    fn decode_conditional(&self) -> Vec<usize> {
        let g = self.graph;
        let mut x: Vec<usize> = Vec::with_capacity(g.num_vars());
        for v in 0..g.num_vars() {
            let score: Vec<f64> = (0..g.num_labels(v))
                .map(|l| {
                    let mut s = g.unary(v)[l];
                    for nb in g.neighbors(v) {
                        s += if nb.var < v {
                            g.oriented(nb.edge, v, l, x[nb.var])
                        } else if g.edges()[nb.edge].0 == v {
                            self.to_first[nb.edge][l]
                        } else {
                            self.to_second[nb.edge][l]
                        };
                    }
                    s
                })
                .collect();
            let scale = score.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            x.push(first_argmax(&score, 1e-12 * scale));
        }
        x
    }

    /// The better of the two decodings; independent decoding wins ties.
    fn decode_best(&self) -> (Vec<usize>, f64) {
        let a = self.decode();
        let b = self.decode_conditional();
        let (sa, sb) = (self.graph.score_unchecked(&a), self.graph.score_unchecked(&b));
        if sb > sa {
            (b, sb)
        } else {
            (a, sa)
        }
    }
}

pub fn map_mplp(graph: &FactorGraph, config: &MplpConfig) -> MplpResult {
    let mut state = State::new(graph);
    let (mut best_x, mut best_primal) = state.decode_best();
    let mut dual = state.dual();
    let mut trace = vec![dual];
    let mut iterations = 0;

    while iterations < config.max_iters.max(1) {
        if dual - best_primal <= config.tol {
            break;
        }
        for e in 0..graph.num_edges() {
            state.update_edge(e);
        }
        iterations += 1;
        let (x, primal) = state.decode_best();
        if primal > best_primal {
            best_primal = primal;
            best_x = x;
        }
        let next = state.dual();
        trace.push(next);
        let decrease = dual - next;
        dual = next;
        if decrease < config.tol {
            break;
        }
    }

    MplpResult {
        assignment: Assignment::new(best_x),
        primal: best_primal,
        dual,
        iterations,
        converged: dual - best_primal <= config.tol,
        dual_trace: trace,
    }
}
