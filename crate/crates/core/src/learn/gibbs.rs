//! Systematic-scan Gibbs sampling and the long/short burn-in scheme.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_slice, Parallelism};
use crate::graph::{Assignment, FactorGraph};

/// `P(x_var = a | rest)`, read off the variable's Markov blanket only.
pub fn gibbs_conditional(graph: &FactorGraph, state: &[usize], var: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(graph.num_labels(var));
    conditional_into(graph, state, var, &mut p);
    p
}

fn conditional_into(graph: &FactorGraph, state: &[usize], var: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(graph.unary(var));
    for nb in graph.neighbors(var) {
        let other = state[nb.var];
        for (a, v) in out.iter_mut().enumerate() {
            *v += graph.oriented(nb.edge, var, a, other);
        }
    }
    let m = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in out.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in out.iter_mut() {
        *v /= z;
    }
}

fn draw<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// A persistent Markov chain over assignments.
///
/// The chain does not own a graph: each call takes the graph to sample
/// from, so factors can change between calls while the state carries over.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    state: Assignment,
    rng: ChaCha8Rng,
    steps_taken: u64,
    sweeps: u64,
    buf: Vec<f64>,
}

impl GibbsChain {
    /// Starts from a uniformly random assignment.
    pub fn new(graph: &FactorGraph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = (0..graph.num_vars())
            .map(|v| rng.random_range(0..graph.num_labels(v)))
            .collect::<Vec<_>>();
        Self {
            state: Assignment::new(state),
            rng,
            steps_taken: 0,
            sweeps: 0,
            buf: Vec::new(),
        }
    }

    pub fn with_state(graph: &FactorGraph, state: Assignment, seed: u64) -> Result<Self> {
        graph.check_assignment(&state)?;
        Ok(Self {
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
            steps_taken: 0,
            sweeps: 0,
            buf: Vec::new(),
        })
    }

    pub fn state(&self) -> &Assignment {
        &self.state
    }

    /// Single-variable updates performed so far.
    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    /// Resamples every variable once, in index order.
    pub fn sweep(&mut self, graph: &FactorGraph) {
        debug_assert!(graph.check_assignment(&self.state).is_ok());
        let mut buf = std::mem::take(&mut self.buf);
        for v in 0..graph.num_vars() {
            conditional_into(graph, self.state.labels(), v, &mut buf);
            let a = draw(&mut self.rng, &buf);
            self.state.labels_mut()[v] = a;
        }
        self.buf = buf;
        self.steps_taken += graph.num_vars() as u64;
        self.sweeps += 1;
    }

    pub fn run(&mut self, graph: &FactorGraph, sweeps: usize) {
        for _ in 0..sweeps {
            self.sweep(graph);
        }
    }
}

pub fn gibbs_sweep(chain: &mut GibbsChain, graph: &FactorGraph) {
    chain.sweep(graph);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsbsConfig {
    /// Burn-in sweeps at the start of each epoch.
    pub n_long: usize,
    /// Burn-in sweeps before each iteration's samples.
    pub n_short: usize,
    /// Samples per update.
    pub n_mc: usize,
    /// Relaxation temperature. Kept for configuration parity; the
    /// score-function estimator does not use it.
    pub tau: f64,
}

impl Default for LsbsConfig {
    fn default() -> Self {
        Self {
            n_long: 10_000,
            n_short: 10,
            n_mc: 1,
            tau: 1.0,
        }
    }
}

impl LsbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mc == 0 {
            return Err(Error::InvalidConfig("n_mc must be at least 1".into()));
        }
        if self.tau.is_nan() || self.tau < 0.0 {
            return Err(Error::InvalidConfig("tau must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    EpochStart,
    Iteration,
}

/// Runs the phase's burn-in, then draws `n_mc` samples, one sweep each.
///
/// An iteration therefore costs `n_short + n_mc` sweeps, and an epoch start
/// `n_long + n_mc`.
pub fn lsbs_draw(
    chain: &mut GibbsChain,
    graph: &FactorGraph,
    config: &LsbsConfig,
    phase: Phase,
) -> Vec<Assignment> {
    let burn_in = match phase {
        Phase::EpochStart => config.n_long,
        Phase::Iteration => config.n_short,
    };
    chain.run(graph, burn_in);
    (0..config.n_mc.max(1))
        .map(|_| {
            chain.sweep(graph);
            chain.state().clone()
        })
        .collect()
}

/// Independent chains, one per seed, each returning `samples` states taken
/// one sweep apart after `burn_in` sweeps.
pub fn sample_chains(
    graph: &FactorGraph,
    seeds: &[u64],
    burn_in: usize,
    samples: usize,
    par: Parallelism,
) -> Vec<Vec<Assignment>> {
    map_slice(par, seeds, |&seed| {
        let mut chain = GibbsChain::new(graph, seed);
        chain.run(graph, burn_in);
        (0..samples)
            .map(|_| {
                chain.sweep(graph);
                chain.state().clone()
            })
            .collect()
    })
}
