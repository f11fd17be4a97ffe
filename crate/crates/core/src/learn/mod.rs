//! Learning performance factors from a loss oracle.
//!
//! The loop keeps one persistent Gibbs chain. Each epoch starts with a long
//! burn-in; each iteration then runs a short burn-in, draws samples, queries
//! the oracle and takes a gradient step on the expected loss. Marginals and
//! the loss baseline used by the gradient are running averages over the
//! chain, since a batch of one sample carries no covariance information.

mod aows;
mod gibbs;
mod gradient;

pub use aows::{estimate_factors_aows, AowsEstimate, LossRecord, LossTrace, UNSEEN_MARGIN};
pub use gibbs::{gibbs_conditional, gibbs_sweep, lsbs_draw, sample_chains, GibbsChain, LsbsConfig, Phase};
pub use gradient::{
    exact_marginals, expected_loss_exact, grad_expected_loss, grad_expected_loss_exact,
    grad_from_losses, grad_with_std_error, marginals_from_samples, FactorTables,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::oracle::ObjectiveOracle;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub lsbs: LsbsConfig,
    pub step_size: f64,
    pub optimizer: Optimizer,
    /// Epochs that only sample and record losses, without updates.
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    /// Decay of the running marginal and baseline averages.
    pub average_decay: f64,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            iters_per_epoch: 100,
            lsbs: LsbsConfig::default(),
            step_size: 3e-4,
            optimizer: Optimizer::Adam,
            warmup_epochs: 0,
            weight_decay: 0.0,
            average_decay: 0.95,
            seed: 0,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        self.lsbs.validate()?;
        if !self.step_size.is_finite() || self.step_size < 0.0 {
            return Err(Error::InvalidConfig("step size must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.average_decay) {
            return Err(Error::InvalidConfig("average decay must be in [0, 1)".into()));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub graph: FactorGraph,
    /// Mean oracle loss of each iteration's samples.
    pub loss_history: Vec<f64>,
    pub trace: LossTrace,
    pub sweeps: u64,
    pub updates: usize,
}

struct Adam {
    m: FactorTables,
    v: FactorTables,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn step(&mut self, params: &mut FactorTables, grad: &FactorTables, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, g), m), v) in params
            .values_mut()
            .zip(grad.values())
            .zip(self.m.values_mut())
            .zip(self.v.values_mut())
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Gradient descent on `E_P[loss]` over the factors of `skeleton`, starting
/// from all-zero factors.
pub fn learn_factors(
    skeleton: &FactorGraph,
    oracle: &dyn ObjectiveOracle,
    config: &LearnConfig,
) -> Result<LearnOutcome> {
    config.validate()?;
    let mut graph = skeleton.zeroed();
    let mut params = FactorTables {
        unary: graph.unaries().to_vec(),
        pairwise: graph.pairwise_tables().to_vec(),
    };
    let mut adam = Adam {
        m: FactorTables::zeros_like(&graph),
        v: FactorTables::zeros_like(&graph),
        t: 0,
    };
    let mut chain = GibbsChain::new(&graph, config.seed);
    let mut marginals = exact_uniform_marginals(&graph);
    let mut baseline: Option<f64> = None;
    let mut trace = LossTrace::new();
    let mut history = Vec::new();
    let mut updates = 0;
    let rho = config.average_decay;

    for epoch in 0..config.epochs {
        lsbs_draw(&mut chain, &graph, &config.lsbs, Phase::EpochStart);
        for _ in 0..config.iters_per_epoch {
            let samples = lsbs_draw(&mut chain, &graph, &config.lsbs, Phase::Iteration);
            let mut losses = Vec::with_capacity(samples.len());
            for x in &samples {
                let l = oracle.loss(x)?;
                trace
                    .push(x.clone(), l)
                    .map_err(|_| Error::Oracle(format!("non-finite loss at {x}")))?;
                losses.push(l);
            }
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            history.push(mean);

            let batch = marginals_from_samples(&graph, &samples);
            let b = *baseline.get_or_insert(mean);
            if epoch >= config.warmup_epochs {
                let mut grad = grad_from_losses(&graph, &samples, &losses, &marginals, b)?;
                if config.weight_decay > 0.0 {
                    grad.axpy(config.weight_decay, &params);
                }
                match config.optimizer {
                    Optimizer::Adam => adam.step(&mut params, &grad, config.step_size),
                    Optimizer::Sgd => params.axpy(-config.step_size, &grad),
                }
                graph = graph.with_factors(params.unary.clone(), params.pairwise.clone(), 0.0)?;
                updates += 1;
            }
            // averages are updated after use so the gradient's reference
            // point does not depend on the current samples
            for (m, s) in marginals.values_mut().zip(batch.values()) {
                *m = rho * *m + (1.0 - rho) * s;
            }
            baseline = Some(rho * b + (1.0 - rho) * mean);
        }
    }
    Ok(LearnOutcome {
        graph,
        loss_history: history,
        trace,
        sweeps: chain.sweeps(),
        updates,
    })
}

/// Marginals of the uniform distribution, the starting point of the averages.
fn exact_uniform_marginals(graph: &FactorGraph) -> FactorTables {
    let mut m = FactorTables::zeros_like(graph);
    for (u, v) in m.unary.iter_mut().zip(0..) {
        let k = graph.num_labels(v) as f64;
        u.iter_mut().for_each(|p| *p = 1.0 / k);
    }
    for (t, &(i, j)) in m.pairwise.iter_mut().zip(graph.edges()) {
        let w = 1.0 / (graph.num_labels(i) * graph.num_labels(j)) as f64;
        t.data_mut().iter_mut().for_each(|p| *p = w);
    }
    m
}
