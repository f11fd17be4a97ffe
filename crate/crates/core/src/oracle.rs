//! Objective oracles: stand-ins for a trained super-network's loss.
//!
//! Oracles are built from short spec strings of the form
//! `kind[:key=value,...]`:
//!
//! - `separable:seed=0,scale=1` random per-label losses, summed over variables
//! - `pairwise:seed=0,scale=1,coupling=0.5` random unary and pairwise losses on
//!   the skeleton's edges
//! - `graph:PATH` loss is the negated score of a factor-graph file

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{FactorGraph, PairTable};

pub trait ObjectiveOracle: Send + Sync {
    fn loss(&self, x: &[usize]) -> Result<f64>;

    /// Whether repeated calls on the same assignment return the same loss.
    fn deterministic(&self) -> bool {
        true
    }

    fn describe(&self) -> String;
}

/// Loss `-score(x)` of a factor graph: lower loss where the graph scores higher.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphOracle {
    graph: FactorGraph,
    label: String,
}

impl GraphOracle {
    pub fn new(graph: FactorGraph, label: impl Into<String>) -> Self {
        Self {
            graph,
            label: label.into(),
        }
    }

    /// The factor graph whose MAP is the loss minimizer.
    pub fn ground_truth(&self) -> &FactorGraph {
        &self.graph
    }
}

impl ObjectiveOracle for GraphOracle {
    fn loss(&self, x: &[usize]) -> Result<f64> {
        Ok(-self.graph.log_energy(x)?)
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// `loss(x) = Σ_i table_i(x_i)`.
pub fn separable_oracle(tables: Vec<Vec<f64>>) -> Result<GraphOracle> {
    let sizes: Vec<usize> = tables.iter().map(Vec::len).collect();
    let mut b = crate::graph::GraphBuilder::with_sizes(&sizes);
    for (i, t) in tables.into_iter().enumerate() {
        b = b.unary(i, t.into_iter().map(|v| -v).collect());
    }
    Ok(GraphOracle::new(b.build()?, "separable"))
}

/// Random per-label losses uniform in `[0, scale)`.
pub fn random_separable(skeleton: &FactorGraph, seed: u64, scale: f64) -> Result<GraphOracle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tables = (0..skeleton.num_vars())
        .map(|v| {
            (0..skeleton.num_labels(v))
                .map(|_| scale * rng.random::<f64>())
                .collect()
        })
        .collect();
    let mut o = separable_oracle(tables)?;
    o.label = format!("separable:seed={seed},scale={scale}");
    Ok(o)
}

/// Random unary losses in `[0, scale)` plus pairwise losses in
/// `[0, coupling)` on every skeleton edge.
pub fn random_pairwise(
    skeleton: &FactorGraph,
    seed: u64,
    scale: f64,
    coupling: f64,
) -> Result<GraphOracle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unary = (0..skeleton.num_vars())
        .map(|v| {
            Some(
                (0..skeleton.num_labels(v))
                    .map(|_| -scale * rng.random::<f64>())
                    .collect(),
            )
        })
        .collect();
    let tables = skeleton
        .edges()
        .iter()
        .map(|&(i, j)| {
            PairTable::from_fn(skeleton.num_labels(i), skeleton.num_labels(j), |_, _| {
                -coupling * rng.random::<f64>()
            })
        })
        .collect();
    let g = FactorGraph::new(
        skeleton.label_sets().to_vec(),
        unary,
        skeleton.edges().to_vec(),
        tables,
        0.0,
    )?;
    Ok(GraphOracle::new(
        g,
        format!("pairwise:seed={seed},scale={scale},coupling={coupling}"),
    ))
}

fn parse_params(rest: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("oracle parameter `{part}` lacks `=`")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn take<T: std::str::FromStr>(p: &mut BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match p.remove(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad value `{v}` for oracle parameter `{key}`"))),
    }
}

/// Builds an oracle from a spec string, sized to `skeleton`.
pub fn oracle_from_spec(spec: &str, skeleton: &FactorGraph) -> Result<GraphOracle> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match kind.trim() {
        "graph" => {
            let g = crate::format::read_factor_graph(Path::new(rest.trim()))?;
            g.check_same_structure(skeleton).or_else(|_| {
                // the oracle may use edges the skeleton lacks; only labels must agree
                if g.num_vars() == skeleton.num_vars()
                    && (0..g.num_vars()).all(|v| g.num_labels(v) == skeleton.num_labels(v))
                {
                    Ok(())
                } else {
                    Err(Error::StructureMismatch("oracle graph labels differ from the skeleton".into()))
                }
            })?;
            Ok(GraphOracle::new(g, spec.to_string()))
        }
        "separable" | "pairwise" => {
            let mut p = parse_params(rest)?;
            let seed = take(&mut p, "seed", 0u64)?;
            let scale = take(&mut p, "scale", 1.0f64)?;
            let oracle = if kind == "separable" {
                random_separable(skeleton, seed, scale)?
            } else {
                let coupling = take(&mut p, "coupling", 0.5f64)?;
                random_pairwise(skeleton, seed, scale, coupling)?
            };
            if let Some(k) = p.keys().next() {
                return Err(Error::InvalidConfig(format!("unknown oracle parameter `{k}`")));
            }
            Ok(oracle)
        }
        other => Err(Error::InvalidConfig(format!("unknown oracle kind `{other}`"))),
    }
}
