//! Uniform front end over the MAP solvers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::enumerate::{brute_force_map, DEFAULT_MAX_SPACE};
use crate::error::{Error, Result};
use crate::exact::{map_clique_tree_with_budget, DEFAULT_TABLE_BUDGET};
use crate::graph::{FactorGraph, ScoredAssignment};
use crate::mplp::{map_mplp, MplpConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Clique-tree max-sum.
    Exact,
    /// MPLP dual coordinate descent.
    #[default]
    Mplp,
    /// Exhaustive enumeration; small spaces only.
    Brute,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" | "mpct" | "clique-tree" => Ok(Self::Exact),
            "mplp" => Ok(Self::Mplp),
            "brute" | "brute-force" => Ok(Self::Brute),
            other => Err(Error::InvalidConfig(format!("unknown solver `{other}`"))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Mplp => "mplp",
            Self::Brute => "brute",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solver {
    pub kind: SolverKind,
    pub mplp: MplpConfig,
    pub table_budget: u128,
    pub max_space: u128,
}

impl Default for Solver {
    fn default() -> Self {
        Self::new(SolverKind::default())
    }
}

/// A decoded assignment plus an upper bound on the optimal score.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSolution {
    pub best: ScoredAssignment,
    /// Equal to the score for exact solvers; the dual bound for MPLP.
    pub upper_bound: f64,
}

impl Solver {
    pub fn new(kind: SolverKind) -> Self {
        Self {
            kind,
            mplp: MplpConfig::default(),
            table_budget: DEFAULT_TABLE_BUDGET,
            max_space: DEFAULT_MAX_SPACE,
        }
    }

    pub fn solve(&self, graph: &FactorGraph) -> Result<MapSolution> {
        match self.kind {
            SolverKind::Exact => {
                let best = map_clique_tree_with_budget(graph, self.table_budget)?;
                Ok(MapSolution {
                    upper_bound: best.score,
                    best,
                })
            }
            SolverKind::Brute => {
                let best = brute_force_map(graph, self.max_space)?;
                Ok(MapSolution {
                    upper_bound: best.score,
                    best,
                })
            }
            SolverKind::Mplp => {
                let r = map_mplp(graph, &self.mplp);
                Ok(MapSolution {
                    best: ScoredAssignment {
                        assignment: r.assignment,
                        score: r.primal,
                    },
                    upper_bound: r.dual.max(r.primal),
                })
            }
        }
    }
}
