//! Pairwise Markov random field model.
//!
//! All factors live in the log domain: the score of an assignment is
//! `constant + Σ_i unary_i(x_i) + Σ_(i,j) pairwise_ij(x_i, x_j)`, and the
//! energy is its exponential. Maximizing the score maximizes the energy, so
//! the exponential is never materialized.

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, non-empty set of label names for one variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::EmptyLabelSet { var: 0 });
        }
        Ok(Self { labels })
    }

    /// Labels named `0`, `1`, ..., `k - 1`.
    pub fn indexed(k: usize) -> Self {
        assert!(k > 0, "label set must be non-empty");
        Self {
            labels: (0..k).map(|i| i.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }
}

/// Dense row-major `rows × cols` table of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PairTable {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged pairwise table".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} table",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for a in 0..rows {
            for b in 0..cols {
                data.push(f(a, b));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.cols + b]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, v: f64) {
        self.data[a * self.cols + b] = v;
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.data[a * self.cols..(a + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transposed(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |a, b| self.get(b, a))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One label index per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn labels_mut(&mut self) -> &mut [usize] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    /// Number of positions where the two assignments differ.
    pub fn hamming(&self, other: &Assignment) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl Deref for Assignment {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Assignment {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// An assignment together with its log-energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAssignment {
    pub assignment: Assignment,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub var: usize,
    pub edge: usize,
}

/// Validated pairwise MRF. Immutable after construction.
///
/// Edges are stored with the smaller variable index first; a table supplied
/// for `(j, i)` with `j > i` is transposed on the way in.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    label_sets: Vec<LabelSet>,
    unary: Vec<Vec<f64>>,
    edges: Vec<(usize, usize)>,
    pairwise: Vec<PairTable>,
    constant: f64,
    adjacency: Vec<Vec<Neighbor>>,
    edge_index: HashMap<(usize, usize), usize>,
}

impl FactorGraph {
    /// Builds and validates a graph. A `None` unary table defaults to zeros.
    pub fn new(
        label_sets: Vec<LabelSet>,
        unary: Vec<Option<Vec<f64>>>,
        edges: Vec<(usize, usize)>,
        pairwise: Vec<PairTable>,
        constant: f64,
    ) -> Result<Self> {
        let n = label_sets.len();
        if unary.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} unary tables for {n} variables",
                unary.len()
            )));
        }
        if edges.len() != pairwise.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} pairwise tables for {} edges",
                pairwise.len(),
                edges.len()
            )));
        }
        if !constant.is_finite() {
            return Err(Error::NonFinite("constant".into()));
        }
        let mut unary_tables = Vec::with_capacity(n);
        for (i, (ls, u)) in label_sets.iter().zip(unary).enumerate() {
            if ls.is_empty() {
                return Err(Error::EmptyLabelSet { var: i });
            }
            let u = u.unwrap_or_else(|| vec![0.0; ls.len()]);
            if u.len() != ls.len() {
                return Err(Error::ShapeMismatch(format!(
                    "unary table of variable {i} has {} entries, expected {}",
                    u.len(),
                    ls.len()
                )));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("unary table of variable {i}")));
            }
            unary_tables.push(u);
        }

        let mut norm_edges = Vec::with_capacity(edges.len());
        let mut tables = Vec::with_capacity(edges.len());
        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); n];
        for (&(a, b), table) in edges.iter().zip(pairwise) {
            for v in [a, b] {
                if v >= n {
                    return Err(Error::VariableOutOfRange { var: v, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            if table.rows() != label_sets[a].len() || table.cols() != label_sets[b].len() {
                return Err(Error::ShapeMismatch(format!(
                    "pairwise table on ({a}, {b}) is {}x{}, expected {}x{}",
                    table.rows(),
                    table.cols(),
                    label_sets[a].len(),
                    label_sets[b].len()
                )));
            }
            if table.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("pairwise table on ({a}, {b})")));
            }
            let (i, j, table) = if a < b {
                (a, b, table)
            } else {
                (b, a, table.transposed())
            };
            let e = norm_edges.len();
            if edge_index.insert((i, j), e).is_some() {
                return Err(Error::DuplicateEdge(i, j));
            }
            norm_edges.push((i, j));
            tables.push(table);
            adjacency[i].push(Neighbor { var: j, edge: e });
            adjacency[j].push(Neighbor { var: i, edge: e });
        }

        Ok(Self {
            label_sets,
            unary: unary_tables,
            edges: norm_edges,
            pairwise: tables,
            constant,
            adjacency,
            edge_index,
        })
    }

    /// All-zero graph on the given label sets and edges.
    pub fn skeleton(label_sets: Vec<LabelSet>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = label_sets.len();
        let mut tables = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::VariableOutOfRange { var: a.max(b), n });
            }
            tables.push(PairTable::zeros(label_sets[a].len(), label_sets[b].len()));
        }
        Self::new(label_sets, vec![None; n], edges, tables, 0.0)
    }

    pub fn num_vars(&self) -> usize {
        self.label_sets.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_labels(&self, var: usize) -> usize {
        self.label_sets[var].len()
    }

    pub fn label_set(&self, var: usize) -> &LabelSet {
        &self.label_sets[var]
    }

    pub fn label_sets(&self) -> &[LabelSet] {
        &self.label_sets
    }

    pub fn unary(&self, var: usize) -> &[f64] {
        &self.unary[var]
    }

    pub fn unaries(&self) -> &[Vec<f64>] {
        &self.unary
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn pairwise(&self, edge: usize) -> &PairTable {
        &self.pairwise[edge]
    }

    pub fn pairwise_tables(&self) -> &[PairTable] {
        &self.pairwise
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn neighbors(&self, var: usize) -> &[Neighbor] {
        &self.adjacency[var]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&(a.min(b), a.max(b))).copied()
    }

    /// Pairwise value on `edge` seen from `from`: `(label of from, label of other)`.
    #[inline]
    pub fn oriented(&self, edge: usize, from: usize, from_label: usize, other_label: usize) -> f64 {
        if self.edges[edge].0 == from {
            self.pairwise[edge].get(from_label, other_label)
        } else {
            self.pairwise[edge].get(other_label, from_label)
        }
    }

    /// Number of assignments, saturating at `u128::MAX`.
    pub fn space_size(&self) -> u128 {
        self.label_sets
            .iter()
            .fold(1u128, |acc, ls| acc.saturating_mul(ls.len() as u128))
    }

    pub fn check_assignment(&self, assignment: &[usize]) -> Result<()> {
        if assignment.len() != self.num_vars() {
            return Err(Error::InvalidAssignment(format!(
                "length {} for {} variables",
                assignment.len(),
                self.num_vars()
            )));
        }
        for (i, &l) in assignment.iter().enumerate() {
            if l >= self.num_labels(i) {
                return Err(Error::InvalidAssignment(format!(
                    "label {l} at variable {i} with {} labels",
                    self.num_labels(i)
                )));
            }
        }
        Ok(())
    }

    /// Log-energy of a validated assignment.
    pub fn log_energy(&self, assignment: &[usize]) -> Result<f64> {
        self.check_assignment(assignment)?;
        Ok(self.score_unchecked(assignment))
    }

    /// Log-energy without validation. Panics on out-of-range labels.
    #[inline]
    pub fn score_unchecked(&self, x: &[usize]) -> f64 {
        let mut s = self.constant;
        for (u, &l) in self.unary.iter().zip(x) {
            s += u[l];
        }
        for (t, &(i, j)) in self.pairwise.iter().zip(&self.edges) {
            s += t.get(x[i], x[j]);
        }
        s
    }

    pub fn scored(&self, assignment: Assignment) -> Result<ScoredAssignment> {
        let score = self.log_energy(&assignment)?;
        Ok(ScoredAssignment { assignment, score })
    }

    /// Same variable count and label-set sizes.
    pub fn check_same_structure(&self, other: &FactorGraph) -> Result<()> {
        if self.num_vars() != other.num_vars() {
            return Err(Error::StructureMismatch(format!(
                "{} vs {} variables",
                self.num_vars(),
                other.num_vars()
            )));
        }
        for i in 0..self.num_vars() {
            if self.num_labels(i) != other.num_labels(i) {
                return Err(Error::StructureMismatch(format!(
                    "variable {i} has {} vs {} labels",
                    self.num_labels(i),
                    other.num_labels(i)
                )));
            }
        }
        Ok(())
    }

    /// Copy with every factor set to zero.
    pub fn zeroed(&self) -> Self {
        let mut g = self.clone();
        g.unary.iter_mut().flatten().for_each(|v| *v = 0.0);
        g.pairwise
            .iter_mut()
            .for_each(|t| t.data_mut().iter_mut().for_each(|v| *v = 0.0));
        g.constant = 0.0;
        g
    }

    /// Copy with replaced factor values and identical structure.
    pub fn with_factors(
        &self,
        unary: Vec<Vec<f64>>,
        pairwise: Vec<PairTable>,
        constant: f64,
    ) -> Result<Self> {
        Self::new(
            self.label_sets.clone(),
            unary.into_iter().map(Some).collect(),
            self.edges.clone(),
            pairwise,
            constant,
        )
    }

    pub fn with_unaries(&self, unary: Vec<Vec<f64>>) -> Result<Self> {
        self.with_factors(unary, self.pairwise.clone(), self.constant)
    }

    pub fn with_constant(&self, constant: f64) -> Result<Self> {
        if !constant.is_finite() {
            return Err(Error::NonFinite("constant".into()));
        }
        let mut g = self.clone();
        g.constant = constant;
        Ok(g)
    }

    /// Negated copy: maximizing it minimizes the original score.
    pub fn negated(&self) -> Self {
        let mut g = self.clone();
        g.unary.iter_mut().flatten().for_each(|v| *v = -*v);
        g.pairwise
            .iter_mut()
            .for_each(|t| t.data_mut().iter_mut().for_each(|v| *v = -*v));
        g.constant = -g.constant;
        g
    }

    /// True when the edge set forms a forest.
    pub fn is_forest(&self) -> bool {
        let mut uf = crate::util::UnionFind::new(self.num_vars());
        self.edges.iter().all(|&(i, j)| uf.union(i, j))
    }
}

/// Incremental builder, convenient for tests and hand-written instances.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    label_sets: Vec<LabelSet>,
    unary: Vec<Option<Vec<f64>>>,
    edges: Vec<(usize, usize)>,
    pairwise: Vec<PairTable>,
    constant: f64,
    error: Option<Error>,
}

impl GraphBuilder {
    pub fn new(label_sets: Vec<LabelSet>) -> Self {
        let n = label_sets.len();
        Self {
            label_sets,
            unary: vec![None; n],
            edges: Vec::new(),
            pairwise: Vec::new(),
            constant: 0.0,
            error: None,
        }
    }

    /// `sizes[i]` anonymous labels for variable `i`.
    pub fn with_sizes(sizes: &[usize]) -> Self {
        Self::new(sizes.iter().map(|&k| LabelSet::indexed(k)).collect())
    }

    pub fn unary(mut self, var: usize, values: Vec<f64>) -> Self {
        match self.unary.get_mut(var) {
            Some(slot) => *slot = Some(values),
            None => {
                self.error.get_or_insert(Error::VariableOutOfRange {
                    var,
                    n: self.label_sets.len(),
                });
            }
        }
        self
    }

    pub fn pairwise(mut self, a: usize, b: usize, rows: Vec<Vec<f64>>) -> Self {
        match PairTable::from_rows(&rows) {
            Ok(t) => {
                self.edges.push((a, b));
                self.pairwise.push(t);
            }
            Err(e) => {
                self.error.get_or_insert(e);
            }
        }
        self
    }

    pub fn pairwise_table(mut self, a: usize, b: usize, table: PairTable) -> Self {
        self.edges.push((a, b));
        self.pairwise.push(table);
        self
    }

    pub fn constant(mut self, c: f64) -> Self {
        self.constant = c;
        self
    }

    pub fn build(self) -> Result<FactorGraph> {
        if let Some(e) = self.error {
            return Err(e);
        }
        FactorGraph::new(
            self.label_sets,
            self.unary,
            self.edges,
            self.pairwise,
            self.constant,
        )
    }
}

/// Lagrangian combination `perf + gamma * (res - target)`.
///
/// Unary and pairwise tables are combined entry-wise on the union of both
/// edge sets; a table missing from one side counts as zero.
pub fn combine_lagrangian(
    perf: &FactorGraph,
    res: &FactorGraph,
    gamma: f64,
    target: f64,
) -> Result<FactorGraph> {
    perf.check_same_structure(res)?;
    if !gamma.is_finite() || !target.is_finite() {
        return Err(Error::InvalidConfig("gamma and target must be finite".into()));
    }
    let unary: Vec<Vec<f64>> = perf
        .unaries()
        .iter()
        .zip(res.unaries())
        .map(|(p, r)| p.iter().zip(r).map(|(a, b)| a + gamma * b).collect())
        .collect();

    let mut edges = perf.edges().to_vec();
    let mut tables = perf.pairwise_tables().to_vec();
    for (e, &(i, j)) in res.edges().iter().enumerate() {
        let rt = res.pairwise(e);
        match perf.edge_between(i, j) {
            Some(pe) => {
                let t = &mut tables[pe];
                for (dst, src) in t.data_mut().iter_mut().zip(rt.data()) {
                    *dst += gamma * src;
                }
            }
            None => {
                edges.push((i, j));
                tables.push(PairTable::from_fn(rt.rows(), rt.cols(), |a, b| {
                    gamma * rt.get(a, b)
                }));
            }
        }
    }
    let constant = perf.constant() + gamma * (res.constant() - target);
    FactorGraph::new(
        perf.label_sets().to_vec(),
        unary.into_iter().map(Some).collect::<Vec<_>>(),
        edges,
        tables,
        constant,
    )
}
