use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::exact::triangulate::{triangulate_minfill, EliminationOrder};
use crate::graph::{Assignment, FactorGraph, ScoredAssignment};
use crate::util::{increment, UnionFind};

/// Default cap on the number of entries in any single clique table.
pub const DEFAULT_TABLE_BUDGET: u128 = 100_000_000;

/// Values within this relative distance of the optimum count as tied.
const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub sepset: Vec<usize>,
}

/// Junction tree over the maximal cliques of a chordal supergraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueTree {
    /// Sorted variable lists.
    pub cliques: Vec<Vec<usize>>,
    pub tree_edges: Vec<TreeEdge>,
    /// Clique holding each variable's unary factor.
    pub unary_home: Vec<usize>,
    /// Clique holding each graph edge's pairwise factor.
    pub edge_home: Vec<usize>,
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    small.iter().all(|v| big.binary_search(v).is_ok())
}

fn intersection(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|v| b.binary_search(v).is_ok()).collect()
}

pub fn build_clique_tree(graph: &FactorGraph, order: &EliminationOrder) -> Result<CliqueTree> {
    let n = graph.num_vars();
    if order.order.len() != n || order.elimination_cliques.len() != n {
        return Err(Error::Internal("elimination order does not cover the graph".into()));
    }
    let candidates = &order.elimination_cliques;
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    for (a, c) in candidates.iter().enumerate() {
        let dominated = candidates.iter().enumerate().any(|(b, d)| {
            b != a && d.len() >= c.len() && is_subset(c, d) && (d.len() > c.len() || b < a)
        });
        if !dominated {
            cliques.push(c.clone());
        }
    }

    // maximum-weight spanning tree on sepset sizes; zero-weight links join components
    let m = cliques.len();
    let mut links = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            links.push((intersection(&cliques[a], &cliques[b]).len(), a, b));
        }
    }
    links.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut uf = UnionFind::new(m);
    let mut tree_edges = Vec::with_capacity(m.saturating_sub(1));
    for (_, a, b) in links {
        if uf.union(a, b) {
            tree_edges.push(TreeEdge {
                a,
                b,
                sepset: intersection(&cliques[a], &cliques[b]),
            });
        }
    }

    let home = |vars: &[usize]| cliques.iter().position(|c| is_subset(vars, c));
    let mut unary_home = Vec::with_capacity(n);
    for v in 0..n {
        unary_home.push(
            home(&[v]).ok_or_else(|| Error::Internal(format!("variable {v} in no clique")))?,
        );
    }
    let mut edge_home = Vec::with_capacity(graph.num_edges());
    for &(i, j) in graph.edges() {
        edge_home.push(
            home(&[i, j]).ok_or_else(|| Error::Internal(format!("edge ({i}, {j}) in no clique")))?,
        );
    }

    let tree = CliqueTree {
        cliques,
        tree_edges,
        unary_home,
        edge_home,
    };
    tree.verify(n)?;
    Ok(tree)
}

impl CliqueTree {
    pub fn max_clique_size(&self) -> usize {
        self.cliques.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Checks connectivity, acyclicity and the running intersection property.
    pub fn verify(&self, num_vars: usize) -> Result<()> {
        let m = self.cliques.len();
        if m == 0 {
            return if num_vars == 0 {
                Ok(())
            } else {
                Err(Error::Internal("no cliques".into()))
            };
        }
        if self.tree_edges.len() != m - 1 {
            return Err(Error::Internal(format!(
                "{} tree edges for {m} cliques",
                self.tree_edges.len()
            )));
        }
        let mut uf = UnionFind::new(m);
        for e in &self.tree_edges {
            if !uf.union(e.a, e.b) {
                return Err(Error::Internal("clique tree contains a cycle".into()));
            }
        }
        // running intersection: cliques holding v induce a connected subtree
        for v in 0..num_vars {
            let holders: Vec<usize> = (0..m).filter(|&c| self.cliques[c].contains(&v)).collect();
            let mut uf = UnionFind::new(m);
            let mut joined = 0;
            for e in &self.tree_edges {
                if e.sepset.contains(&v) && uf.union(e.a, e.b) {
                    joined += 1;
                }
            }
            if holders.is_empty() || joined != holders.len() - 1 {
                return Err(Error::Internal(format!(
                    "running intersection violated for variable {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Size of the largest clique after min-fill triangulation.
pub fn clique_size(graph: &FactorGraph) -> usize {
    let order = triangulate_minfill(graph);
    order
        .elimination_cliques
        .iter()
        .map(Vec::len)
        .max()
        .unwrap_or(0)
}

struct Layout {
    radices: Vec<usize>,
    size: usize,
    /// `(tree edge, neighbor clique, per-position strides into the sepset table)`
    links: Vec<(usize, usize, Vec<usize>)>,
}

fn layouts(graph: &FactorGraph, tree: &CliqueTree) -> Vec<Layout> {
    let mut out: Vec<Layout> = tree
        .cliques
        .iter()
        .map(|c| {
            let radices: Vec<usize> = c.iter().map(|&v| graph.num_labels(v)).collect();
            let size = radices.iter().product();
            Layout {
                radices,
                size,
                links: Vec::new(),
            }
        })
        .collect();
    for (e, te) in tree.tree_edges.iter().enumerate() {
        for (me, other) in [(te.a, te.b), (te.b, te.a)] {
            let strides = sepset_strides(graph, &tree.cliques[me], &te.sepset);
            out[me].links.push((e, other, strides));
        }
    }
    out
}

fn sepset_strides(graph: &FactorGraph, clique: &[usize], sepset: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; clique.len()];
    let mut s = 1;
    for &v in sepset.iter().rev() {
        let p = clique.iter().position(|&u| u == v).expect("sepset within clique");
        strides[p] = s;
        s *= graph.num_labels(v);
    }
    strides
}

fn sep_size(graph: &FactorGraph, sepset: &[usize]) -> usize {
    sepset.iter().map(|&v| graph.num_labels(v)).product()
}

#[inline]
fn dot(x: &[usize], strides: &[usize]) -> usize {
    x.iter().zip(strides).map(|(a, b)| a * b).sum()
}

/// Calibrated max-sum beliefs of a clique tree.
#[derive(Debug, Clone)]
pub struct Calibration {
    /// Per clique, a table over its variables (first variable most significant).
    pub beliefs: Vec<Vec<f64>>,
}

impl Calibration {
    /// Maximum of each clique's belief table; all equal the MAP value once
    /// calibrated (graph constant excluded).
    pub fn clique_maxima(&self) -> Vec<f64> {
        self.beliefs
            .iter()
            .map(|b| b.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

fn potentials(
    graph: &FactorGraph,
    tree: &CliqueTree,
    layouts: &[Layout],
    clamps: &[Option<usize>],
) -> Vec<Vec<f64>> {
    let mut pots: Vec<Vec<f64>> = layouts.iter().map(|l| vec![0.0; l.size]).collect();
    let mut unaries: Vec<Vec<usize>> = vec![Vec::new(); tree.cliques.len()];
    for (v, &c) in tree.unary_home.iter().enumerate() {
        unaries[c].push(v);
    }
    let mut pairs: Vec<Vec<usize>> = vec![Vec::new(); tree.cliques.len()];
    for (e, &c) in tree.edge_home.iter().enumerate() {
        pairs[c].push(e);
    }
    for (c, vars) in tree.cliques.iter().enumerate() {
        let pos = |v: usize| vars.iter().position(|&u| u == v).expect("homed variable");
        let un: Vec<(usize, usize)> = unaries[c].iter().map(|&v| (v, pos(v))).collect();
        let pw: Vec<(usize, usize, usize)> = pairs[c]
            .iter()
            .map(|&e| {
                let (i, j) = graph.edges()[e];
                (e, pos(i), pos(j))
            })
            .collect();
        let mut x = vec![0; vars.len()];
        for slot in pots[c].iter_mut() {
            let mut s = 0.0;
            for &(v, p) in &un {
                s += match clamps[v] {
                    Some(l) if l != x[p] => f64::NEG_INFINITY,
                    _ => graph.unary(v)[x[p]],
                };
            }
            for &(e, pi, pj) in &pw {
                s += graph.pairwise(e).get(x[pi], x[pj]);
            }
            *slot = s;
            increment(&mut x, &layouts[c].radices);
        }
    }
    pots
}

/// Two-pass max-sum message passing rooted at clique 0.
fn calibrate_with(
    graph: &FactorGraph,
    tree: &CliqueTree,
    layouts: &[Layout],
    clamps: &[Option<usize>],
) -> Calibration {
    let m = tree.cliques.len();
    let pots = potentials(graph, tree, layouts, clamps);
    if m == 0 {
        return Calibration { beliefs: pots };
    }
    // messages[e][0]: a -> b, messages[e][1]: b -> a
    let mut messages: Vec<[Option<Vec<f64>>; 2]> = vec![[None, None]; tree.tree_edges.len()];
    let slot = |e: usize, from: usize| usize::from(tree.tree_edges[e].a != from);

    let mut parent = vec![usize::MAX; m];
    let mut bfs = Vec::with_capacity(m);
    let mut queue = VecDeque::from([0usize]);
    let mut seen = vec![false; m];
    seen[0] = true;
    while let Some(c) = queue.pop_front() {
        bfs.push(c);
        for &(e, other, _) in &layouts[c].links {
            if !seen[other] {
                seen[other] = true;
                parent[other] = e;
                queue.push_back(other);
            }
        }
    }

    let send = |c: usize,
                skip_edge: usize,
                messages: &[[Option<Vec<f64>>; 2]]|
     -> Vec<f64> {
        let layout = &layouts[c];
        let (_, _, out_strides) = layout
            .links
            .iter()
            .find(|l| l.0 == skip_edge)
            .expect("edge incident to clique");
        let mut out = vec![f64::NEG_INFINITY; sep_size(graph, &tree.tree_edges[skip_edge].sepset)];
        let incoming: Vec<(&[f64], &[usize])> = layout
            .links
            .iter()
            .filter(|l| l.0 != skip_edge)
            .map(|(e, other, strides)| {
                let msg = messages[*e][slot(*e, *other)]
                    .as_deref()
                    .expect("message scheduled before use");
                (msg, strides.as_slice())
            })
            .collect();
        let mut x = vec![0; layout.radices.len()];
        for &p in &pots[c] {
            let mut v = p;
            for (msg, strides) in &incoming {
                v += msg[dot(&x, strides)];
            }
            let o = &mut out[dot(&x, out_strides)];
            if v > *o {
                *o = v;
            }
            increment(&mut x, &layout.radices);
        }
        out
    };

    for &c in bfs.iter().rev() {
        if c != 0 {
            let e = parent[c];
            let msg = send(c, e, &messages);
            messages[e][slot(e, c)] = Some(msg);
        }
    }
    for &c in &bfs {
        for &(e, _, _) in &layouts[c].links {
            if e != parent[c] {
                let msg = send(c, e, &messages);
                messages[e][slot(e, c)] = Some(msg);
            }
        }
    }

    let beliefs = (0..m)
        .map(|c| {
            let layout = &layouts[c];
            let mut x = vec![0; layout.radices.len()];
            pots[c]
                .iter()
                .map(|&p| {
                    let mut v = p;
                    for (e, other, strides) in &layout.links {
                        let msg = messages[*e][slot(*e, *other)].as_deref().expect("calibrated");
                        v += msg[dot(&x, strides)];
                    }
                    increment(&mut x, &layout.radices);
                    v
                })
                .collect()
        })
        .collect();
    Calibration { beliefs }
}

fn check_budget(graph: &FactorGraph, tree: &CliqueTree, budget: u128) -> Result<()> {
    for c in &tree.cliques {
        let entries = c
            .iter()
            .fold(1u128, |acc, &v| acc.saturating_mul(graph.num_labels(v) as u128));
        if entries > budget {
            return Err(Error::BudgetExceeded {
                clique_size: tree.max_clique_size(),
                entries,
                budget,
            });
        }
    }
    Ok(())
}

/// Calibrates the tree without evidence.
pub fn calibrate(graph: &FactorGraph, tree: &CliqueTree) -> Result<Calibration> {
    check_budget(graph, tree, DEFAULT_TABLE_BUDGET)?;
    let layouts = layouts(graph, tree);
    Ok(calibrate_with(graph, tree, &layouts, &vec![None; graph.num_vars()]))
}

fn max_marginal(
    calibration: &Calibration,
    tree: &CliqueTree,
    layouts: &[Layout],
    graph: &FactorGraph,
    var: usize,
) -> Vec<f64> {
    let c = tree.unary_home[var];
    let p = tree.cliques[c].iter().position(|&u| u == var).expect("home clique");
    let mut mm = vec![f64::NEG_INFINITY; graph.num_labels(var)];
    let mut x = vec![0; layouts[c].radices.len()];
    for &b in &calibration.beliefs[c] {
        if b > mm[x[p]] {
            mm[x[p]] = b;
        }
        increment(&mut x, &layouts[c].radices);
    }
    mm
}

/// Exact MAP with the default table budget.
pub fn map_clique_tree(graph: &FactorGraph) -> Result<ScoredAssignment> {
    map_clique_tree_with_budget(graph, DEFAULT_TABLE_BUDGET)
}

/// Exact MAP by clique-tree max-sum.
///
/// Decoding walks the variables in index order and fixes each to the
/// smallest label whose max-marginal attains the optimum; when a variable has
/// several optimal labels the tree is recalibrated with that choice clamped,
/// so later choices stay consistent. The result is the lexicographically
/// smallest optimal assignment.
pub fn map_clique_tree_with_budget(graph: &FactorGraph, budget: u128) -> Result<ScoredAssignment> {
    let n = graph.num_vars();
    if n == 0 {
        return Ok(ScoredAssignment {
            assignment: Assignment::new(Vec::new()),
            score: graph.constant(),
        });
    }
    let order = triangulate_minfill(graph);
    let tree = build_clique_tree(graph, &order)?;
    check_budget(graph, &tree, budget)?;
    let layouts = layouts(graph, &tree);

    let decode = |always_recalibrate: bool| -> (Vec<usize>, f64) {
        let mut clamps: Vec<Option<usize>> = vec![None; n];
        let mut cal = calibrate_with(graph, &tree, &layouts, &clamps);
        let best = cal.clique_maxima()[0];
        let tol = TIE_TOL * best.abs().max(1.0);
        for v in 0..n {
            let mm = max_marginal(&cal, &tree, &layouts, graph, v);
            let top = mm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut tied = mm.iter().enumerate().filter(|(_, &s)| s >= top - tol);
            let (label, _) = tied.next().expect("a label attains the maximum");
            let several = tied.next().is_some();
            clamps[v] = Some(label);
            if (several || always_recalibrate) && v + 1 < n {
                cal = calibrate_with(graph, &tree, &layouts, &clamps);
            }
        }
        (clamps.into_iter().map(|c| c.expect("all clamped")).collect(), best)
    };

    let (x, best) = decode(false);
    let tol = TIE_TOL * best.abs().max(1.0) * n as f64;
    let score = graph.score_unchecked(&x) - graph.constant();
    let x = if score >= best - tol { x } else { decode(true).0 };
    graph.scored(Assignment::new(x))
}
