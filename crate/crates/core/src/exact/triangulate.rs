use std::collections::BTreeSet;

use crate::graph::FactorGraph;

/// Elimination ordering produced by greedy triangulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminationOrder {
    pub order: Vec<usize>,
    /// Edges added while eliminating, each with the smaller index first.
    pub fill_edges: Vec<(usize, usize)>,
    /// `{v} ∪ remaining neighbors of v` at the moment `v` was eliminated.
    pub elimination_cliques: Vec<Vec<usize>>,
}

fn fill_count(adj: &[BTreeSet<usize>], v: usize) -> usize {
    let nb: Vec<usize> = adj[v].iter().copied().collect();
    let mut fill = 0;
    for (a, &x) in nb.iter().enumerate() {
        for &y in &nb[a + 1..] {
            if !adj[x].contains(&y) {
                fill += 1;
            }
        }
    }
    fill
}

/// Min-fill elimination: repeatedly remove the variable whose elimination
/// adds the fewest fill edges, smallest index first on ties.
pub fn triangulate_minfill(graph: &FactorGraph) -> EliminationOrder {
    let n = graph.num_vars();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(i, j) in graph.edges() {
        adj[i].insert(j);
        adj[j].insert(i);
    }
    let mut alive = vec![true; n];
    let mut fill_score: Vec<usize> = (0..n).map(|v| fill_count(&adj, v)).collect();

    let mut order = Vec::with_capacity(n);
    let mut fill_edges = Vec::new();
    let mut cliques = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| (fill_score[v], v))
            .expect("a live variable remains");
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        for (a, &x) in nb.iter().enumerate() {
            for &y in &nb[a + 1..] {
                if adj[x].insert(y) {
                    adj[y].insert(x);
                    fill_edges.push((x.min(y), x.max(y)));
                }
            }
        }
        for &x in &nb {
            adj[x].remove(&v);
        }
        adj[v].clear();
        alive[v] = false;
        let mut clique = nb.clone();
        clique.push(v);
        clique.sort_unstable();
        cliques.push(clique);
        order.push(v);

        // only vertices within distance two of v can change their fill count
        let mut touched: BTreeSet<usize> = nb.iter().copied().collect();
        for &x in &nb {
            touched.extend(adj[x].iter().copied());
        }
        for u in touched {
            fill_score[u] = fill_count(&adj, u);
        }
    }
    EliminationOrder {
        order,
        fill_edges,
        elimination_cliques: cliques,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    pub(crate) fn structure(n: usize, edges: &[(usize, usize)]) -> FactorGraph {
        let mut b = GraphBuilder::with_sizes(&vec![2; n]);
        for &(i, j) in edges {
            b = b.pairwise(i, j, vec![vec![0.0; 2]; 2]);
        }
        b.build().unwrap()
    }

    #[test]
    fn chain_needs_no_fill() {
        let g = structure(4, &[(0, 1), (1, 2), (2, 3)]);
        let o = triangulate_minfill(&g);
        assert!(o.fill_edges.is_empty());
        let mut sorted = o.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn four_cycle_needs_one_chord() {
        let g = structure(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let o = triangulate_minfill(&g);
        assert_eq!(o.fill_edges.len(), 1);
        // eliminating 0 first joins its neighbors 1 and 3
        assert_eq!(o.fill_edges, vec![(1, 3)]);
    }

    #[test]
    fn complete_graph_needs_no_fill() {
        let g = structure(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert!(triangulate_minfill(&g).fill_edges.is_empty());
    }

    #[test]
    fn fill_edges_are_new() {
        let g = structure(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)]);
        let o = triangulate_minfill(&g);
        for e in &o.fill_edges {
            assert!(g.edge_between(e.0, e.1).is_none());
        }
    }
}
