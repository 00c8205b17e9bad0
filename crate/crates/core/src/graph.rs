//! Weighted undirected communication graphs.
//!
//! Graphs are stored as a dense symmetric weight matrix. Hop distances
//! (diameter, max-consensus reach) only look at which weights are positive.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("weight matrix has {len} entries, expected {n}x{n}")]
    Shape { n: usize, len: usize },
    #[error("weight a[{i}][{j}] = {w} is negative or not finite")]
    BadWeight { i: usize, j: usize, w: f64 },
    #[error("weights are not symmetric at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({i}, {j}) references a node outside 0..{n}")]
    NodeOutOfRange { i: usize, j: usize, n: usize },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("max-consensus needs at least one round")]
    NoRounds,
    #[error("expected {expected} initial values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Weighted undirected graph with cached neighbor lists and hop diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    n: usize,
    weights: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    diameter: Option<usize>,
}

impl CommGraph {
    /// Builds a graph from a row-major `n*n` weight matrix.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if weights.len() != n * n {
            return Err(GraphError::Shape {
                n,
                len: weights.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[i * n + j];
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::BadWeight { i, j, w });
                }
                if i == j && w != 0.0 {
                    return Err(GraphError::SelfLoop(i));
                }
                if w != weights[j * n + i] {
                    return Err(GraphError::Asymmetric { i, j });
                }
            }
        }
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| weights[i * n + j] > 0.0).collect())
            .collect();
        let mut g = CommGraph {
            n,
            weights,
            neighbors,
            diameter: None,
        };
        g.diameter = g.compute_diameter();
        Ok(g)
    }

    /// Builds a graph from 0-indexed `(i, j, weight)` triples. Each unordered
    /// pair may appear once; weights must be positive.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut weights = vec![0.0; n * n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(GraphError::NodeOutOfRange { i, j, n });
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(GraphError::BadWeight { i, j, w });
            }
            if weights[i * n + j] != 0.0 {
                return Err(GraphError::DuplicateEdge(i, j));
            }
            weights[i * n + j] = w;
            weights[j * n + i] = w;
        }
        Self::from_weights(n, weights)
    }

    /// Path graph `0 - 1 - ... - (n-1)` with unit weights.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    /// Complete graph with unit weights.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, 1.0));
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Nodes `j` with `a_ij > 0`, in increasing order.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// `L = diag(A 1) - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut degree = 0.0;
            for &j in &self.neighbors[i] {
                let w = self.weight(i, j);
                l[(i, j)] = -w;
                degree += w;
            }
            l[(i, i)] = degree;
        }
        l
    }

    pub fn is_connected(&self) -> bool {
        self.diameter.is_some()
    }

    /// Longest shortest hop-count path. Weights are ignored.
    pub fn diameter(&self) -> Result<usize, GraphError> {
        self.diameter.ok_or(GraphError::Disconnected)
    }

    /// Hop distances from `source`; `None` for unreachable nodes.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &w in &self.neighbors[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    fn compute_diameter(&self) -> Option<usize> {
        let mut diameter = 0;
        for s in 0..self.n {
            for d in self.hop_distances(s) {
                diameter = diameter.max(d?);
            }
        }
        Some(diameter)
    }

    /// `sum_j a_ij (y_i - y_j)` for one agent, where `y` holds `n` blocks of
    /// length `dim` laid out row-major. Written into `out`.
    pub fn disagreement_into(&self, y: &[f64], dim: usize, i: usize, out: &mut [f64]) {
        out.fill(0.0);
        let yi = &y[i * dim..(i + 1) * dim];
        for &j in &self.neighbors[i] {
            let a = self.weight(i, j);
            let yj = &y[j * dim..(j + 1) * dim];
            for c in 0..dim {
                out[c] += a * (yi[c] - yj[c]);
            }
        }
    }
}

/// Runs the synchronous max-consensus recursion for `rounds` rounds.
///
/// Round 1 holds `initial`; every later round replaces each value by the
/// maximum over the node and its neighbors from the previous round. With
/// `rounds >= diameter + 1` every node ends at the global maximum.
pub fn max_consensus(
    g: &CommGraph,
    initial: &[f64],
    rounds: usize,
) -> Result<Vec<f64>, GraphError> {
    if rounds == 0 {
        return Err(GraphError::NoRounds);
    }
    if initial.len() != g.node_count() {
        return Err(GraphError::LengthMismatch {
            expected: g.node_count(),
            got: initial.len(),
        });
    }
    let mut current = initial.to_vec();
    let mut next = current.clone();
    for _ in 1..rounds {
        for (i, slot) in next.iter_mut().enumerate() {
            *slot = g
                .neighbors(i)
                .iter()
                .fold(current[i], |m, &j| m.max(current[j]));
        }
        std::mem::swap(&mut current, &mut next);
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig1() -> CommGraph {
        CommGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn laplacian_small_cases() {
        let single = CommGraph::from_weights(1, vec![0.0]).unwrap();
        assert_eq!(single.laplacian(), DMatrix::from_element(1, 1, 0.0));

        let two = CommGraph::from_edges(2, &[(0, 1, 2.5)]).unwrap();
        assert_eq!(
            two.laplacian(),
            DMatrix::from_row_slice(2, 2, &[2.5, -2.5, -2.5, 2.5])
        );
    }

    #[test]
    fn laplacian_example_graph() {
        let l = fig1().laplacian();
        let diag: Vec<f64> = (0..4).map(|i| l[(i, i)]).collect();
        assert_eq!(diag, vec![2.0, 2.0, 3.0, 1.0]);
        assert_eq!(
            l.row(3).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0, -1.0, 1.0]
        );
        for i in 0..4 {
            assert_eq!(l.row(i).sum(), 0.0);
        }
    }

    #[test]
    fn rejects_malformed_weights() {
        assert!(matches!(
            CommGraph::from_weights(2, vec![0.0, 1.0, 2.0, 0.0]),
            Err(GraphError::Asymmetric { .. })
        ));
        assert!(matches!(
            CommGraph::from_weights(2, vec![0.0, -1.0, -1.0, 0.0]),
            Err(GraphError::BadWeight { .. })
        ));
        assert!(matches!(
            CommGraph::from_weights(2, vec![1.0, 0.0, 0.0, 0.0]),
            Err(GraphError::SelfLoop(0))
        ));
        assert!(matches!(
            CommGraph::from_edges(3, &[(0, 1, 1.0), (1, 0, 1.0)]),
            Err(GraphError::DuplicateEdge(1, 0))
        ));
        assert!(matches!(
            CommGraph::from_edges(3, &[(2, 2, 1.0)]),
            Err(GraphError::SelfLoop(2))
        ));
        assert!(CommGraph::from_weights(0, vec![]).is_err());
    }

    #[test]
    fn connectivity() {
        assert!(CommGraph::from_weights(1, vec![0.0])
            .unwrap()
            .is_connected());
        assert!(!CommGraph::from_edges(2, &[]).unwrap().is_connected());
        assert!(fig1().is_connected());
    }

    #[test]
    fn diameters() {
        assert_eq!(CommGraph::complete(3).unwrap().diameter(), Ok(1));
        assert_eq!(CommGraph::path(3).unwrap().diameter(), Ok(2));
        assert_eq!(fig1().diameter(), Ok(2));
        assert_eq!(
            CommGraph::from_edges(3, &[(0, 1, 1.0)]).unwrap().diameter(),
            Err(GraphError::Disconnected)
        );
    }

    #[test]
    fn max_consensus_examples() {
        let g = fig1();
        assert_eq!(
            max_consensus(&g, &[5.0, 1.0, 1.0, 1.0], 3).unwrap(),
            vec![5.0; 4]
        );
        assert_eq!(max_consensus(&g, &[2.0; 4], 7).unwrap(), vec![2.0; 4]);
        let path = CommGraph::path(3).unwrap();
        assert_eq!(
            max_consensus(&path, &[0.0, 0.0, 9.0], 2).unwrap(),
            vec![0.0, 9.0, 9.0]
        );
        assert_eq!(
            max_consensus(&path, &[0.0; 3], 0),
            Err(GraphError::NoRounds)
        );
    }

    fn random_graph() -> impl Strategy<Value = CommGraph> {
        (1usize..=8)
            .prop_flat_map(|n| (Just(n), proptest::collection::vec(0.0f64..2.0, n * n)))
            .prop_map(|(n, raw)| {
                let mut w = vec![0.0; n * n];
                for i in 0..n {
                    for j in i + 1..n {
                        // Roughly half the pairs become edges.
                        let a = if raw[i * n + j] > 1.0 {
                            raw[i * n + j]
                        } else {
                            0.0
                        };
                        w[i * n + j] = a;
                        w[j * n + i] = a;
                    }
                }
                CommGraph::from_weights(n, w).unwrap()
            })
    }

    proptest! {
        #[test]
        fn laplacian_quadratic_form(g in random_graph(), seed in proptest::collection::vec(-5.0f64..5.0, 8)) {
            let n = g.node_count();
            let x = nalgebra::DVector::from_column_slice(&seed[..n]);
            let l = g.laplacian();
            let q = x.dot(&(&l * &x));
            prop_assert!(q >= -1e-12);
            let ones = nalgebra::DVector::from_element(n, 1.0);
            prop_assert!((&l * ones).amax() < 1e-12);
        }

        #[test]
        fn quadratic_form_vanishes_on_componentwise_constants(g in random_graph(), levels in proptest::collection::vec(-5.0f64..5.0, 8)) {
            // Assign each node the level of the smallest node in its component.
            let n = g.node_count();
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    let root = g.hop_distances(i).iter().position(Option::is_some).unwrap();
                    levels[root]
                })
                .collect();
            let x = nalgebra::DVector::from_vec(x);
            prop_assert!(x.dot(&(g.laplacian() * &x)).abs() < 1e-9);
        }

        #[test]
        fn max_consensus_is_monotone_in_rounds(g in random_graph(), init in proptest::collection::vec(-10.0f64..10.0, 8), rounds in 1usize..6) {
            let n = g.node_count();
            let a = max_consensus(&g, &init[..n], rounds).unwrap();
            let b = max_consensus(&g, &init[..n], rounds + 1).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(y >= x);
            }
        }

        #[test]
        fn max_consensus_reaches_global_max(g in random_graph(), init in proptest::collection::vec(-10.0f64..10.0, 8)) {
            prop_assume!(g.is_connected());
            let n = g.node_count();
            let top = init[..n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let out = max_consensus(&g, &init[..n], g.diameter().unwrap() + 1).unwrap();
            prop_assert!(out.iter().all(|&v| v == top));
        }
    }
}
