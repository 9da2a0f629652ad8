//! Undirected simple graph over risk indices.
//!
//! The dynamics only ever need "who are my neighbours", so the graph stores
//! sorted adjacency lists. Node indices are positions in the owning
//! network's risk list.

use serde::{Deserialize, Serialize};

use crate::error::{CarpError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    pub fn edgeless(n: usize) -> Self {
        Graph {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from an edge list. Self loops are rejected, duplicate
    /// edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(CarpError::DimensionMismatch {
                    expected: n,
                    actual: a.max(b) + 1,
                });
            }
            if a == b {
                return Err(CarpError::InvalidPair(format!("self loop on node {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Graph { adjacency })
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let adjacency = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).collect())
            .collect();
        Graph { adjacency }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Edges as `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (a, list) in self.adjacency.iter().enumerate() {
            for &b in list {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Copy of the graph with `node` and its edges removed; indices above
    /// `node` shift down by one.
    pub fn without_node(&self, node: usize) -> Graph {
        let adjacency = self
            .adjacency
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != node)
            .map(|(_, list)| {
                list.iter()
                    .filter(|&&j| j != node)
                    .map(|&j| if j > node { j - 1 } else { j })
                    .collect()
            })
            .collect();
        Graph { adjacency }
    }

    /// Relabels nodes: new index `perm[i]` holds old node `i`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let n = self.node_count();
        let mut adjacency = vec![Vec::new(); n];
        for (i, list) in self.adjacency.iter().enumerate() {
            adjacency[perm[i]] = list.iter().map(|&j| perm[j]).collect();
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Graph { adjacency }
    }

    /// Copy with one extra edge (no-op when already present).
    pub fn with_edge(&self, a: usize, b: usize) -> Graph {
        let mut edges = self.edges();
        edges.push((a, b));
        Graph::from_edges(self.node_count(), &edges).expect("valid edge")
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            seen[start] = true;
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}
