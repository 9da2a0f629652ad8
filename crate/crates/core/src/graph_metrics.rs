//! Structural statistics of a risk network.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CarpError, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkProperties {
    pub node_count: usize,
    pub edge_count: usize,
    pub density: f64,
    pub average_degree: f64,
    /// Pearson correlation of degrees at either end of an edge; `None` when
    /// there are no edges or every edge joins equal degrees.
    pub degree_assortativity: Option<f64>,
    /// Nodes of degree below two contribute zero.
    pub average_clustering: f64,
    /// Over the largest connected component.
    pub diameter: usize,
    pub average_shortest_path: f64,
    pub max_clique_size: usize,
    pub connected: bool,
    pub largest_component_size: usize,
}

pub fn compute_properties(graph: &Graph) -> Result<NetworkProperties> {
    let n = graph.node_count();
    if n == 0 {
        return Err(CarpError::EmptyNetwork);
    }
    let e = graph.edge_count();
    let density = if n > 1 {
        2.0 * e as f64 / (n as f64 * (n as f64 - 1.0))
    } else {
        0.0
    };
    let components = graph.components();
    // first of the largest in smallest-member order
    let largest = components
        .iter()
        .fold(&components[0], |best, c| if c.len() > best.len() { c } else { best });
    let (diameter, average_shortest_path) = path_metrics(graph, largest);
    Ok(NetworkProperties {
        node_count: n,
        edge_count: e,
        density,
        average_degree: 2.0 * e as f64 / n as f64,
        degree_assortativity: degree_assortativity(graph),
        average_clustering: (0..n).map(|i| local_clustering(graph, i)).sum::<f64>() / n as f64,
        diameter,
        average_shortest_path,
        max_clique_size: max_clique_size(graph),
        connected: components.len() == 1,
        largest_component_size: largest.len(),
    })
}

pub fn degree_assortativity(graph: &Graph) -> Option<f64> {
    let edges = graph.edges();
    if edges.is_empty() {
        return None;
    }
    let deg = graph.degrees();
    // each edge counted in both orientations, so both marginals coincide
    let m = 2.0 * edges.len() as f64;
    let mean = edges.iter().map(|&(a, b)| (deg[a] + deg[b]) as f64).sum::<f64>() / m;
    let mut var = 0.0;
    let mut cov = 0.0;
    for &(a, b) in &edges {
        let (x, y) = (deg[a] as f64 - mean, deg[b] as f64 - mean);
        var += x * x + y * y;
        cov += 2.0 * x * y;
    }
    if var == 0.0 {
        None
    } else {
        Some(cov / var)
    }
}

pub fn local_clustering(graph: &Graph, i: usize) -> f64 {
    let nb = graph.neighbors(i);
    let k = nb.len();
    if k < 2 {
        return 0.0;
    }
    let mut links = 0usize;
    for (x, &a) in nb.iter().enumerate() {
        for &b in &nb[x + 1..] {
            if graph.has_edge(a, b) {
                links += 1;
            }
        }
    }
    2.0 * links as f64 / (k * (k - 1)) as f64
}

fn bfs_distances(graph: &Graph, source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; graph.node_count()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].expect("queued nodes have a distance");
        for &v in graph.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Diameter and mean distance over ordered pairs of distinct nodes in
/// `component`.
fn path_metrics(graph: &Graph, component: &[usize]) -> (usize, f64) {
    if component.len() < 2 {
        return (0, 0.0);
    }
    let per_source: Vec<(usize, usize)> = component
        .par_iter()
        .map(|&s| {
            let dist = bfs_distances(graph, s);
            component
                .iter()
                .filter_map(|&t| dist[t])
                .fold((0, 0), |(mx, sum), d| (mx.max(d), sum + d))
        })
        .collect();
    let diameter = per_source.iter().map(|p| p.0).max().unwrap_or(0);
    let total: usize = per_source.iter().map(|p| p.1).sum();
    let pairs = component.len() * (component.len() - 1);
    (diameter, total as f64 / pairs as f64)
}

/// Exact maximum clique size by Bron–Kerbosch with pivoting and a size
/// bound.
pub fn max_clique_size(graph: &Graph) -> usize {
    let n = graph.node_count();
    let mut best = usize::from(n > 0);
    let candidates: Vec<usize> = (0..n).collect();
    expand(graph, 0, candidates, Vec::new(), &mut best);
    best
}

fn expand(graph: &Graph, size: usize, p: Vec<usize>, x: Vec<usize>, best: &mut usize) {
    if p.is_empty() {
        if x.is_empty() {
            *best = (*best).max(size);
        }
        return;
    }
    if size + p.len() <= *best {
        return;
    }
    let pivot = p
        .iter()
        .chain(&x)
        .copied()
        .max_by_key(|&u| p.iter().filter(|&&v| graph.has_edge(u, v)).count())
        .expect("p is non-empty");
    let branch: Vec<usize> = p.iter().copied().filter(|&v| !graph.has_edge(pivot, v)).collect();
    let mut p = p;
    let mut x = x;
    for v in branch {
        let np = p.iter().copied().filter(|&w| graph.has_edge(v, w)).collect();
        let nx = x.iter().copied().filter(|&w| graph.has_edge(v, w)).collect();
        expand(graph, size + 1, np, nx, best);
        p.retain(|&w| w != v);
        x.push(v);
        if size + p.len() <= *best {
            return;
        }
    }
}
