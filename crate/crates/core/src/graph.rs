//! Random geometric graphs on the unit square.
//!
//! Two nodes are adjacent when their Euclidean distance is at most the
//! transmission radius. There is no wraparound at the square's borders.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Immutable connectivity graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    radius: f64,
    positions: Vec<Point>,
    adjacency: Vec<Vec<usize>>,
}

/// Transmission radius `coeff / sqrt(n)`.
pub fn radius_for(n: usize, coeff: f64) -> f64 {
    coeff / (n as f64).sqrt()
}

impl Graph {
    /// Builds the graph induced by `radius` over fixed positions.
    pub fn from_positions(positions: Vec<Point>, radius: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("graph needs at least one node"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!("radius must be positive, got {radius}")));
        }
        if let Some(p) = positions
            .iter()
            .find(|p| !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y))
        {
            return Err(Error::invalid(format!("position ({}, {}) outside the unit square", p.x, p.y)));
        }
        let adjacency = grid_adjacency(&positions, radius);
        Ok(Graph { radius, positions, adjacency })
    }

    /// Graph with explicit edges and no geometry, for hand-built topologies.
    /// Positions are placed on a diagonal and carry no meaning; radius is 0.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid(format!("edge ({u}, {v}) out of range for n={n}")));
            }
            if u == v {
                return Err(Error::invalid(format!("self-edge at {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let positions = (0..n)
            .map(|i| {
                let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                Point::new(t, t)
            })
            .collect();
        Ok(Graph { radius: 0.0, positions, adjacency })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Nodes at hop distance at most `hops` from `center`, in ascending order.
    pub fn ball(&self, center: usize, hops: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        let mut queue = VecDeque::from([center]);
        dist[center] = 0;
        while let Some(u) = queue.pop_front() {
            if dist[u] == hops {
                continue;
            }
            for &v in self.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (0..self.n()).filter(|&v| dist[v] != usize::MAX).collect()
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            n: self.n(),
            radius: self.radius,
            positions: self.positions.iter().map(|p| [p.x, p.y]).collect(),
            edges: self.edges().map(|(u, v)| [u, v]).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("graph serialization cannot fail")
    }

    /// Rebuilds a graph from its file form. The edge list must match the
    /// distance rule applied to the stored positions.
    pub fn from_file(file: &GraphFile) -> Result<Self> {
        if file.positions.len() != file.n {
            return Err(Error::Format(format!(
                "n={} but {} positions",
                file.n,
                file.positions.len()
            )));
        }
        let positions = file.positions.iter().map(|p| Point::new(p[0], p[1])).collect();
        let g = Graph::from_positions(positions, file.radius)?;
        let stored: Vec<(usize, usize)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut sorted = stored.clone();
        sorted.sort_unstable();
        if sorted != g.edges().collect::<Vec<_>>() {
            return Err(Error::Format("edge list disagrees with positions and radius".into()));
        }
        Ok(g)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Graph::from_file(&file)
    }
}

/// On-disk graph layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub radius: f64,
    pub positions: Vec<[f64; 2]>,
    pub edges: Vec<[usize; 2]>,
}

// Bucket nodes into cells of side >= radius so only the 3x3 block around a
// cell needs a distance check.
fn grid_adjacency(positions: &[Point], radius: f64) -> Vec<Vec<usize>> {
    let n = positions.len();
    let cells = ((0.999_999 / radius).floor() as usize).clamp(1, 1024);
    let cell_of = |c: f64| ((c * cells as f64) as usize).min(cells - 1);
    let mut buckets = vec![Vec::new(); cells * cells];
    for (i, p) in positions.iter().enumerate() {
        buckets[cell_of(p.y) * cells + cell_of(p.x)].push(i);
    }
    let r2 = radius * radius;
    let mut adjacency = vec![Vec::new(); n];
    for (u, p) in positions.iter().enumerate() {
        let (cx, cy) = (cell_of(p.x), cell_of(p.y));
        for gy in cy.saturating_sub(1)..=(cy + 1).min(cells - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(cells - 1) {
                for &v in &buckets[gy * cells + gx] {
                    if v != u && p.dist2(&positions[v]) <= r2 {
                        adjacency[u].push(v);
                    }
                }
            }
        }
        adjacency[u].sort_unstable();
    }
    adjacency
}

/// Draws `n` uniform points in the unit square from `seed` and connects every
/// pair within `radius`.
pub fn generate_rgg(n: usize, radius: f64, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    let mut rng = rng::stream(seed, 0);
    let positions = (0..n).map(|_| Point::new(rng.gen::<f64>(), rng.gen::<f64>())).collect();
    Graph::from_positions(positions, radius)
}

/// Breadth-first search from node 0 reaches every node.
pub fn is_connected(g: &Graph) -> bool {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for &v in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                reached += 1;
                queue.push_back(v);
            }
        }
    }
    reached == n
}

/// Rejection-samples `generate_rgg` over `seed, seed + 1, ...` until the draw
/// is connected.
pub fn generate_connected_rgg(n: usize, radius: f64, seed: u64, max_retries: u32) -> Result<Graph> {
    if max_retries == 0 {
        return Err(Error::invalid("max_retries must be positive"));
    }
    for attempt in 0..max_retries {
        let g = generate_rgg(n, radius, seed.wrapping_add(attempt as u64))?;
        if is_connected(&g) {
            return Ok(g);
        }
    }
    Err(Error::ConnectivityBudgetExhausted { n, radius, attempts: max_retries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_adjacency(g: &Graph) -> Vec<Vec<usize>> {
        let r2 = g.radius() * g.radius();
        let pos = g.positions();
        (0..g.n())
            .map(|u| (0..g.n()).filter(|&v| v != u && pos[u].dist2(&pos[v]) <= r2).collect())
            .collect()
    }

    #[test]
    fn single_node_has_no_edges() {
        let g = generate_rgg(1, 0.2, 7).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.edge_count(), 0);
        assert!(is_connected(&g));
    }

    #[test]
    fn radius_beyond_diagonal_gives_complete_pair() {
        for seed in 0..20 {
            let g = generate_rgg(2, 1.5, seed).unwrap();
            assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_rgg(0, 0.2, 1).is_err());
        assert!(generate_rgg(5, 0.0, 1).is_err());
        assert!(generate_rgg(5, -1.0, 1).is_err());
    }

    #[test]
    fn connectivity_of_small_graphs() {
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(is_connected(&tri));
        let pair = Graph::from_edges(2, &[]).unwrap();
        assert!(!is_connected(&pair));
        let path = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(is_connected(&path));
    }

    #[test]
    fn tie_at_radius_is_an_edge() {
        let g = Graph::from_positions(vec![Point::new(0.0, 0.0), Point::new(0.5, 0.0)], 0.5).unwrap();
        assert!(g.has_edge(0, 1));
    }

    #[test]
    fn grid_matches_brute_force() {
        for (n, coeff, seed) in [(100, 2.0, 1), (300, 1.5, 2), (50, 4.0, 3), (40, 0.3, 4), (10, 20.0, 5)] {
            let g = generate_rgg(n, radius_for(n, coeff), seed).unwrap();
            assert_eq!(g.adjacency, brute_force_adjacency(&g));
        }
    }

    #[test]
    fn connected_budget_is_enforced() {
        let g = generate_connected_rgg(1, 0.01, 3, 1).unwrap();
        assert_eq!(g.n(), 1);
        let g = generate_connected_rgg(100, 0.2, 1, 100).unwrap();
        assert!(is_connected(&g));
        let err = generate_connected_rgg(100, 0.01, 1, 5).unwrap_err();
        assert!(matches!(err, Error::ConnectivityBudgetExhausted { attempts: 5, .. }));
    }

    #[test]
    fn ball_hops() {
        let path = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        assert_eq!(path.ball(0, 2), vec![0, 1, 2]);
        assert_eq!(path.ball(3, 1), vec![2, 3, 4]);
        assert_eq!(path.ball(3, 0), vec![3]);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let g = generate_rgg(30, 0.3, 11).unwrap();
        let text = g.to_json();
        assert_eq!(Graph::from_json(&text).unwrap(), g);
        let mut file = g.to_file();
        file.edges.pop();
        assert!(matches!(Graph::from_file(&file), Err(Error::Format(_))));
    }
}
