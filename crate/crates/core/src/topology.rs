//! Undirected sensing/communication graph and time-varying schedules.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blockvec::{BlockLayout, BlockVec};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// JSON description of a graph: `{"n": 3, "edges": [[0, 1], [1, 2]]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDescription {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

/// A neighbor of some robot together with the edge that joins them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub neighbor: usize,
    pub edge: usize,
}

/// Simple connected undirected graph with stable edge ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwarmGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    // Per vertex, sorted by neighbor id.
    links: Vec<Vec<Link>>,
    // Per vertex, sorted by edge id.
    incident: Vec<Vec<usize>>,
}

impl SwarmGraph {
    /// Builds a graph from unordered pairs. Edge ids follow the input order.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "graph needs at least one vertex"));
        }
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        let mut links = vec![Vec::new(); n];
        let mut incident = vec![Vec::new(); n];
        for (l, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::Index {
                    what: "vertex",
                    index: a.max(b),
                    len: n,
                });
            }
            if a == b {
                return Err(Error::invalid("edges", format!("self-loop at vertex {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::invalid(
                    "edges",
                    format!("duplicate edge ({}, {})", key.0, key.1),
                ));
            }
            normalized.push(key);
            links[a].push(Link { neighbor: b, edge: l });
            links[b].push(Link { neighbor: a, edge: l });
            incident[a].push(l);
            incident[b].push(l);
        }
        for l in &mut links {
            l.sort_by_key(|x| x.neighbor);
        }
        let g = Self {
            n,
            edges: normalized,
            links,
            incident,
        };
        if !g.is_connected() {
            return Err(Error::invalid("edges", "graph is not connected"));
        }
        Ok(g)
    }

    pub fn from_description(desc: &GraphDescription) -> Result<Self> {
        let edges: Vec<_> = desc.edges.iter().map(|e| (e[0], e[1])).collect();
        Self::new(desc.n, &edges)
    }

    pub fn to_description(&self) -> GraphDescription {
        GraphDescription {
            n: self.n,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_description(&serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_description()).expect("graph description serializes")
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::new(n, &edges)
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Endpoints `(i, j)` of edge `l`, with `i < j`.
    pub fn edge(&self, l: usize) -> (usize, usize) {
        self.edges[l]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn check_vertex(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::Index {
                what: "vertex",
                index: i,
                len: self.n,
            });
        }
        Ok(())
    }

    /// Neighbor ids of `i`, ascending.
    pub fn neighbors(&self, i: usize) -> Result<Vec<usize>> {
        Ok(self.links(i)?.iter().map(|l| l.neighbor).collect())
    }

    /// Incident edge ids of `i`, ascending.
    pub fn incident_edges(&self, i: usize) -> Result<&[usize]> {
        self.check_vertex(i)?;
        Ok(&self.incident[i])
    }

    /// Neighbors of `i` with their connecting edges, ascending by neighbor id.
    pub fn links(&self, i: usize) -> Result<&[Link]> {
        self.check_vertex(i)?;
        Ok(&self.links[i])
    }

    pub fn degree(&self, i: usize) -> usize {
        self.links[i].len()
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.n as f64
    }

    /// Adjacency entry aᵢⱼ.
    pub fn adjacency(&self, i: usize, j: usize) -> u8 {
        u8::from(self.edge_between(i, j).is_some())
    }

    pub fn edge_between(&self, i: usize, j: usize) -> Option<usize> {
        let links = self.links.get(i)?;
        links
            .binary_search_by_key(&j, |l| l.neighbor)
            .ok()
            .map(|k| links[k].edge)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for l in &self.links[v] {
                if !seen[l.neighbor] {
                    seen[l.neighbor] = true;
                    count += 1;
                    queue.push_back(l.neighbor);
                }
            }
        }
        count == self.n
    }
}

/// Result of [`random_geometric_graph`].
#[derive(Debug, Clone)]
pub struct GeometricGraph {
    pub graph: SwarmGraph,
    /// Radius actually used, after any growth needed for connectivity.
    pub radius: f64,
    pub positions: BlockVec,
}

/// Connects every pair of robots closer than `radius`. If the result is
/// disconnected the radius grows by 10% until it is connected. When no
/// positions are given, `n` points are drawn uniformly in the unit square.
pub fn random_geometric_graph(
    n: usize,
    radius: f64,
    positions: Option<&BlockVec>,
    seed: u64,
) -> Result<GeometricGraph> {
    if n < 2 {
        return Err(Error::invalid("n", format!("need at least 2 robots, got {n}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
    }
    let positions = match positions {
        Some(p) => {
            if p.num_blocks() != n {
                return Err(Error::Shape(format!(
                    "{} positions supplied for {n} robots",
                    p.num_blocks()
                )));
            }
            p.clone()
        }
        None => {
            let mut rng = rng::stream(seed, Purpose::Topology, 0);
            let data = (0..2 * n).map(|_| rng.gen::<f64>()).collect();
            BlockVec::from_flat(BlockLayout::uniform(n, 2)?, data)?
        }
    };
    let dist = pairwise_distances(&positions);
    let mut radius = radius;
    loop {
        let edges: Vec<_> = dist
            .iter()
            .filter(|&&(_, _, d)| d <= radius)
            .map(|&(i, j, _)| (i, j))
            .collect();
        match SwarmGraph::new(n, &edges) {
            Ok(graph) => {
                return Ok(GeometricGraph {
                    graph,
                    radius,
                    positions,
                })
            }
            Err(Error::InvalidParameter { .. }) => radius *= 1.1,
            Err(e) => return Err(e),
        }
    }
}

/// Radius giving exactly `round(n * mean_degree / 2)` edges on these positions.
pub fn radius_for_mean_degree(positions: &BlockVec, mean_degree: f64) -> Result<f64> {
    let n = positions.num_blocks();
    if n < 2 {
        return Err(Error::invalid("n", "need at least 2 robots"));
    }
    if !(mean_degree > 0.0) {
        return Err(Error::invalid("mean_degree", "must be positive"));
    }
    let mut d: Vec<f64> = pairwise_distances(positions)
        .into_iter()
        .map(|(_, _, d)| d)
        .collect();
    d.sort_by(f64::total_cmp);
    let target = ((n as f64 * mean_degree / 2.0).round() as usize).clamp(1, d.len());
    Ok(d[target - 1])
}

fn pairwise_distances(p: &BlockVec) -> Vec<(usize, usize, f64)> {
    let n = p.num_blocks();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = p
                .block(i)
                .iter()
                .zip(p.block(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            out.push((i, j, d));
        }
    }
    out
}

/// Piecewise-constant sequence of graphs over simulation steps.
#[derive(Debug, Clone)]
pub struct TopologySchedule {
    phases: Vec<(usize, SwarmGraph)>,
}

impl TopologySchedule {
    pub fn constant(graph: SwarmGraph) -> Self {
        Self {
            phases: vec![(0, graph)],
        }
    }

    pub fn new(phases: Vec<(usize, SwarmGraph)>) -> Result<Self> {
        match phases.first() {
            None => return Err(Error::Config("topology schedule is empty".into())),
            Some((s, _)) if *s != 0 => {
                return Err(Error::Config("first topology phase must start at step 0".into()))
            }
            _ => {}
        }
        if phases.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config(
                "topology phase start steps must be strictly increasing".into(),
            ));
        }
        let n = phases[0].1.num_vertices();
        if phases.iter().any(|(_, g)| g.num_vertices() != n) {
            return Err(Error::Config(
                "all topology phases must have the same number of robots".into(),
            ));
        }
        Ok(Self { phases })
    }

    /// Graph active at step `k`: the phase with the largest start ≤ `k`.
    pub fn at(&self, k: usize) -> &SwarmGraph {
        let idx = self.phases.partition_point(|(s, _)| *s <= k);
        &self.phases[idx - 1].1
    }

    pub fn phase_index(&self, k: usize) -> usize {
        self.phases.partition_point(|(s, _)| *s <= k) - 1
    }

    pub fn phases(&self) -> &[(usize, SwarmGraph)] {
        &self.phases
    }
}
