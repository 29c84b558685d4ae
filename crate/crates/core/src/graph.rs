//! Finite simple graphs and balls in their universal covers.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Adjacency structure shared by base graphs and their coverings.
///
/// Edges are stored with the smaller endpoint first. `incident[v]` lists
/// `(neighbor, edge index)` pairs in insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    edges: Vec<(usize, usize)>,
    incident: Vec<Vec<(usize, usize)>>,
}

impl Adjacency {
    /// Builds an adjacency without any validation beyond index bounds.
    pub(crate) fn from_edges_unchecked(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut incident = vec![Vec::new(); n];
        for (i, &(u, v)) in edges.iter().enumerate() {
            incident[u].push((v, i));
            incident[v].push((u, i));
        }
        Adjacency { edges, incident }
    }

    pub fn num_vertices(&self) -> usize {
        self.incident.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn incident(&self, v: usize) -> &[(usize, usize)] {
        &self.incident[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incident[v].len()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.incident[v].iter().map(|&(w, _)| w)
    }

    fn components(&self) -> usize {
        let n = self.num_vertices();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for w in self.neighbors(u) {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        count
    }
}

/// Anything that exposes a finite simple adjacency structure.
pub trait Topology {
    fn adjacency(&self) -> &Adjacency;

    fn num_vertices(&self) -> usize {
        self.adjacency().num_vertices()
    }

    fn num_edges(&self) -> usize {
        self.adjacency().edges().len()
    }

    fn edges(&self) -> &[(usize, usize)] {
        self.adjacency().edges()
    }

    fn incident(&self, v: usize) -> &[(usize, usize)] {
        self.adjacency().incident(v)
    }

    fn degree(&self, v: usize) -> usize {
        self.adjacency().degree(v)
    }

    /// Index of the edge `{u, v}`, if present.
    fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.incident(u)
            .iter()
            .find(|&&(w, _)| w == v)
            .map(|&(_, e)| e)
    }

    /// The common degree if every vertex has the same degree.
    fn regular_degree(&self) -> Option<usize> {
        let d = self.degree(0);
        (0..self.num_vertices())
            .all(|v| self.degree(v) == d)
            .then_some(d)
    }
}

impl Topology for Adjacency {
    fn adjacency(&self) -> &Adjacency {
        self
    }
}

/// Finite, simple, connected undirected graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Adjacency,
}

impl Topology for Graph {
    fn adjacency(&self) -> &Adjacency {
        &self.adj
    }
}

impl Graph {
    /// Validates an edge list over vertex ids `0..n` and builds the graph.
    ///
    /// Edges are stored in the given order, each oriented smaller id first.
    pub fn from_edges(edge_list: &[(usize, usize)]) -> Result<Graph> {
        if edge_list.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let mut seen = HashSet::with_capacity(edge_list.len());
        let mut edges = Vec::with_capacity(edge_list.len());
        let mut n = 0;
        for &(a, b) in edge_list {
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::DuplicateEdge(e.0, e.1));
            }
            n = n.max(e.1 + 1);
            edges.push(e);
        }
        let adj = Adjacency::from_edges_unchecked(n, edges);
        if let Some(missing) = (0..n).find(|&v| adj.degree(v) == 0) {
            return Err(Error::IsolatedVertex {
                expected: n,
                missing,
            });
        }
        let components = adj.components();
        if components > 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(Graph { adj })
    }

    pub fn complete(n: usize) -> Result<Graph> {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        Graph::from_edges(&edges)
    }

    pub fn cycle(n: usize) -> Result<Graph> {
        if n < 3 {
            return Err(Error::invalid("a cycle needs at least 3 vertices"));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(&edges)
    }

    pub fn path(n: usize) -> Result<Graph> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(&edges)
    }

    /// The Petersen graph: outer 5-cycle, inner pentagram, five spokes.
    pub fn petersen() -> Graph {
        let mut edges = Vec::with_capacity(15);
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
            edges.push((i, i + 5));
        }
        Graph::from_edges(&edges).expect("petersen graph is valid")
    }

    pub fn is_tree(&self) -> bool {
        self.num_edges() + 1 == self.num_vertices()
    }

    /// Parses `u v` lines; `#` starts a comment.
    pub fn parse_edge_list(text: &str) -> Result<Graph> {
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            edges.push(parse_pair(line, i + 1)?);
        }
        Graph::from_edges(&edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(u, v) in self.edges() {
            writeln!(out, "{u} {v}").unwrap();
        }
        out
    }
}

pub(crate) fn strip_comment(raw: &str) -> &str {
    raw.split('#').next().unwrap_or("").trim()
}

pub(crate) fn parse_pair(line: &str, lineno: usize) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace();
    let mut next = || -> Result<usize> {
        it.next()
            .ok_or_else(|| Error::parse(lineno, "expected two vertex ids"))?
            .parse()
            .map_err(|e| Error::parse(lineno, format!("{e}")))
    };
    let pair = (next()?, next()?);
    if it.next().is_some() {
        return Err(Error::parse(lineno, "trailing tokens after edge"));
    }
    Ok(pair)
}

/// A radius-`R` ball around the trivial path in the universal cover.
///
/// Vertex 0 is the root; every other vertex is a non-backtracking path,
/// with `parent` the path shortened by one step. Vertices are listed in
/// breadth-first order, so `parent[i] < i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedBall {
    pub radius: usize,
    pub parent: Vec<Option<usize>>,
    pub depth: Vec<usize>,
    /// Endpoint of each path in the base graph.
    pub projection: Vec<usize>,
}

impl RootedBall {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    /// Parent→child edges of the ball.
    pub fn tree_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (p, c)))
    }
}

/// Enumerates non-backtracking paths of length at most `radius` from `root`.
pub fn universal_cover_ball<G: Topology + ?Sized>(
    g: &G,
    root: usize,
    radius: usize,
) -> Result<RootedBall> {
    let n = g.num_vertices();
    if root >= n {
        return Err(Error::InvalidVertex {
            vertex: root,
            len: n,
        });
    }
    let mut ball = RootedBall {
        radius,
        parent: vec![None],
        depth: vec![0],
        projection: vec![root],
    };
    let mut frontier_start = 0;
    for depth in 1..=radius {
        let frontier_end = ball.len();
        for node in frontier_start..frontier_end {
            let end = ball.projection[node];
            let prev = ball.parent[node].map(|p| ball.projection[p]);
            for (w, _) in g.incident(end) {
                if Some(*w) == prev {
                    continue;
                }
                ball.parent.push(Some(node));
                ball.depth.push(depth);
                ball.projection.push(*w);
            }
        }
        frontier_start = frontier_end;
    }
    Ok(ball)
}

/// Number of vertices of the radius-`radius` universal-cover ball at each
/// vertex, computed by counting non-backtracking paths.
pub fn universal_ball_sizes<G: Topology + ?Sized>(g: &G, radius: usize) -> Vec<usize> {
    // paths[(v, prev)] counts non-backtracking paths ending at v coming from prev
    (0..g.num_vertices())
        .map(|root| {
            let mut total = 1usize;
            let mut layer: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 1)];
            for _ in 0..radius {
                let mut next: Vec<(usize, Option<usize>, usize)> = Vec::new();
                for &(v, prev, mult) in &layer {
                    for &(w, _) in g.incident(v) {
                        if Some(w) == prev {
                            continue;
                        }
                        match next.iter_mut().find(|t| t.0 == w && t.1 == Some(v)) {
                            Some(t) => t.2 += mult,
                            None => next.push((w, Some(v), mult)),
                        }
                    }
                }
                total += next.iter().map(|t| t.2).sum::<usize>();
                layer = next;
            }
            total
        })
        .collect()
}
