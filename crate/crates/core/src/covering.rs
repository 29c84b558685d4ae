//! N-fold coverings of a base graph, uniform random lifts and niceness audits.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{parse_pair, strip_comment, universal_ball_sizes, Adjacency, Graph, Topology};

/// Seeded generator used for every random construction in the crate.
///
/// ChaCha8 keyed by `seed_from_u64`, which is specified independently of
/// platform word size and endianness.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An N-fold covering of a base graph.
///
/// Cover vertex `(i, v)` has id `v * N + i`. For the base edge `e = {u, v}`
/// with `u < v`, the lifted edge with index `e * N + i` joins `(i, u)` and
/// `(σ_e(i), v)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NFoldCovering {
    base: Graph,
    fold: usize,
    perms: Vec<Vec<usize>>,
    adj: Adjacency,
}

impl Topology for NFoldCovering {
    fn adjacency(&self) -> &Adjacency {
        &self.adj
    }
}

impl NFoldCovering {
    /// Builds the covering from one permutation of `0..fold` per base edge.
    pub fn from_permutations(base: Graph, fold: usize, perms: Vec<Vec<usize>>) -> Result<Self> {
        if fold == 0 {
            return Err(Error::invalid("fold count must be at least 1"));
        }
        if perms.len() != base.num_edges() {
            return Err(Error::invalid(format!(
                "expected {} permutations, got {}",
                base.num_edges(),
                perms.len()
            )));
        }
        for (e, p) in perms.iter().enumerate() {
            let mut hit = vec![false; fold];
            if p.len() != fold
                || p.iter()
                    .any(|&x| x >= fold || std::mem::replace(&mut hit[x], true))
            {
                return Err(Error::invalid(format!(
                    "permutation for edge {e} is not a permutation of 0..{fold}"
                )));
            }
        }
        let mut edges = Vec::with_capacity(base.num_edges() * fold);
        for (&(u, v), p) in base.edges().iter().zip(&perms) {
            for (i, &j) in p.iter().enumerate() {
                edges.push((u * fold + i, v * fold + j));
            }
        }
        let adj = Adjacency::from_edges_unchecked(base.num_vertices() * fold, edges);
        Ok(NFoldCovering {
            base,
            fold,
            perms,
            adj,
        })
    }

    pub fn base(&self) -> &Graph {
        &self.base
    }

    pub fn fold(&self) -> usize {
        self.fold
    }

    pub fn permutation(&self, base_edge: usize) -> &[usize] {
        &self.perms[base_edge]
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.perms
    }

    /// Id of the cover vertex `(i, v)`.
    pub fn vertex(&self, i: usize, v: usize) -> usize {
        v * self.fold + i
    }

    /// The covering map on vertices.
    pub fn project(&self, x: usize) -> usize {
        x / self.fold
    }

    pub fn fiber_index(&self, x: usize) -> usize {
        x % self.fold
    }

    /// The base edge lying under a lifted edge.
    pub fn project_edge(&self, lifted: usize) -> usize {
        lifted / self.fold
    }

    /// Ids of the fiber over base vertex `v`.
    pub fn fiber(&self, v: usize) -> std::ops::Range<usize> {
        v * self.fold..(v + 1) * self.fold
    }

    /// Lifted edge indices over base edge `e`.
    pub fn edge_fiber(&self, e: usize) -> std::ops::Range<usize> {
        e * self.fold..(e + 1) * self.fold
    }

    /// Serializes as `fold N`, the base edge list, then one `perm` line per
    /// base edge in edge order.
    pub fn to_text(&self) -> String {
        let mut out = format!("fold {}\n", self.fold);
        out.push_str(&self.base.to_edge_list());
        for p in &self.perms {
            out.push_str("perm");
            for x in p {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fold = None;
        let mut edges = Vec::new();
        let mut perms = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            if let Some(rest) = line.strip_prefix("fold") {
                let n = rest
                    .trim()
                    .parse()
                    .map_err(|e| Error::parse(lineno, format!("{e}")))?;
                fold = Some(n);
            } else if let Some(rest) = line.strip_prefix("perm") {
                let p = rest
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|e| Error::parse(lineno, format!("{e}"))))
                    .collect::<Result<Vec<usize>>>()?;
                perms.push(p);
            } else {
                edges.push(parse_pair(line, lineno)?);
            }
        }
        let fold = fold.ok_or_else(|| Error::parse(0, "missing `fold` line"))?;
        NFoldCovering::from_permutations(Graph::from_edges(&edges)?, fold, perms)
    }
}

/// Fisher–Yates shuffle of the identity, drawing `j` uniform on `0..=i` for
/// `i = n-1, ..., 1`.
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Uniform random N-fold covering: an independent uniform matching per base
/// edge, drawn in edge order from one seeded stream.
pub fn random_covering(g: &Graph, fold: usize, seed: u64) -> Result<NFoldCovering> {
    let mut rng = seeded_rng(seed);
    let perms = (0..g.num_edges())
        .map(|_| random_permutation(fold, &mut rng))
        .collect();
    NFoldCovering::from_permutations(g.clone(), fold, perms)
}

/// Per-vertex ball cardinalities in the cover, by breadth-first search.
pub(crate) fn cover_ball_sizes(c: &NFoldCovering, radius: usize) -> Vec<usize> {
    let n = c.num_vertices();
    let mut stamp = vec![usize::MAX; n];
    let mut layer = Vec::new();
    let mut next = Vec::new();
    (0..n)
        .map(|s| {
            stamp[s] = s;
            layer.clear();
            layer.push(s);
            let mut size = 1;
            for _ in 0..radius {
                next.clear();
                for &x in &layer {
                    for &(y, _) in c.incident(x) {
                        if stamp[y] != s {
                            stamp[y] = s;
                            next.push(y);
                        }
                    }
                }
                size += next.len();
                std::mem::swap(&mut layer, &mut next);
            }
            size
        })
        .collect()
}

/// Which cover vertices are `radius`-nice.
///
/// A vertex is nice iff its ball in the cover has as many vertices as the
/// universal-cover ball over its projection; the covering map from the
/// latter is always onto, so equal size means bijective.
pub fn nice_vertices(c: &NFoldCovering, radius: usize) -> Vec<bool> {
    let reference = universal_ball_sizes(c.base(), radius);
    cover_ball_sizes(c, radius)
        .into_iter()
        .enumerate()
        .map(|(x, size)| size == reference[c.project(x)])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NicenessReport {
    pub radius: usize,
    /// Fraction of `radius`-nice vertices in each base fiber.
    pub vertex_fraction: Vec<f64>,
    /// Fraction of lifted edges with both ends nice, per base edge.
    pub edge_fraction: Vec<f64>,
}

impl NicenessReport {
    pub fn min_vertex_fraction(&self) -> f64 {
        self.vertex_fraction.iter().copied().fold(1.0, f64::min)
    }

    pub fn min_edge_fraction(&self) -> f64 {
        self.edge_fraction.iter().copied().fold(1.0, f64::min)
    }

    /// `(R, ε)`-niceness: every fraction strictly exceeds `1 - ε`.
    pub fn is_nice(&self, eps: f64) -> bool {
        self.vertex_fraction
            .iter()
            .chain(&self.edge_fraction)
            .all(|&f| f > 1.0 - eps)
    }
}

pub fn niceness_audit(c: &NFoldCovering, radius: usize) -> Result<NicenessReport> {
    if radius == 0 {
        return Err(Error::invalid("niceness radius must be at least 1"));
    }
    let nice = nice_vertices(c, radius);
    let n = c.fold() as f64;
    let vertex_fraction = (0..c.base().num_vertices())
        .map(|v| c.fiber(v).filter(|&x| nice[x]).count() as f64 / n)
        .collect();
    let edge_fraction = (0..c.base().num_edges())
        .map(|e| {
            c.edge_fiber(e)
                .filter(|&le| {
                    let (a, b) = c.edges()[le];
                    nice[a] && nice[b]
                })
                .count() as f64
                / n
        })
        .collect();
    Ok(NicenessReport {
        radius,
        vertex_fraction,
        edge_fraction,
    })
}
