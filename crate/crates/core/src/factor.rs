//! Finite-radius block codes and the edge-vertex entropy functional.
//!
//! A block code reads the labeled radius-`r` ball around a vertex, viewed
//! as a rooted tree, and outputs one symbol. Rules only see the canonical
//! form of the ball (children sorted by their own canonical form), so they
//! are invariant under automorphisms fixing the root.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::covering::{nice_vertices, NFoldCovering};
use crate::dist::{check_cap, DistTable, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::info::{entropy, tv_distance};
use crate::scalar::Scalar;
use crate::tree::{ball_measure_with_cap, TreeChain, TreeShape};

/// A labeled rooted tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub labels: Vec<usize>,
    pub children: Vec<Vec<usize>>,
}

impl Pattern {
    /// Breadth-first ball of radius `radius` around `root` in a tree given
    /// by adjacency lists.
    pub fn from_tree(adj: &[Vec<usize>], labels: &[usize], root: usize, radius: usize) -> Pattern {
        let mut pat = Pattern {
            labels: vec![labels[root]],
            children: vec![Vec::new()],
        };
        let mut frontier = vec![(root, usize::MAX, 0usize)];
        for _ in 0..radius {
            let mut next = Vec::new();
            for &(x, from, node) in &frontier {
                for &y in &adj[x] {
                    if y == from {
                        continue;
                    }
                    let id = pat.labels.len();
                    pat.labels.push(labels[y]);
                    pat.children.push(Vec::new());
                    pat.children[node].push(id);
                    next.push((y, x, id));
                }
            }
            frontier = next;
        }
        pat
    }

    /// Non-backtracking ball around `root` in any topology; a tree exactly
    /// when the vertex is `radius`-nice.
    pub fn from_topology<G: Topology + ?Sized>(
        g: &G,
        labels: &[usize],
        root: usize,
        radius: usize,
    ) -> Pattern {
        let mut pat = Pattern {
            labels: vec![labels[root]],
            children: vec![Vec::new()],
        };
        let mut frontier = vec![(root, usize::MAX, 0usize)];
        for _ in 0..radius {
            let mut next = Vec::new();
            for &(x, from, node) in &frontier {
                for &(y, _) in g.incident(x) {
                    if y == from {
                        continue;
                    }
                    let id = pat.labels.len();
                    pat.labels.push(labels[y]);
                    pat.children.push(Vec::new());
                    pat.children[node].push(id);
                    next.push((y, x, id));
                }
            }
            frontier = next;
        }
        pat
    }

    pub fn root_label(&self) -> usize {
        self.labels[0]
    }

    /// Labels of the root's children.
    pub fn neighbor_labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.children[0].iter().map(|&c| self.labels[c])
    }

    /// `label` for a leaf, `label(c1,c2,...)` otherwise, children sorted.
    pub fn canonical(&self) -> String {
        fn rec(p: &Pattern, node: usize) -> String {
            let mut kids: Vec<String> = p.children[node].iter().map(|&c| rec(p, c)).collect();
            let mut s = p.labels[node].to_string();
            if !kids.is_empty() {
                kids.sort();
                s.push('(');
                s.push_str(&kids.join(","));
                s.push(')');
            }
            s
        }
        rec(self, 0)
    }

    /// Parses a canonical string.
    pub fn parse(text: &str) -> Result<Pattern> {
        struct Parser<'a> {
            s: &'a [u8],
            i: usize,
        }
        impl Parser<'_> {
            fn node(&mut self, pat: &mut Pattern) -> Result<usize> {
                let start = self.i;
                while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                    self.i += 1;
                }
                let label = std::str::from_utf8(&self.s[start..self.i])
                    .unwrap()
                    .parse()
                    .map_err(|_| Error::parse(0, format!("bad label at byte {start}")))?;
                let id = pat.labels.len();
                pat.labels.push(label);
                pat.children.push(Vec::new());
                if self.s.get(self.i) == Some(&b'(') {
                    self.i += 1;
                    loop {
                        let c = self.node(pat)?;
                        pat.children[id].push(c);
                        match self.s.get(self.i) {
                            Some(b',') => self.i += 1,
                            Some(b')') => {
                                self.i += 1;
                                break;
                            }
                            _ => {
                                return Err(Error::parse(
                                    0,
                                    format!("unexpected input at byte {}", self.i),
                                ))
                            }
                        }
                    }
                }
                Ok(id)
            }
        }
        let mut pat = Pattern {
            labels: Vec::new(),
            children: Vec::new(),
        };
        let mut p = Parser {
            s: text.as_bytes(),
            i: 0,
        };
        p.node(&mut pat)?;
        if p.i != text.len() {
            return Err(Error::parse(0, "trailing input after pattern"));
        }
        Ok(pat)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    /// Output the root's own symbol.
    Identity,
    Constant(usize),
    /// Most frequent neighbor symbol; ties go to the root's symbol when it
    /// is among the tied, otherwise to the smallest tied symbol.
    Majority,
    /// Canonical pattern → symbol; unlisted patterns map to the default.
    Table(BTreeMap<String, usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCode {
    pub radius: usize,
    pub input_alphabet: usize,
    pub output_alphabet: usize,
    /// Output at vertices whose ball is not a tree.
    pub default_symbol: usize,
    pub rule: Rule,
}

impl BlockCode {
    pub fn identity(alphabet: usize) -> Self {
        BlockCode {
            radius: 0,
            input_alphabet: alphabet,
            output_alphabet: alphabet,
            default_symbol: 0,
            rule: Rule::Identity,
        }
    }

    pub fn constant(input_alphabet: usize, output_alphabet: usize, symbol: usize) -> Result<Self> {
        if symbol >= output_alphabet {
            return Err(Error::invalid("constant symbol outside output alphabet"));
        }
        Ok(BlockCode {
            radius: 0,
            input_alphabet,
            output_alphabet,
            default_symbol: symbol,
            rule: Rule::Constant(symbol),
        })
    }

    pub fn majority(alphabet: usize) -> Self {
        BlockCode {
            radius: 1,
            input_alphabet: alphabet,
            output_alphabet: alphabet,
            default_symbol: 0,
            rule: Rule::Majority,
        }
    }

    /// Built-in code by name: `identity`, `constant`, `majority`.
    pub fn builtin(name: &str, alphabet: usize) -> Result<Self> {
        match name {
            "identity" => Ok(BlockCode::identity(alphabet)),
            "constant" => BlockCode::constant(alphabet, alphabet, 0),
            "majority" => Ok(BlockCode::majority(alphabet)),
            other => Err(Error::invalid(format!("unknown block code `{other}`"))),
        }
    }

    /// Tabulates `f` over every labeling of the radius-`radius` ball of
    /// `T_degree`, rejecting `f` if two labelings with the same canonical
    /// form disagree.
    pub fn tabulate<F>(
        degree: usize,
        radius: usize,
        input_alphabet: usize,
        output_alphabet: usize,
        default_symbol: usize,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(&Pattern) -> usize,
    {
        let shape = TreeShape::regular_ball(degree, radius);
        let adj = shape.neighbors();
        let len = check_cap(input_alphabet, shape.len(), DEFAULT_ENUMERATION_CAP)?;
        let mut table = BTreeMap::new();
        let mut labels = vec![0usize; shape.len()];
        for idx in 0..len {
            let mut x = idx;
            for slot in labels.iter_mut().rev() {
                *slot = x % input_alphabet;
                x /= input_alphabet;
            }
            let pat = Pattern::from_tree(&adj, &labels, 0, radius);
            let out = f(&pat);
            if out >= output_alphabet {
                return Err(Error::invalid(format!(
                    "rule output {out} outside output alphabet"
                )));
            }
            let key = pat.canonical();
            match table.get(&key) {
                Some(&prev) if prev != out => {
                    return Err(Error::NotInvariant(format!(
                        "pattern {key} maps to both {prev} and {out}"
                    )))
                }
                _ => {
                    table.insert(key, out);
                }
            }
        }
        Ok(BlockCode {
            radius,
            input_alphabet,
            output_alphabet,
            default_symbol,
            rule: Rule::Table(table),
        })
    }

    /// This code as an explicit rule table over `T_degree` balls.
    pub fn to_table(&self, degree: usize) -> Result<BlockCode> {
        let me = self.clone();
        BlockCode::tabulate(
            degree,
            self.radius,
            self.input_alphabet,
            self.output_alphabet,
            self.default_symbol,
            move |p| me.eval(p),
        )
    }

    pub fn eval(&self, pattern: &Pattern) -> usize {
        match &self.rule {
            Rule::Identity => pattern.root_label(),
            Rule::Constant(b) => *b,
            Rule::Majority => majority_of(
                pattern.root_label(),
                pattern.neighbor_labels(),
                self.input_alphabet,
            ),
            Rule::Table(t) => t
                .get(&pattern.canonical())
                .copied()
                .unwrap_or(self.default_symbol),
        }
    }

    /// Header lines then one `pattern -> symbol` line per table entry.
    pub fn to_text(&self, degree: usize) -> Result<String> {
        let tab = match self.rule {
            Rule::Table(_) => self.clone(),
            _ => self.to_table(degree)?,
        };
        let Rule::Table(t) = &tab.rule else {
            unreachable!()
        };
        let mut out = format!(
            "radius {}\nalphabet {} {}\ndefault {}\n",
            self.radius, self.input_alphabet, self.output_alphabet, self.default_symbol
        );
        for (k, v) in t {
            writeln!(out, "{k} -> {v}").unwrap();
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<BlockCode> {
        let mut radius = None;
        let mut alphabets = None;
        let mut default_symbol = 0;
        let mut table = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = crate::graph::strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let int = |s: &str| -> Result<usize> {
                s.trim()
                    .parse()
                    .map_err(|e| Error::parse(lineno, format!("{e}")))
            };
            if let Some(rest) = line.strip_prefix("radius") {
                radius = Some(int(rest)?);
            } else if let Some(rest) = line.strip_prefix("alphabet") {
                let v: Vec<&str> = rest.split_whitespace().collect();
                if v.len() != 2 {
                    return Err(Error::parse(lineno, "expected `alphabet <in> <out>`"));
                }
                alphabets = Some((int(v[0])?, int(v[1])?));
            } else if let Some(rest) = line.strip_prefix("default") {
                default_symbol = int(rest)?;
            } else {
                let (pat, sym) = line
                    .split_once("->")
                    .ok_or_else(|| Error::parse(lineno, "expected `pattern -> symbol`"))?;
                let pat = pat.trim();
                let parsed =
                    Pattern::parse(pat).map_err(|_| Error::parse(lineno, "malformed pattern"))?;
                if parsed.canonical() != pat {
                    return Err(Error::parse(
                        lineno,
                        format!("pattern {pat} is not canonical"),
                    ));
                }
                table.insert(pat.to_string(), int(sym)?);
            }
        }
        let radius = radius.ok_or_else(|| Error::parse(0, "missing `radius` line"))?;
        let (input_alphabet, output_alphabet) =
            alphabets.ok_or_else(|| Error::parse(0, "missing `alphabet` line"))?;
        if default_symbol >= output_alphabet || table.values().any(|&b| b >= output_alphabet) {
            return Err(Error::parse(0, "output symbol outside output alphabet"));
        }
        Ok(BlockCode {
            radius,
            input_alphabet,
            output_alphabet,
            default_symbol,
            rule: Rule::Table(table),
        })
    }
}

fn majority_of(root: usize, neighbors: impl Iterator<Item = usize>, alphabet: usize) -> usize {
    let mut counts = vec![0usize; alphabet.max(root + 1)];
    for b in neighbors {
        if b >= counts.len() {
            counts.resize(b + 1, 0);
        }
        counts[b] += 1;
    }
    let best = *counts.iter().max().unwrap_or(&0);
    if counts[root] == best {
        root
    } else {
        counts.iter().position(|&c| c == best).unwrap()
    }
}

/// Applies a block code at every vertex of a covering; vertices that are
/// not `radius`-nice receive the default symbol.
pub fn apply_block_code(
    cov: &NFoldCovering,
    coloring: &[usize],
    code: &BlockCode,
) -> Result<Vec<usize>> {
    if coloring.len() != cov.num_vertices() {
        return Err(Error::invalid(format!(
            "coloring has {} entries for {} vertices",
            coloring.len(),
            cov.num_vertices()
        )));
    }
    if let Some(&a) = coloring.iter().find(|&&a| a >= code.input_alphabet) {
        return Err(Error::invalid(format!("symbol {a} outside input alphabet")));
    }
    let nice = if code.radius == 0 {
        vec![true; cov.num_vertices()]
    } else {
        nice_vertices(cov, code.radius)
    };
    let out = (0..cov.num_vertices())
        .into_par_iter()
        .map(|x| {
            if !nice[x] {
                return code.default_symbol;
            }
            match &code.rule {
                Rule::Identity => coloring[x],
                Rule::Constant(b) => *b,
                Rule::Majority => majority_of(
                    coloring[x],
                    cov.incident(x).iter().map(|&(y, _)| coloring[y]),
                    code.input_alphabet,
                ),
                Rule::Table(_) => code.eval(&Pattern::from_topology(cov, coloring, x, code.radius)),
            }
        })
        .collect();
    Ok(out)
}

/// Fiber-frequency tables of a coloring of a covering.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPair<T = f64> {
    pub alphabet: usize,
    /// Symbol counts per base vertex.
    pub vertex_counts: Vec<Vec<usize>>,
    /// Pair counts per base edge, `(color at smaller end, color at larger end)`.
    pub edge_counts: Vec<Vec<usize>>,
    pub vertex: Vec<DistTable<T>>,
    pub edge: Vec<DistTable<T>>,
}

pub fn empirical_dists<T: Scalar>(
    cov: &NFoldCovering,
    coloring: &[usize],
    alphabet: usize,
) -> Result<EmpiricalPair<T>> {
    if coloring.len() != cov.num_vertices() {
        return Err(Error::invalid("coloring does not cover the covering"));
    }
    if coloring.iter().any(|&b| b >= alphabet) {
        return Err(Error::invalid("symbol outside alphabet"));
    }
    let base = cov.base();
    let n = T::from_count(cov.fold());
    let vertex_counts: Vec<Vec<usize>> = (0..base.num_vertices())
        .map(|v| {
            let mut c = vec![0usize; alphabet];
            for x in cov.fiber(v) {
                c[coloring[x]] += 1;
            }
            c
        })
        .collect();
    let edge_counts: Vec<Vec<usize>> = (0..base.num_edges())
        .map(|e| {
            let mut c = vec![0usize; alphabet * alphabet];
            for le in cov.edge_fiber(e) {
                let (a, b) = cov.edges()[le];
                c[coloring[a] * alphabet + coloring[b]] += 1;
            }
            c
        })
        .collect();
    let to_probs = |c: &[usize]| c.iter().map(|&k| T::from_count(k) / n).collect::<Vec<T>>();
    let vertex = vertex_counts
        .iter()
        .enumerate()
        .map(|(v, c)| DistTable::from_vector(v, to_probs(c)))
        .collect::<Result<Vec<_>>>()?;
    let edge = edge_counts
        .iter()
        .zip(base.edges())
        .map(|(c, &(u, v))| DistTable::from_matrix((u, v), alphabet, to_probs(c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalPair {
        alphabet,
        vertex_counts,
        edge_counts,
        vertex,
        edge,
    })
}

/// Exact vertex and edge laws of the factor `code(chain)` on `T_d`.
///
/// The vertex law pushes the chain's law on a radius-`r` ball through the
/// code; the edge law pushes its law on the union of the two radius-`r`
/// balls around an edge.
pub fn factor_marginals_exact<T: Scalar>(
    chain: &TreeChain<T>,
    code: &BlockCode,
) -> Result<(DistTable<T>, DistTable<T>)> {
    factor_marginals_exact_with_cap(chain, code, DEFAULT_ENUMERATION_CAP)
}

pub fn factor_marginals_exact_with_cap<T: Scalar>(
    chain: &TreeChain<T>,
    code: &BlockCode,
    cap: u128,
) -> Result<(DistTable<T>, DistTable<T>)> {
    if code.input_alphabet != chain.alphabet() {
        return Err(Error::DomainMismatch(
            "code input alphabet differs from chain alphabet".into(),
        ));
    }
    let d = chain.degree();
    let r = code.radius;
    let q_out = code.output_alphabet;

    let shape = TreeShape::regular_ball(d, r);
    let adj = shape.neighbors();
    let law = ball_measure_with_cap(chain, &shape, cap)?;
    let mut mu_v = vec![T::zero(); q_out];
    let mut labels = vec![0usize; shape.len()];
    for (idx, &p) in law.probs().iter().enumerate() {
        law.decode(idx, &mut labels);
        let b = code.eval(&Pattern::from_tree(&adj, &labels, 0, r));
        mu_v[b] = mu_v[b] + p;
    }

    let shape = TreeShape::regular_edge_union(d, r);
    let adj = shape.neighbors();
    let law = ball_measure_with_cap(chain, &shape, cap)?;
    let mut mu_e = vec![T::zero(); q_out * q_out];
    let mut labels = vec![0usize; shape.len()];
    for (idx, &p) in law.probs().iter().enumerate() {
        law.decode(idx, &mut labels);
        let b0 = code.eval(&Pattern::from_tree(&adj, &labels, 0, r));
        let b1 = code.eval(&Pattern::from_tree(&adj, &labels, 1, r));
        mu_e[b0 * q_out + b1] = mu_e[b0 * q_out + b1] + p;
    }
    Ok((
        DistTable::from_vector(0, mu_v)?,
        DistTable::from_matrix((0, 1), q_out, mu_e)?,
    ))
}

/// `Σ_e H(μ_e) - Σ_v (deg v - 1) H(μ_v)`, after checking that each edge
/// table's marginals match its endpoint tables within `tolerance` (total
/// variation). Edge tables are ordered `(smaller end, larger end)`.
pub fn edge_vertex_slack<T: Scalar, G: Topology + ?Sized>(
    g: &G,
    vertex: &[DistTable<T>],
    edge: &[DistTable<T>],
    tolerance: f64,
) -> Result<T> {
    if vertex.len() != g.num_vertices() || edge.len() != g.num_edges() {
        return Err(Error::invalid("one table per vertex and per edge required"));
    }
    for (&(u, v), mu) in g.edges().iter().zip(edge) {
        mu.expect_pair()?;
        for (pos, w) in [(0, u), (1, v)] {
            let tv = tv_distance(&mu.marginal(&[pos]), &vertex[w])?.as_f64();
            if tv > tolerance {
                return Err(Error::InconsistentMarginals {
                    u,
                    v,
                    tv,
                    tolerance,
                });
            }
        }
    }
    let edges: T = edge.iter().map(entropy).sum();
    let vertices: T = vertex
        .iter()
        .enumerate()
        .map(|(v, mu)| T::from_count(g.degree(v)) * entropy(mu) - entropy(mu))
        .sum();
    Ok(edges - vertices)
}

/// Slack when every vertex carries `mu_v` and every edge `mu_e`.
pub fn homogeneous_slack<T: Scalar, G: Topology + ?Sized>(
    g: &G,
    mu_v: &DistTable<T>,
    mu_e: &DistTable<T>,
    tolerance: f64,
) -> Result<T> {
    let vertex: Vec<_> = (0..g.num_vertices()).map(|_| mu_v.clone()).collect();
    let edge: Vec<_> = (0..g.num_edges()).map(|_| mu_e.clone()).collect();
    edge_vertex_slack(g, &vertex, &edge, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::random_covering;
    use crate::graph::Graph;
    use crate::tree::{bp_solve, chain_from_bp, TreeModel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn ising_chain(beta: f64) -> TreeChain<f64> {
        let model = TreeModel::ising(3, beta, 0.0).unwrap();
        chain_from_bp(&bp_solve(&model, 1e-12, 4, 1).unwrap(), &model).unwrap()
    }

    #[test]
    fn canonical_form_sorts_children() {
        let adj = TreeShape::regular_ball(3, 1).neighbors();
        let a = Pattern::from_tree(&adj, &[1, 0, 1, 0], 0, 1);
        let b = Pattern::from_tree(&adj, &[1, 1, 0, 0], 0, 1);
        assert_eq!(a.canonical(), "1(0,0,1)");
        assert_eq!(a.canonical(), b.canonical());
        let deep = TreeShape::regular_ball(3, 2).neighbors();
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let p = Pattern::from_tree(&deep, &labels, 0, 2);
        assert_eq!(
            Pattern::parse(&p.canonical()).unwrap().canonical(),
            p.canonical()
        );
        assert!(Pattern::parse("1(0,").is_err());
        assert!(Pattern::parse("1)").is_err());
    }

    #[test]
    fn tabulate_rejects_non_invariant_rules() {
        // "first child" depends on the ordering of children
        let r = BlockCode::tabulate(3, 1, 2, 2, 0, |p| p.labels[p.children[0][0]]);
        assert!(matches!(r, Err(Error::NotInvariant(_))));
        let sum_rule = BlockCode::tabulate(3, 1, 2, 4, 0, |p| p.neighbor_labels().sum()).unwrap();
        match &sum_rule.rule {
            Rule::Table(t) => assert_eq!(t.len(), 8),
            _ => unreachable!(),
        }
    }

    #[test]
    fn rule_table_text_round_trip() {
        let code = BlockCode::majority(2);
        let text = code.to_text(3).unwrap();
        assert!(text.contains("0(0,1,1) -> 1"));
        assert!(text.contains("1(0,0,1) -> 0"));
        let back = BlockCode::parse(&text).unwrap();
        assert_eq!(back, code.to_table(3).unwrap());
        assert!(BlockCode::parse("radius 1\nalphabet 2 2\n0(1,0,0) -> 1\n").is_err());
        assert!(BlockCode::parse("radius 1\nalphabet 2 2\n0(0,0,1) -> 5\n").is_err());
    }

    #[test]
    fn identity_and_constant_on_covers() {
        let g = Graph::complete(4).unwrap();
        let cov = random_covering(&g, 5, 3).unwrap();
        let coloring: Vec<usize> = (0..cov.num_vertices()).map(|x| x % 3).collect();
        assert_eq!(
            apply_block_code(&cov, &coloring, &BlockCode::identity(3)).unwrap(),
            coloring
        );
        let c = apply_block_code(&cov, &coloring, &BlockCode::constant(3, 2, 1).unwrap()).unwrap();
        assert!(c.iter().all(|&b| b == 1));
        assert!(apply_block_code(&cov, &coloring[1..], &BlockCode::identity(3)).is_err());
    }

    #[test]
    fn majority_on_the_six_cycle_cover() {
        let tri = Graph::cycle(3).unwrap();
        let cov =
            NFoldCovering::from_permutations(tri, 2, vec![vec![1, 0], vec![0, 1], vec![0, 1]])
                .unwrap();
        // walk the 6-cycle and alternate colors along it
        let mut order = vec![0usize];
        let mut prev = usize::MAX;
        while order.len() < 6 {
            let cur = *order.last().unwrap();
            let next = cov
                .incident(cur)
                .iter()
                .map(|&(w, _)| w)
                .find(|&w| w != prev)
                .unwrap();
            prev = cur;
            order.push(next);
        }
        let mut coloring = vec![0; 6];
        for (i, &x) in order.iter().enumerate() {
            coloring[x] = i % 2;
        }
        // both neighbors carry the opposite color: output flips every site
        let out = apply_block_code(&cov, &coloring, &BlockCode::majority(2)).unwrap();
        for x in 0..6 {
            assert_eq!(out[x], 1 - coloring[x]);
        }
        // a tabulated copy of the rule for T_2 agrees
        let table = BlockCode::majority(2).to_table(2).unwrap();
        assert_eq!(apply_block_code(&cov, &coloring, &table).unwrap(), out);
        // ties (one neighbor of each color) keep the root color
        let block = [0, 0, 0, 1, 1, 1];
        let mut colors = vec![0; 6];
        for (i, &x) in order.iter().enumerate() {
            colors[x] = block[i];
        }
        let out = apply_block_code(&cov, &colors, &BlockCode::majority(2)).unwrap();
        assert_eq!(out, colors);
    }

    #[test]
    fn non_nice_vertices_get_the_default() {
        let tri = Graph::cycle(3).unwrap();
        let cov = random_covering(&tri, 1, 0).unwrap();
        let code = BlockCode::tabulate(2, 2, 2, 2, 1, |_| 0).unwrap();
        let out = apply_block_code(&cov, &[0, 0, 0], &code).unwrap();
        assert_eq!(out, vec![1, 1, 1]);
    }

    #[test]
    fn empirical_counts() {
        let g = Graph::from_edges(&[(0, 1)]).unwrap();
        let cov = NFoldCovering::from_permutations(g, 2, vec![vec![0, 1]]).unwrap();
        // (0,0)-(0,1) carries (0,1); (1,0)-(1,1) carries (1,0)
        let coloring = vec![0, 1, 1, 0];
        let emp = empirical_dists::<f64>(&cov, &coloring, 2).unwrap();
        assert_eq!(emp.edge[0].probs(), &[0.0, 0.5, 0.5, 0.0]);
        assert_eq!(emp.vertex[0].probs(), &[0.5, 0.5]);

        let constant = empirical_dists::<f64>(&cov, &[1, 1, 1, 1], 2).unwrap();
        assert_eq!(constant.edge[0].probs(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn empirical_law_of_large_numbers() {
        let g = Graph::complete(4).unwrap();
        let cov = random_covering(&g, 10_000, 4).unwrap();
        let mut rng = crate::covering::seeded_rng(8);
        let law = [0.2, 0.5, 0.3];
        let coloring: Vec<usize> = (0..cov.num_vertices())
            .map(|_| {
                let u: f64 = rng.gen();
                if u < 0.2 {
                    0
                } else if u < 0.7 {
                    1
                } else {
                    2
                }
            })
            .collect();
        let emp = empirical_dists::<f64>(&cov, &coloring, 3).unwrap();
        let target = DistTable::from_vector(0, law.to_vec()).unwrap();
        for mu in &emp.vertex {
            assert!(tv_distance(mu, &target).unwrap() < 0.02);
        }
    }

    #[test]
    fn exact_marginals_of_simple_codes() {
        let chain = ising_chain(0.4);
        let (mv, me) = factor_marginals_exact(&chain, &BlockCode::identity(2)).unwrap();
        assert_eq!(mv.probs(), chain.root_marginal());
        let edge = chain.edge_table();
        for (a, b) in me.probs().iter().zip(edge.probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let (mv, me) =
            factor_marginals_exact(&chain, &BlockCode::constant(2, 3, 2).unwrap()).unwrap();
        assert_eq!(mv.probs(), &[0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(me.get2(2, 2), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_majority_marginals_by_enumeration() {
        // independent oracle: enumerate the 6-vertex edge union directly
        // with the chain's weights and apply majority by hand
        let chain = ising_chain(0.4);
        let (mv, me) = factor_marginals_exact(&chain, &BlockCode::majority(2)).unwrap();
        let pi = chain.root_marginal();
        let p = |a: usize, b: usize| chain.transition(a, b);
        let maj = |x: [usize; 3]| usize::from(x.iter().sum::<usize>() >= 2);
        let mut oracle = [0.0; 4];
        for idx in 0..64usize {
            let s: Vec<usize> = (0..6).map(|i| idx >> (5 - i) & 1).collect();
            // u = 0, v = 1, u's other kids 2, 3; v's kids 4, 5
            let w = pi[s[0]]
                * p(s[0], s[1])
                * p(s[0], s[2])
                * p(s[0], s[3])
                * p(s[1], s[4])
                * p(s[1], s[5]);
            let bu = maj([s[1], s[2], s[3]]);
            let bv = maj([s[0], s[4], s[5]]);
            oracle[bu * 2 + bv] += w;
        }
        for (a, b) in me.probs().iter().zip(oracle) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(mv.probs()[0], oracle[0] + oracle[1], epsilon = 1e-14);
        assert_abs_diff_eq!(me.get2(0, 1), me.get2(1, 0), epsilon = 1e-14);
    }

    #[test]
    fn slack_cases() {
        let k2 = Graph::from_edges(&[(0, 1)]).unwrap();
        let mu_e = DistTable::from_matrix((0, 1), 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let verts = vec![mu_e.marginal(&[0]), mu_e.marginal(&[1])];
        let s = edge_vertex_slack(&k2, &verts, std::slice::from_ref(&mu_e), 1e-9).unwrap();
        assert_abs_diff_eq!(s, entropy(&mu_e), epsilon = 1e-15);

        // IID marginals on a d-regular graph: slack = |V| h
        let pet = Graph::petersen();
        let mu = DistTable::from_vector(0, vec![0.3, 0.7]).unwrap();
        let mu2 = mu
            .product(&mu.clone().with_domain(vec![1]).unwrap())
            .unwrap();
        let s = homogeneous_slack(&pet, &mu, &mu2, 1e-9).unwrap();
        assert_abs_diff_eq!(s, 10.0 * entropy(&mu), epsilon = 1e-12);

        let wrong = DistTable::from_vector(0, vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            homogeneous_slack(&pet, &wrong, &mu2, 1e-9),
            Err(Error::InconsistentMarginals { .. })
        ));
    }

    #[test]
    fn k4_identity_slack_is_positive() {
        let chain = ising_chain(0.4);
        let (mv, me) = factor_marginals_exact(&chain, &BlockCode::identity(2)).unwrap();
        let s = homogeneous_slack(&Graph::complete(4).unwrap(), &mv, &me, 1e-9).unwrap();
        // 6 H(edge) - 8 H(vertex), by hand from p = 1/(1 + e^{-0.8})
        let p = 1.0 / (1.0 + (-0.8f64).exp());
        let hb = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        let expected = 6.0 * (2f64.ln() + hb) - 8.0 * 2f64.ln();
        assert_abs_diff_eq!(s, expected, epsilon = 1e-12);
        assert!(s > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        // swapping the two fiber indices is a deck transformation
        #[test]
        fn block_codes_commute_with_deck_transformations(seed in any::<u64>(), code_id in 0usize..3) {
            let g = Graph::complete(4).unwrap();
            let cov = random_covering(&g, 2, seed).unwrap();
            let swap = |i: usize| 1 - i;
            let conj: Vec<Vec<usize>> = cov
                .permutations()
                .iter()
                .map(|p| (0..2).map(|i| swap(p[swap(i)])).collect())
                .collect();
            let other = NFoldCovering::from_permutations(g.clone(), 2, conj).unwrap();
            let relabel = |x: usize| cov.vertex(swap(cov.fiber_index(x)), cov.project(x));
            let mut rng = crate::covering::seeded_rng(seed ^ 0x55);
            let coloring: Vec<usize> = (0..8).map(|_| rng.gen_range(0..2)).collect();
            let mut moved = vec![0; 8];
            for x in 0..8 {
                moved[relabel(x)] = coloring[x];
            }
            let code = match code_id {
                0 => BlockCode::identity(2),
                1 => BlockCode::majority(2),
                _ => BlockCode::tabulate(3, 1, 2, 3, 0, |p| p.root_label() + p.neighbor_labels().filter(|&b| b == 1).count().min(1)).unwrap(),
            };
            let out = apply_block_code(&cov, &coloring, &code).unwrap();
            let out_moved = apply_block_code(&other, &moved, &code).unwrap();
            for x in 0..8 {
                prop_assert_eq!(out_moved[relabel(x)], out[x]);
            }
        }

        #[test]
        fn empirical_marginals_are_exactly_consistent(seed in any::<u64>(), fold in 1usize..30) {
            let g = Graph::petersen();
            let cov = random_covering(&g, fold, seed).unwrap();
            let mut rng = crate::covering::seeded_rng(seed);
            let coloring: Vec<usize> = (0..cov.num_vertices()).map(|_| rng.gen_range(0..3)).collect();
            let emp = empirical_dists::<f64>(&cov, &coloring, 3).unwrap();
            for (e, &(u, v)) in g.edges().iter().enumerate() {
                let c = &emp.edge_counts[e];
                for a in 0..3 {
                    let row: usize = (0..3).map(|b| c[a * 3 + b]).sum();
                    let col: usize = (0..3).map(|b| c[b * 3 + a]).sum();
                    prop_assert_eq!(row, emp.vertex_counts[u][a]);
                    prop_assert_eq!(col, emp.vertex_counts[v][a]);
                }
            }
            prop_assert!(edge_vertex_slack(&g, &emp.vertex, &emp.edge, 1e-12).is_ok());
        }
    }
}
