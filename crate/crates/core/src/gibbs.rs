//! Nearest-neighbor potentials and exact Gibbs measures on small graphs.
//!
//! The total energy of a coloring `ω` is
//! `Σ_v h_v(ω_v) + Σ_{e={u,v}} J_e(ω_u, ω_v)`, which equals `Σ_v ψ_v(ω)`
//! for the vertex potential `ψ_v = h_v + ½ Σ_{e∋v} J_e`. Weights are
//! `exp(-energy)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::covering::NFoldCovering;
use crate::dist::{check_cap, DistTable, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::scalar::{normalize_log_weights, Scalar};

/// A partial coloring: vertex → symbol.
pub type Boundary = BTreeMap<usize, usize>;

/// Field table per vertex and pair table per edge of a fixed topology.
///
/// Pair tables are stored for the canonical edge orientation (smaller
/// endpoint first); `J_e(a, b)` read from the other end is `J_e(b, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential<T = f64> {
    alphabet: usize,
    fields: Vec<Vec<T>>,
    pairs: Vec<Vec<T>>,
}

impl<T: Scalar> Potential<T> {
    pub fn new(alphabet: usize, fields: Vec<Vec<T>>, pairs: Vec<Vec<T>>) -> Result<Self> {
        if alphabet < 2 {
            return Err(Error::invalid("alphabet needs at least two symbols"));
        }
        if fields.iter().any(|h| h.len() != alphabet) {
            return Err(Error::invalid("field table has wrong length"));
        }
        if pairs.iter().any(|j| j.len() != alphabet * alphabet) {
            return Err(Error::invalid("pair table has wrong length"));
        }
        if fields
            .iter()
            .chain(&pairs)
            .flatten()
            .any(|x| !x.is_finite())
        {
            return Err(Error::invalid("potential entries must be finite"));
        }
        Ok(Potential {
            alphabet,
            fields,
            pairs,
        })
    }

    pub fn zero<G: Topology + ?Sized>(g: &G, alphabet: usize) -> Result<Self> {
        Potential::new(
            alphabet,
            vec![vec![T::zero(); alphabet]; g.num_vertices()],
            vec![vec![T::zero(); alphabet * alphabet]; g.num_edges()],
        )
    }

    /// Same field and pair table at every vertex and edge.
    pub fn homogeneous<G: Topology + ?Sized>(g: &G, field: Vec<T>, pair: Vec<T>) -> Result<Self> {
        let q = field.len();
        Potential::new(q, vec![field; g.num_vertices()], vec![pair; g.num_edges()])
    }

    /// Ising model on symbols `{0, 1}` with spin `s = 2a - 1`:
    /// `h(a) = -field·s(a)`, `J(a, b) = -β·s(a)s(b)`.
    pub fn ising<G: Topology + ?Sized>(g: &G, beta: T, field: T) -> Result<Self> {
        let (h, j) = ising_tables(beta, field);
        Potential::homogeneous(g, h, j)
    }

    /// Potts model: `J(a, b) = -β` when `a = b`, zero otherwise.
    pub fn potts<G: Topology + ?Sized>(g: &G, q: usize, beta: T) -> Result<Self> {
        let (h, j) = potts_tables(q, beta);
        Potential::homogeneous(g, h, j)
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn field(&self, v: usize) -> &[T] {
        &self.fields[v]
    }

    pub fn pair_table(&self, e: usize) -> &[T] {
        &self.pairs[e]
    }

    pub fn set_field(&mut self, v: usize, a: usize, value: T) {
        self.fields[v][a] = value;
    }

    /// Sets `J_e(a, b)` with `a` the color of `from`.
    pub fn set_pair<G: Topology + ?Sized>(
        &mut self,
        g: &G,
        e: usize,
        from: usize,
        a: usize,
        b: usize,
        value: T,
    ) {
        let q = self.alphabet;
        if g.edges()[e].0 == from {
            self.pairs[e][a * q + b] = value;
        } else {
            self.pairs[e][b * q + a] = value;
        }
    }

    /// `J_e` with `own` the color at `v` and `other` the color across `e`.
    #[inline]
    pub fn pair_from<G: Topology + ?Sized>(
        &self,
        g: &G,
        e: usize,
        v: usize,
        own: usize,
        other: usize,
    ) -> T {
        let q = self.alphabet;
        if g.edges()[e].0 == v {
            self.pairs[e][own * q + other]
        } else {
            self.pairs[e][other * q + own]
        }
    }

    pub fn check_topology<G: Topology + ?Sized>(&self, g: &G) -> Result<()> {
        if self.fields.len() != g.num_vertices() || self.pairs.len() != g.num_edges() {
            return Err(Error::invalid(format!(
                "potential has {} fields and {} pair tables; graph has {} vertices and {} edges",
                self.fields.len(),
                self.pairs.len(),
                g.num_vertices(),
                g.num_edges()
            )));
        }
        Ok(())
    }

    /// Total energy `Σ_v h_v + Σ_e J_e` of a full coloring.
    pub fn energy<G: Topology + ?Sized>(&self, g: &G, coloring: &[usize]) -> T {
        let q = self.alphabet;
        let h: T = coloring
            .iter()
            .enumerate()
            .map(|(v, &a)| self.fields[v][a])
            .sum();
        let j: T = g
            .edges()
            .iter()
            .zip(&self.pairs)
            .map(|(&(u, v), t)| t[coloring[u] * q + coloring[v]])
            .sum();
        h + j
    }

    /// The vertex potential `ψ_v(ω) = h_v(ω_v) + ½ Σ_{e∋v} J_e`.
    pub fn vertex_energy<G: Topology + ?Sized>(&self, g: &G, v: usize, coloring: &[usize]) -> T {
        let half = T::lit(0.5);
        g.incident(v)
            .iter()
            .fold(self.fields[v][coloring[v]], |acc, &(w, e)| {
                acc + half * self.pair_from(g, e, v, coloring[v], coloring[w])
            })
    }

    /// Parses the sectioned text format against a topology.
    ///
    /// ```text
    /// [alphabet]
    /// 2
    /// [fields]
    /// # vertex symbol value
    /// 0 1 -0.2
    /// [pairs]
    /// # u v a b value, a the color of u
    /// 0 1 0 0 -0.5
    /// ```
    /// Entries not listed are zero.
    pub fn parse<G: Topology + ?Sized>(text: &str, g: &G) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Alphabet,
            Fields,
            Pairs,
        }
        let mut section = Section::None;
        let mut pot: Option<Potential<T>> = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = crate::graph::strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            match line {
                "[alphabet]" => section = Section::Alphabet,
                "[fields]" => section = Section::Fields,
                "[pairs]" => section = Section::Pairs,
                _ => {
                    let toks: Vec<&str> = line.split_whitespace().collect();
                    let num = |k: usize| -> Result<usize> {
                        toks[k]
                            .parse()
                            .map_err(|e| Error::parse(lineno, format!("{e}")))
                    };
                    let val = |k: usize| -> Result<T> {
                        let x: f64 = toks[k]
                            .parse()
                            .map_err(|e| Error::parse(lineno, format!("{e}")))?;
                        Ok(T::lit(x))
                    };
                    match section {
                        Section::None => {
                            return Err(Error::parse(lineno, "entry outside a section"))
                        }
                        Section::Alphabet => {
                            if pot.is_some() || toks.len() != 1 {
                                return Err(Error::parse(lineno, "alphabet is a single size"));
                            }
                            pot = Some(Potential::zero(g, num(0)?)?);
                        }
                        Section::Fields | Section::Pairs => {
                            let p = pot.as_mut().ok_or_else(|| {
                                Error::parse(lineno, "[alphabet] must come first")
                            })?;
                            let q = p.alphabet;
                            if section == Section::Fields {
                                if toks.len() != 3 {
                                    return Err(Error::parse(
                                        lineno,
                                        "expected `vertex symbol value`",
                                    ));
                                }
                                let (v, a) = (num(0)?, num(1)?);
                                if v >= g.num_vertices() || a >= q {
                                    return Err(Error::parse(
                                        lineno,
                                        "vertex or symbol out of range",
                                    ));
                                }
                                p.fields[v][a] = val(2)?;
                            } else {
                                if toks.len() != 5 {
                                    return Err(Error::parse(lineno, "expected `u v a b value`"));
                                }
                                let (u, v, a, b) = (num(0)?, num(1)?, num(2)?, num(3)?);
                                if u >= g.num_vertices() || a >= q || b >= q {
                                    return Err(Error::parse(
                                        lineno,
                                        "vertex or symbol out of range",
                                    ));
                                }
                                let e = g.edge_index(u, v).ok_or_else(|| {
                                    Error::parse(lineno, format!("no edge {{{u}, {v}}}"))
                                })?;
                                let x = val(4)?;
                                p.set_pair(g, e, u, a, b, x);
                            }
                        }
                    }
                }
            }
        }
        pot.ok_or_else(|| Error::parse(0, "missing [alphabet] section"))
    }

    /// Writes the text format, listing nonzero entries only.
    pub fn to_text<G: Topology + ?Sized>(&self, g: &G) -> String {
        let q = self.alphabet;
        let mut out = format!("[alphabet]\n{q}\n[fields]\n");
        for (v, h) in self.fields.iter().enumerate() {
            for (a, x) in h.iter().enumerate() {
                if *x != T::zero() {
                    writeln!(out, "{v} {a} {:e}", x.as_f64()).unwrap();
                }
            }
        }
        out.push_str("[pairs]\n");
        for (&(u, v), j) in g.edges().iter().zip(&self.pairs) {
            for (i, x) in j.iter().enumerate() {
                if *x != T::zero() {
                    writeln!(out, "{u} {v} {} {} {:e}", i / q, i % q, x.as_f64()).unwrap();
                }
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> Potential<U> {
        let conv = |t: &Vec<Vec<T>>| {
            t.iter()
                .map(|r| r.iter().map(|x| U::lit(x.as_f64())).collect())
                .collect()
        };
        Potential {
            alphabet: self.alphabet,
            fields: conv(&self.fields),
            pairs: conv(&self.pairs),
        }
    }
}

/// Site and pair tables of the Ising model.
pub fn ising_tables<T: Scalar>(beta: T, field: T) -> (Vec<T>, Vec<T>) {
    let s = |a: usize| if a == 1 { T::one() } else { -T::one() };
    let h = (0..2).map(|a| -field * s(a)).collect();
    let j = (0..4).map(|i| -beta * s(i / 2) * s(i % 2)).collect();
    (h, j)
}

/// Site and pair tables of the `q`-state Potts model.
pub fn potts_tables<T: Scalar>(q: usize, beta: T) -> (Vec<T>, Vec<T>) {
    let h = vec![T::zero(); q];
    let j = (0..q * q)
        .map(|i| if i / q == i % q { -beta } else { T::zero() })
        .collect();
    (h, j)
}

/// Exact Gibbs measure by enumerating every coloring.
pub fn brute_force_gibbs<T: Scalar, G: Topology + ?Sized>(
    g: &G,
    p: &Potential<T>,
) -> Result<DistTable<T>> {
    brute_force_gibbs_with_cap(g, p, DEFAULT_ENUMERATION_CAP)
}

pub fn brute_force_gibbs_with_cap<T: Scalar, G: Topology + ?Sized>(
    g: &G,
    p: &Potential<T>,
    cap: u128,
) -> Result<DistTable<T>> {
    p.check_topology(g)?;
    let n = g.num_vertices();
    let q = p.alphabet();
    let len = check_cap(q, n, cap)?;
    let domain: Vec<usize> = (0..n).collect();
    let mut config = vec![0usize; n];
    let mut log_w = Vec::with_capacity(len);
    for _ in 0..len {
        log_w.push(-p.energy(g, &config));
        // lexicographic increment, last vertex fastest
        for slot in config.iter_mut().rev() {
            *slot += 1;
            if *slot < q {
                break;
            }
            *slot = 0;
        }
    }
    normalize_log_weights(&mut log_w);
    DistTable::new(domain, q, log_w)
}

/// Vertices outside `region` at graph distance at most `radius` from it.
pub fn neighborhood<G: Topology + ?Sized>(g: &G, region: &[usize], radius: usize) -> Vec<usize> {
    let inside: BTreeSet<usize> = region.iter().copied().collect();
    let mut dist = vec![usize::MAX; g.num_vertices()];
    let mut frontier: Vec<usize> = region.to_vec();
    for &v in region {
        dist[v] = 0;
    }
    for d in 1..=radius {
        let mut next = Vec::new();
        for &x in &frontier {
            for &(y, _) in g.incident(x) {
                if dist[y] == usize::MAX {
                    dist[y] = d;
                    next.push(y);
                }
            }
        }
        frontier = next;
    }
    (0..g.num_vertices())
        .filter(|v| dist[*v] != usize::MAX && !inside.contains(v))
        .collect()
}

fn validate_region<G: Topology + ?Sized>(g: &G, region: &[usize]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &v in region {
        if v >= g.num_vertices() {
            return Err(Error::InvalidVertex {
                vertex: v,
                len: g.num_vertices(),
            });
        }
        if !seen.insert(v) {
            return Err(Error::invalid(format!("vertex {v} repeated in region")));
        }
    }
    if region.is_empty() {
        return Err(Error::invalid("region is empty"));
    }
    Ok(())
}

/// Conditional law of the colors on `region` given the colors on its
/// 2-neighborhood, as prescribed by the potential.
///
/// Only energy terms touching `region` enter; the rest cancel in the
/// normalization.
pub fn conditional_table<T: Scalar, G: Topology + ?Sized>(
    p: &Potential<T>,
    g: &G,
    boundary: &Boundary,
    region: &[usize],
) -> Result<DistTable<T>> {
    p.check_topology(g)?;
    validate_region(g, region)?;
    if let Some(v) = region.iter().find(|v| boundary.contains_key(v)) {
        return Err(Error::invalid(format!(
            "boundary assigns vertex {v} inside the region"
        )));
    }
    for v in neighborhood(g, region, 2) {
        if !boundary.contains_key(&v) {
            return Err(Error::IncompleteBoundary(v));
        }
    }
    let q = p.alphabet();
    let len = check_cap(q, region.len(), DEFAULT_ENUMERATION_CAP)?;
    let mut coloring: Vec<Option<usize>> = vec![None; g.num_vertices()];
    for (&v, &a) in boundary {
        if v < coloring.len() {
            coloring[v] = Some(a);
        }
    }
    let mut in_region = vec![false; g.num_vertices()];
    for &v in region {
        in_region[v] = true;
    }
    let table = DistTable::<T>::uniform(region.to_vec(), q);
    let mut s = vec![0usize; region.len()];
    let mut log_w = Vec::with_capacity(len);
    for idx in 0..len {
        table.decode(idx, &mut s);
        for (&v, &a) in region.iter().zip(&s) {
            coloring[v] = Some(a);
        }
        let mut energy = T::zero();
        for &v in region {
            let a = coloring[v].unwrap();
            energy = energy + p.field(v)[a];
            for &(w, e) in g.incident(v) {
                // count interior edges once
                if in_region[w] && w < v {
                    continue;
                }
                let b = coloring[w].expect("neighbors lie inside the checked boundary");
                energy = energy + p.pair_from(g, e, v, a, b);
            }
        }
        log_w.push(-energy);
    }
    normalize_log_weights(&mut log_w);
    DistTable::new(region.to_vec(), q, log_w)
}

fn full_table_positions<T: Scalar>(nu: &DistTable<T>, n: usize) -> Result<()> {
    if nu.domain() != (0..n).collect::<Vec<_>>().as_slice() {
        return Err(Error::DomainMismatch(
            "expected a full table over vertices 0..n in order".into(),
        ));
    }
    Ok(())
}

/// Iterates over `(conditioning config, conditional table)` of `nu`'s law on
/// the first `k` sites of `joint` given the remaining sites.
fn conditionals<T: Scalar>(joint: &DistTable<T>, k: usize, mut visit: impl FnMut(&[usize], &[T])) {
    let q = joint.alphabet();
    let inner = q.pow(k as u32);
    let outer = joint.len() / inner;
    let mut rest = vec![0usize; joint.arity() - k];
    let mut cond = vec![T::zero(); inner];
    for t in 0..outer {
        let mass: T = (0..inner).map(|s| joint.probs()[s * outer + t]).sum();
        if !(mass > T::zero()) {
            continue;
        }
        for (s, c) in cond.iter_mut().enumerate() {
            *c = joint.probs()[s * outer + t] / mass;
        }
        let mut x = t;
        for slot in rest.iter_mut().rev() {
            *slot = x % q;
            x /= q;
        }
        visit(&rest, &cond);
    }
}

/// Largest deviation between `nu`'s conditionals on `region` given its
/// 2-neighborhood and the potential's prescribed conditionals.
pub fn dlr_check<T: Scalar, G: Topology + ?Sized>(
    nu: &DistTable<T>,
    p: &Potential<T>,
    g: &G,
    region: &[usize],
) -> Result<T> {
    full_table_positions(nu, g.num_vertices())?;
    validate_region(g, region)?;
    let outer = neighborhood(g, region, 2);
    let positions: Vec<usize> = region.iter().chain(&outer).copied().collect();
    let joint = nu.marginal(&positions);
    let mut worst = T::zero();
    let mut failure = None;
    conditionals(&joint, region.len(), |t, cond| {
        let boundary: Boundary = outer.iter().copied().zip(t.iter().copied()).collect();
        match conditional_table(p, g, &boundary, region) {
            Ok(expected) => {
                for (a, b) in cond.iter().zip(expected.probs()) {
                    worst = worst.max((*a - *b).abs());
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(worst),
    }
}

/// Markov property in finite form: the conditional law on `region` given
/// everything outside equals the conditional given the 2-neighborhood,
/// across all exterior completions. Returns the largest deviation.
pub fn markov_check<T: Scalar, G: Topology + ?Sized>(
    nu: &DistTable<T>,
    g: &G,
    region: &[usize],
) -> Result<T> {
    full_table_positions(nu, g.num_vertices())?;
    validate_region(g, region)?;
    let n = g.num_vertices();
    let near = neighborhood(g, region, 2);
    let inside: BTreeSet<usize> = region.iter().copied().collect();
    let exterior: Vec<usize> = (0..n).filter(|v| !inside.contains(v)).collect();

    let near_positions: Vec<usize> = region.iter().chain(&near).copied().collect();
    let near_joint = nu.marginal(&near_positions);
    let mut local = BTreeMap::new();
    conditionals(&near_joint, region.len(), |t, cond| {
        local.insert(t.to_vec(), cond.to_vec());
    });

    let full_positions: Vec<usize> = region.iter().chain(&exterior).copied().collect();
    let full = nu.marginal(&full_positions);
    let near_in_exterior: Vec<usize> = near
        .iter()
        .map(|v| exterior.iter().position(|w| w == v).unwrap())
        .collect();
    let mut worst = T::zero();
    conditionals(&full, region.len(), |ext, cond| {
        let key: Vec<usize> = near_in_exterior.iter().map(|&i| ext[i]).collect();
        let reference = &local[&key];
        for (a, b) in cond.iter().zip(reference) {
            worst = worst.max((*a - *b).abs());
        }
    });
    Ok(worst)
}

/// Lifts a base potential to a covering: every cover vertex and lifted edge
/// carries the table of what it projects to.
pub fn transfer_potential<T: Scalar>(p: &Potential<T>, c: &NFoldCovering) -> Result<Potential<T>> {
    p.check_topology(c.base())?;
    let fields = (0..c.num_vertices())
        .map(|x| p.field(c.project(x)).to_vec())
        .collect();
    let pairs = (0..c.num_edges())
        .map(|le| p.pair_table(c.project_edge(le)).to_vec())
        .collect();
    Potential::new(p.alphabet(), fields, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::random_covering;
    use crate::graph::Graph;
    use approx::assert_abs_diff_eq;

    fn k2() -> Graph {
        Graph::from_edges(&[(0, 1)]).unwrap()
    }

    #[test]
    fn zero_potential_is_uniform() {
        let g = k2();
        let nu = brute_force_gibbs(&g, &Potential::<f64>::zero(&g, 3).unwrap()).unwrap();
        for &p in nu.probs() {
            assert_abs_diff_eq!(p, 1.0 / 9.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn k2_ising_closed_form() {
        let g = k2();
        let nu = brute_force_gibbs(&g, &Potential::ising(&g, 0.5, 0.0).unwrap()).unwrap();
        let z = 2.0 * 0.5f64.exp() + 2.0 * (-0.5f64).exp();
        assert_abs_diff_eq!(nu.prob(&[0, 0]), 0.5f64.exp() / z, epsilon = 1e-15);
        assert_abs_diff_eq!(nu.prob(&[1, 1]), 0.5f64.exp() / z, epsilon = 1e-15);
        assert_abs_diff_eq!(nu.prob(&[0, 1]), (-0.5f64).exp() / z, epsilon = 1e-15);
    }

    // Independent oracle: weight of each coloring summed edge by edge with
    // spins, no use of the Potential tables.
    fn ising_cycle_oracle(n: usize, beta: f64, field: f64) -> Vec<f64> {
        let mut w = Vec::new();
        for idx in 0..1usize << n {
            let s: Vec<f64> = (0..n)
                .map(|i| {
                    if idx >> (n - 1 - i) & 1 == 1 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect();
            let mut e = 0.0;
            for i in 0..n {
                e += beta * s[i] * s[(i + 1) % n] + field * s[i];
            }
            w.push(e.exp());
        }
        let z: f64 = w.iter().sum();
        w.iter().map(|x| x / z).collect()
    }

    #[test]
    fn c4_ising_matches_enumeration_oracle() {
        let g = Graph::cycle(4).unwrap();
        let nu = brute_force_gibbs(&g, &Potential::ising(&g, 0.3, 0.0).unwrap()).unwrap();
        let oracle = ising_cycle_oracle(4, 0.3, 0.0);
        assert_eq!(nu.len(), 16);
        for (a, b) in nu.probs().iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        let with_field = brute_force_gibbs(&g, &Potential::ising(&g, 0.5, 0.2).unwrap()).unwrap();
        for (a, b) in with_field
            .probs()
            .iter()
            .zip(&ising_cycle_oracle(4, 0.5, 0.2))
        {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn vertex_energies_sum_to_total() {
        let g = Graph::petersen();
        let p = Potential::potts(&g, 3, 0.7).unwrap();
        let omega: Vec<usize> = (0..10).map(|i| (i * 7) % 3).collect();
        let total: f64 = (0..10).map(|v| p.vertex_energy(&g, v, &omega)).sum();
        assert_abs_diff_eq!(total, p.energy(&g, &omega), epsilon = 1e-12);
    }

    #[test]
    fn brute_force_respects_cap() {
        let g = Graph::path(13).unwrap();
        let p = Potential::<f64>::potts(&g, 4, 0.1).unwrap();
        assert!(matches!(
            brute_force_gibbs(&g, &p),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn decoupled_site_conditional() {
        let g = Graph::path(3).unwrap();
        let mut p = Potential::<f64>::zero(&g, 2).unwrap();
        p.set_field(1, 0, 0.3);
        p.set_field(1, 1, -0.4);
        let b: Boundary = [(0, 1), (2, 0)].into_iter().collect();
        let t = conditional_table(&p, &g, &b, &[1]).unwrap();
        let z = (-0.3f64).exp() + 0.4f64.exp();
        assert_abs_diff_eq!(t.probs()[0], (-0.3f64).exp() / z, epsilon = 1e-15);
    }

    #[test]
    fn path_conditional_two_term_formula() {
        let g = Graph::path(3).unwrap();
        let beta: f64 = 0.7;
        let p = Potential::ising(&g, beta, 0.0).unwrap();
        for a in 0..2 {
            let b: Boundary = [(0, a), (2, a)].into_iter().collect();
            let t = conditional_table(&p, &g, &b, &[1]).unwrap();
            let e2 = (2.0 * beta).exp();
            assert_abs_diff_eq!(t.probs()[a], e2 / (e2 + 1.0 / e2), epsilon = 1e-15);
        }
    }

    #[test]
    fn conditional_requires_two_neighborhood() {
        let g = Graph::path(5).unwrap();
        let p = Potential::<f64>::ising(&g, 0.3, 0.0).unwrap();
        let b: Boundary = [(1, 0), (3, 0)].into_iter().collect();
        assert!(matches!(
            conditional_table(&p, &g, &b, &[2]),
            Err(Error::IncompleteBoundary(0))
        ));
        let b: Boundary = [(0, 0), (1, 0), (3, 0), (4, 1)].into_iter().collect();
        assert!(conditional_table(&p, &g, &b, &[2]).is_ok());
        let overlapping: Boundary = [(0, 0), (1, 0), (2, 0), (3, 0), (4, 1)]
            .into_iter()
            .collect();
        assert!(conditional_table(&p, &g, &overlapping, &[2]).is_err());
    }

    #[test]
    fn dlr_holds_for_gibbs_and_fails_for_uniform() {
        let g = Graph::cycle(4).unwrap();
        let p = Potential::ising(&g, 0.3, 0.0).unwrap();
        let nu = brute_force_gibbs(&g, &p).unwrap();
        assert!(dlr_check(&nu, &p, &g, &[0]).unwrap() <= 1e-10);
        assert!(dlr_check(&nu, &p, &g, &[1, 2]).unwrap() <= 1e-10);
        let uni = DistTable::uniform((0..4).collect(), 2);
        assert!(dlr_check(&uni, &p, &g, &[0]).unwrap() > 0.01);
    }

    #[test]
    fn markov_property_on_a_long_cycle() {
        // on C7 the exterior of a site is strictly larger than its
        // 2-neighborhood, so the check is not vacuous
        let g = Graph::cycle(7).unwrap();
        let p = Potential::ising(&g, 0.6, 0.1).unwrap();
        let nu = brute_force_gibbs(&g, &p).unwrap();
        for region in [vec![0], vec![2, 3], vec![1, 5]] {
            assert!(markov_check(&nu, &g, &region).unwrap() <= 1e-10);
            assert!(dlr_check(&nu, &p, &g, &region).unwrap() <= 1e-10);
        }
        // an arbitrary positive table is not Markov
        let mut w: Vec<f64> = (0..128).map(|i| 1.0 + (i % 5) as f64).collect();
        w[3] = 40.0;
        let bad = DistTable::from_weights((0..7).collect(), 2, w).unwrap();
        assert!(markov_check(&bad, &g, &[0]).unwrap() > 1e-3);
    }

    #[test]
    fn transfer_on_trivial_cover_reproduces_base() {
        let g = Graph::cycle(4).unwrap();
        let p = Potential::ising(&g, 0.4, 0.1).unwrap();
        let c = random_covering(&g, 1, 9).unwrap();
        let lifted = transfer_potential(&p, &c).unwrap();
        assert_eq!(lifted, p);
        let a = brute_force_gibbs(&g, &p).unwrap();
        let b = brute_force_gibbs(&c, &lifted).unwrap();
        assert_eq!(a.probs(), b.probs());
    }

    #[test]
    fn transfer_to_double_covers() {
        let beta = 0.8;
        let g = k2();
        let p = Potential::ising(&g, beta, 0.0).unwrap();
        let c = random_covering(&g, 2, 1).unwrap();
        let lifted = transfer_potential(&p, &c).unwrap();
        assert_eq!(c.num_edges(), 2);
        for le in 0..2 {
            assert_eq!(lifted.pair_table(le), p.pair_table(0));
        }

        let tri = Graph::cycle(3).unwrap();
        let pt = Potential::ising(&tri, beta, 0.0).unwrap();
        let six =
            NFoldCovering::from_permutations(tri, 2, vec![vec![1, 0], vec![0, 1], vec![0, 1]])
                .unwrap();
        let lifted = transfer_potential(&pt, &six).unwrap();
        assert_eq!(six.regular_degree(), Some(2));
        // relabel the 6-cycle as C6 and compare with Ising on C6
        let nu = brute_force_gibbs(&six, &lifted).unwrap();
        let mut order = vec![0usize];
        let mut prev = usize::MAX;
        while order.len() < 6 {
            let cur = *order.last().unwrap();
            let next = six
                .incident(cur)
                .iter()
                .map(|&(w, _)| w)
                .find(|&w| w != prev)
                .unwrap();
            prev = cur;
            order.push(next);
        }
        let c6 = Graph::cycle(6).unwrap();
        let reference = brute_force_gibbs(&c6, &Potential::ising(&c6, beta, 0.0).unwrap()).unwrap();
        let relabeled = nu.marginal_on(&order).unwrap();
        for (a, b) in relabeled.probs().iter().zip(reference.probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn potential_text_round_trip() {
        let g = Graph::cycle(4).unwrap();
        let mut p = Potential::<f64>::ising(&g, 0.3, 0.2).unwrap();
        let e = g.edge_index(3, 0).unwrap();
        p.set_pair(&g, e, 3, 1, 0, 2.5);
        let text = p.to_text(&g);
        let back = Potential::<f64>::parse(&text, &g).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.pair_from(&g, e, 3, 1, 0), 2.5);
        assert_eq!(back.pair_from(&g, e, 0, 0, 1), 2.5);

        let hand = "[alphabet]\n2\n[pairs]\n1 0 1 0 -1.0 # reversed orientation\n";
        let q = Potential::<f64>::parse(hand, &Graph::from_edges(&[(0, 1)]).unwrap()).unwrap();
        assert_eq!(q.pair_table(0), &[0.0, -1.0, 0.0, 0.0]);
        assert!(Potential::<f64>::parse("[fields]\n0 0 1\n", &g).is_err());
        assert!(Potential::<f64>::parse("[alphabet]\n2\n[pairs]\n0 2 0 0 1\n", &g).is_err());
    }

    #[test]
    fn single_precision_gibbs() {
        let g = Graph::cycle(4).unwrap();
        let p = Potential::<f32>::ising(&g, 0.3, 0.0).unwrap();
        let nu = brute_force_gibbs(&g, &p).unwrap();
        let oracle = ising_cycle_oracle(4, 0.3, 0.0);
        for (a, b) in nu.probs().iter().zip(&oracle) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
        assert!(dlr_check(&nu, &p, &g, &[0]).unwrap() < 1e-5);
    }
}
