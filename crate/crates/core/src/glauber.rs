//! Single-site heat-bath (Glauber) dynamics.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::covering::seeded_rng;
use crate::dist::DistTable;
use crate::error::{Error, Result};
use crate::gibbs::Potential;
use crate::graph::Topology;
use crate::scalar::{normalize_log_weights, Scalar};

/// Flat copy of a potential for fast single-site updates. Identical
/// tables share storage, so a lifted potential costs no more cache than
/// its base.
struct Compiled<T> {
    q: usize,
    offsets: Vec<usize>,
    nbr: Vec<u32>,
    /// Start of the pair table oriented with the updated site first.
    table: Vec<u32>,
    tables: Vec<T>,
    field: Vec<u32>,
    fields: Vec<T>,
}

impl<T: Scalar> Compiled<T> {
    fn new<G: Topology + ?Sized>(g: &G, p: &Potential<T>) -> Self {
        let q = p.alphabet();
        let mut ids: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut tables = Vec::new();
        let mut intern = |t: Vec<T>, store: &mut Vec<T>| -> u32 {
            let key = t.iter().map(|x| x.as_f64().to_bits()).collect();
            *ids.entry(key).or_insert_with(|| {
                let at = store.len() as u32;
                store.extend_from_slice(&t);
                at
            })
        };
        let mut offsets = vec![0];
        let mut nbr = Vec::new();
        let mut table = Vec::new();
        for v in 0..g.num_vertices() {
            for &(w, e) in g.incident(v) {
                let oriented = (0..q * q)
                    .map(|i| p.pair_from(g, e, v, i / q, i % q))
                    .collect();
                nbr.push(w as u32);
                table.push(intern(oriented, &mut tables));
            }
            offsets.push(nbr.len());
        }
        let mut fields = Vec::new();
        let field = (0..g.num_vertices())
            .map(|v| intern(p.field(v).to_vec(), &mut fields))
            .collect();
        Compiled {
            q,
            offsets,
            nbr,
            table,
            tables,
            field,
            fields,
        }
    }

    fn conditional(&self, state: &[usize], v: usize, out: &mut [T]) {
        let q = self.q;
        let f = self.field[v] as usize;
        for (a, slot) in out.iter_mut().enumerate() {
            *slot = -self.fields[f + a];
        }
        for i in self.offsets[v]..self.offsets[v + 1] {
            let b = state[self.nbr[i] as usize];
            let t = &self.tables[self.table[i] as usize..][..q * q];
            for (a, slot) in out.iter_mut().enumerate() {
                *slot = *slot - t[a * q + b];
            }
        }
        normalize_log_weights(out);
    }
}

/// One heat-bath chain. A sweep is `|V|` updates at uniformly random sites.
pub struct GlauberChain<T: Scalar> {
    compiled: Compiled<T>,
    state: Vec<usize>,
    rng: ChaCha8Rng,
    weights: Vec<T>,
}

impl<T: Scalar> GlauberChain<T> {
    /// Starts from a uniformly random coloring drawn from the seeded stream.
    pub fn new<G: Topology + ?Sized>(g: &G, p: &Potential<T>, seed: u64) -> Result<Self> {
        p.check_topology(g)?;
        let mut rng = seeded_rng(seed);
        let q = p.alphabet();
        let state = (0..g.num_vertices()).map(|_| rng.gen_range(0..q)).collect();
        Ok(GlauberChain {
            compiled: Compiled::new(g, p),
            state,
            rng,
            weights: vec![T::zero(); q],
        })
    }

    pub fn state(&self) -> &[usize] {
        &self.state
    }

    /// Resamples site `v` from its conditional law given the current state.
    pub fn update_site(&mut self, v: usize) {
        self.compiled.conditional(&self.state, v, &mut self.weights);
        let u = T::lit(self.rng.gen::<f64>());
        let mut acc = T::zero();
        let mut pick = self.weights.len() - 1;
        for (a, &w) in self.weights.iter().enumerate() {
            acc = acc + w;
            if u < acc {
                pick = a;
                break;
            }
        }
        self.state[v] = pick;
    }

    pub fn step(&mut self) {
        let v = self.rng.gen_range(0..self.state.len());
        self.update_site(v);
    }

    pub fn sweep(&mut self) {
        for _ in 0..self.state.len() {
            self.step();
        }
    }

    pub fn run(&mut self, sweeps: usize) {
        for _ in 0..sweeps {
            self.sweep();
        }
    }
}

/// Conditional law of site `v` given every other site of `state`.
pub(crate) fn site_conditional<T: Scalar, G: Topology + ?Sized>(
    g: &G,
    p: &Potential<T>,
    state: &[usize],
    v: usize,
    out: &mut [T],
) {
    for (a, slot) in out.iter_mut().enumerate() {
        let mut e = p.field(v)[a];
        for &(w, edge) in g.incident(v) {
            e = e + p.pair_from(g, edge, v, a, state[w]);
        }
        *slot = -e;
    }
    normalize_log_weights(out);
}

/// One coloring after `sweeps` sweeps from a uniform random start.
pub fn glauber_sample<T: Scalar, G: Topology + ?Sized>(
    g: &G,
    p: &Potential<T>,
    sweeps: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if sweeps == 0 {
        return Err(Error::invalid("need at least one sweep"));
    }
    let mut chain = GlauberChain::new(g, p, seed)?;
    chain.run(sweeps);
    Ok(chain.state)
}

/// Pushes a full table through the heat-bath update at a fixed site.
pub fn heat_bath_kernel<T: Scalar, G: Topology + ?Sized>(
    nu: &DistTable<T>,
    g: &G,
    p: &Potential<T>,
    v: usize,
) -> Result<DistTable<T>> {
    p.check_topology(g)?;
    let n = g.num_vertices();
    if nu.domain() != (0..n).collect::<Vec<_>>().as_slice() {
        return Err(Error::DomainMismatch(
            "expected a full table over vertices 0..n in order".into(),
        ));
    }
    let q = p.alphabet();
    let stride = q.pow((n - 1 - v) as u32);
    let mut out = vec![T::zero(); nu.len()];
    let mut state = vec![0usize; n];
    let mut cond = vec![T::zero(); q];
    for idx in 0..nu.len() {
        nu.decode(idx, &mut state);
        if state[v] != 0 {
            continue;
        }
        // mass of the fiber {ω : ω off v fixed}, redistributed by the conditional
        let mass: T = (0..q).map(|a| nu.probs()[idx + a * stride]).sum();
        site_conditional(g, p, &state, v, &mut cond);
        for (a, &c) in cond.iter().enumerate() {
            out[idx + a * stride] = mass * c;
        }
    }
    DistTable::new(nu.domain().to_vec(), q, out)
}

/// Pushes a full table through one uniformly-random-site update.
pub fn random_site_kernel<T: Scalar, G: Topology + ?Sized>(
    nu: &DistTable<T>,
    g: &G,
    p: &Potential<T>,
) -> Result<DistTable<T>> {
    let n = g.num_vertices();
    let mut acc = vec![T::zero(); nu.len()];
    for v in 0..n {
        let t = heat_bath_kernel(nu, g, p, v)?;
        for (a, &x) in acc.iter_mut().zip(t.probs()) {
            *a = *a + x;
        }
    }
    let n = T::from_count(n);
    DistTable::new(
        nu.domain().to_vec(),
        nu.alphabet(),
        acc.into_iter().map(|x| x / n).collect(),
    )
}
