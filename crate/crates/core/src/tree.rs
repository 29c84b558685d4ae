//! Unique Gibbs measures on the `d`-regular tree as tree-indexed Markov
//! chains: belief-propagation fixed points, pair laws at distance `k`,
//! mutual-information decay tables and exact ball marginals.

use std::fmt::Write as _;

use rand::Rng;

use crate::covering::seeded_rng;
use crate::dist::{check_cap, DistTable, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::graph::RootedBall;
use crate::info::{entropy, mutual_information};
use crate::scalar::{log_sum_exp, Scalar};

pub const DEFAULT_MAX_ITERATIONS: usize = 200_000;

/// Nearest-neighbor specification on `T_d`: one symmetric pair table and
/// one field table shared by all edges and vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel<T = f64> {
    pub degree: usize,
    pub alphabet: usize,
    pub pair: Vec<T>,
    pub field: Vec<T>,
}

impl<T: Scalar> TreeModel<T> {
    pub fn new(degree: usize, pair: Vec<T>, field: Vec<T>) -> Result<Self> {
        let q = field.len();
        if degree < 3 {
            return Err(Error::invalid("tree degree must be at least 3"));
        }
        if q < 2 || pair.len() != q * q {
            return Err(Error::invalid("pair table must be q × q with q ≥ 2"));
        }
        for a in 0..q {
            for b in 0..a {
                if pair[a * q + b] != pair[b * q + a] {
                    return Err(Error::invalid("pair table must be symmetric on the tree"));
                }
            }
        }
        if pair.iter().chain(&field).any(|x| !x.is_finite()) {
            return Err(Error::invalid("model entries must be finite"));
        }
        Ok(TreeModel {
            degree,
            alphabet: q,
            pair,
            field,
        })
    }

    pub fn ising(degree: usize, beta: T, field: T) -> Result<Self> {
        let (h, j) = crate::gibbs::ising_tables(beta, field);
        TreeModel::new(degree, j, h)
    }

    pub fn potts(degree: usize, q: usize, beta: T) -> Result<Self> {
        let (h, j) = crate::gibbs::potts_tables(q, beta);
        TreeModel::new(degree, j, h)
    }

    /// `ln M(a) = ln Σ_b e^{-J(a,b)} m(b)`: the message a child subtree
    /// with cavity law `m` sends to its parent.
    fn log_incoming(&self, m: &[T], out: &mut [T]) {
        let q = self.alphabet;
        let mut terms = vec![T::zero(); q];
        for (a, slot) in out.iter_mut().enumerate() {
            for b in 0..q {
                terms[b] = -self.pair[a * q + b] + m[b].ln();
            }
            *slot = log_sum_exp(&terms);
        }
    }

    /// The cavity recursion `m'(a) ∝ e^{-h(a)} M(a)^{d-1}`.
    pub fn bp_map(&self, m: &[T]) -> Vec<T> {
        let mut log_m = vec![T::zero(); self.alphabet];
        self.log_incoming(m, &mut log_m);
        let k = T::from_count(self.degree - 1);
        for (a, x) in log_m.iter_mut().enumerate() {
            *x = -self.field[a] + k * *x;
        }
        crate::scalar::normalize_log_weights(&mut log_m);
        log_m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BPResult<T = f64> {
    /// Cavity law of a vertex with its parent removed.
    pub message: Vec<T>,
    pub converged: bool,
    /// Every tested initialization reached `message` within `10·tol`.
    pub unique: bool,
    pub iterations: usize,
    /// Distinct fixed points found across initializations.
    pub fixed_points: Vec<Vec<T>>,
}

struct Iterated<T> {
    message: Vec<T>,
    converged: bool,
    iterations: usize,
}

fn iterate<T: Scalar>(model: &TreeModel<T>, start: Vec<T>, tol: T, max_iter: usize) -> Iterated<T> {
    let half = T::lit(0.5);
    let floor = T::epsilon() * T::lit(8.0);
    let mut m = start;
    let mut prev_residual = T::infinity();
    let mut stalls = 0;
    let mut damped = false;
    for it in 1..=max_iter {
        let mut next = model.bp_map(&m);
        if damped {
            for (x, &old) in next.iter_mut().zip(&m) {
                *x = half * *x + half * old;
            }
        }
        let residual = next
            .iter()
            .zip(&m)
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()));
        m = next;
        // geometric tail estimate, so the distance to the fixed point and
        // not just the step length is below tol
        let rate = if prev_residual.is_finite() && prev_residual > T::zero() {
            (residual / prev_residual).min(T::lit(0.999_999))
        } else {
            T::zero()
        };
        if residual <= floor || (residual <= tol && residual * rate / (T::one() - rate) <= tol) {
            return Iterated {
                message: m,
                converged: true,
                iterations: it,
            };
        }
        if residual >= prev_residual {
            stalls += 1;
            if stalls >= 5 && !damped {
                damped = true;
            }
        } else {
            stalls = 0;
        }
        prev_residual = residual;
    }
    Iterated {
        message: m,
        converged: false,
        iterations: max_iter,
    }
}

/// Solves the cavity fixed-point equation on `T_d`.
///
/// The returned message comes from the uniform start. Uniqueness is
/// certified operationally: the `q` all-one-symbol starts and `n_inits`
/// random starts must all converge to that message within `10·tol`.
pub fn bp_solve<T: Scalar>(
    model: &TreeModel<T>,
    tol: T,
    n_inits: usize,
    seed: u64,
) -> Result<BPResult<T>> {
    bp_solve_with(model, tol, n_inits, seed, DEFAULT_MAX_ITERATIONS)
}

pub fn bp_solve_with<T: Scalar>(
    model: &TreeModel<T>,
    tol: T,
    n_inits: usize,
    seed: u64,
    max_iter: usize,
) -> Result<BPResult<T>> {
    if !(tol > T::zero()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if n_inits < 2 {
        return Err(Error::invalid("need at least two random initializations"));
    }
    let q = model.alphabet;
    let primary = iterate(model, vec![T::one() / T::from_count(q); q], tol, max_iter);
    if !primary.converged {
        let last = model.bp_map(&primary.message);
        let residual = last
            .iter()
            .zip(&primary.message)
            .fold(0.0_f64, |acc, (a, b)| acc.max((*a - *b).abs().as_f64()));
        return Err(Error::NotConverged {
            iterations: primary.iterations,
            residual,
        });
    }
    let mut starts: Vec<Vec<T>> = (0..q)
        .map(|a| {
            (0..q)
                .map(|b| if a == b { T::one() } else { T::zero() })
                .collect()
        })
        .collect();
    let mut rng = seeded_rng(seed);
    for _ in 0..n_inits {
        let w: Vec<f64> = (0..q).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let s: f64 = w.iter().sum();
        starts.push(w.into_iter().map(|x| T::lit(x / s)).collect());
    }
    let same = T::lit(10.0) * tol;
    let mut fixed_points = vec![primary.message.clone()];
    let mut unique = true;
    for start in starts {
        let run = iterate(model, start, tol, max_iter);
        if !run.converged {
            unique = false;
            continue;
        }
        let close = |fp: &Vec<T>| {
            fp.iter()
                .zip(&run.message)
                .all(|(a, b)| (*a - *b).abs() <= same)
        };
        if !close(&primary.message) {
            unique = false;
        }
        if !fixed_points.iter().any(close) {
            fixed_points.push(run.message);
        }
    }
    Ok(BPResult {
        message: primary.message,
        converged: true,
        unique,
        iterations: primary.iterations,
        fixed_points,
    })
}

/// Stationary reversible chain along the edges of `T_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeChain<T = f64> {
    degree: usize,
    pi: Vec<T>,
    transition: Vec<T>,
}

impl<T: Scalar> TreeChain<T> {
    /// Validates positivity, normalization and detailed balance.
    pub fn new(degree: usize, pi: Vec<T>, transition: Vec<T>) -> Result<Self> {
        let q = pi.len();
        if degree < 3 {
            return Err(Error::invalid("tree degree must be at least 3"));
        }
        if q < 1 || transition.len() != q * q {
            return Err(Error::invalid("transition matrix must be q × q"));
        }
        let mass_tol = T::mass_tolerance();
        if pi.iter().any(|&p| !(p > T::zero())) {
            return Err(Error::InvariantViolation(
                "root marginal must be strictly positive".into(),
            ));
        }
        let total: T = pi.iter().copied().sum();
        if (total - T::one()).abs() > mass_tol {
            return Err(Error::InvariantViolation(format!(
                "root marginal sums to {total}"
            )));
        }
        for a in 0..q {
            let row = &transition[a * q..(a + 1) * q];
            if row.iter().any(|&x| !(x >= T::zero())) {
                return Err(Error::InvariantViolation(format!(
                    "row {a} has a negative entry"
                )));
            }
            let s: T = row.iter().copied().sum();
            if (s - T::one()).abs() > mass_tol {
                return Err(Error::InvariantViolation(format!("row {a} sums to {s}")));
            }
        }
        let chain = TreeChain {
            degree,
            pi,
            transition,
        };
        let r = chain.reversibility_residual();
        if r > T::balance_tolerance() {
            return Err(Error::InvariantViolation(format!(
                "detailed balance residual {r}"
            )));
        }
        Ok(chain)
    }

    /// Every vertex independent with law `pi`.
    pub fn independent(degree: usize, pi: Vec<T>) -> Result<Self> {
        let transition = (0..pi.len()).flat_map(|_| pi.iter().copied()).collect();
        TreeChain::new(degree, pi, transition)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn alphabet(&self) -> usize {
        self.pi.len()
    }

    pub fn root_marginal(&self) -> &[T] {
        &self.pi
    }

    pub fn transition(&self, a: usize, b: usize) -> T {
        self.transition[a * self.pi.len() + b]
    }

    pub fn transition_matrix(&self) -> &[T] {
        &self.transition
    }

    /// `max |π(a)P(a,b) - π(b)P(b,a)|`.
    pub fn reversibility_residual(&self) -> T {
        let q = self.pi.len();
        let mut worst = T::zero();
        for a in 0..q {
            for b in 0..q {
                let d = self.pi[a] * self.transition(a, b) - self.pi[b] * self.transition(b, a);
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    /// `max |πP - π|`.
    pub fn stationarity_residual(&self) -> T {
        let q = self.pi.len();
        (0..q)
            .map(|b| {
                let s: T = (0..q).map(|a| self.pi[a] * self.transition(a, b)).sum();
                (s - self.pi[b]).abs()
            })
            .fold(T::zero(), T::max)
    }

    pub fn root_table(&self) -> DistTable<T> {
        DistTable::from_vector(0, self.pi.clone()).expect("validated root marginal")
    }

    pub fn edge_table(&self) -> DistTable<T> {
        joint_at_distance(self, 1).expect("k = 1")
    }
}

/// Builds the tree chain of a converged BP solution:
/// `π(a) ∝ e^{-h(a)} M(a)^d` and `P(a,b) = e^{-J(a,b)} m(b) / M(a)`.
pub fn chain_from_bp<T: Scalar>(bp: &BPResult<T>, model: &TreeModel<T>) -> Result<TreeChain<T>> {
    if !bp.converged {
        return Err(Error::invalid("belief propagation did not converge"));
    }
    let q = model.alphabet;
    let m = &bp.message;
    if m.len() != q {
        return Err(Error::DomainMismatch(
            "message length differs from alphabet".into(),
        ));
    }
    let mut log_in = vec![T::zero(); q];
    model.log_incoming(m, &mut log_in);
    let d = T::from_count(model.degree);
    let mut pi: Vec<T> = (0..q).map(|a| -model.field[a] + d * log_in[a]).collect();
    crate::scalar::normalize_log_weights(&mut pi);
    let mut transition = vec![T::zero(); q * q];
    for a in 0..q {
        let mut row: Vec<T> = (0..q)
            .map(|b| -model.pair[a * q + b] + m[b].ln() - log_in[a])
            .collect();
        crate::scalar::normalize_log_weights(&mut row);
        transition[a * q..(a + 1) * q].copy_from_slice(&row);
    }
    TreeChain::new(model.degree, pi, transition)
}

fn mat_mul<T: Scalar>(a: &[T], b: &[T], q: usize) -> Vec<T> {
    let mut out = vec![T::zero(); q * q];
    for i in 0..q {
        for k in 0..q {
            let x = a[i * q + k];
            for j in 0..q {
                out[i * q + j] = out[i * q + j] + x * b[k * q + j];
            }
        }
    }
    out
}

/// Law of the colors at two vertices at distance `k`: `π(a) (P^k)(a, b)`.
pub fn joint_at_distance<T: Scalar>(chain: &TreeChain<T>, k: usize) -> Result<DistTable<T>> {
    if k == 0 {
        return Err(Error::invalid("distance must be at least 1"));
    }
    let q = chain.alphabet();
    let mut power = chain.transition.clone();
    for _ in 1..k {
        power = mat_mul(&power, &chain.transition, q);
    }
    let probs = (0..q * q).map(|i| chain.pi[i / q] * power[i]).collect();
    DistTable::from_matrix((0, 1), q, probs)
}

/// Upper bound on `I(X_u, X_v) / H(X_v)` at distance `k` with `l = ⌊k/2⌋`:
/// `2 / (d (d-1)^l)` for odd `k`, `1 / (d-1)^l` for even `k`.
pub fn decay_bound(degree: usize, k: usize) -> f64 {
    let l = (k / 2) as i32;
    let base = (degree - 1) as f64;
    if k % 2 == 1 {
        2.0 / (degree as f64 * base.powi(l))
    } else {
        1.0 / base.powi(l)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow<T = f64> {
    pub k: usize,
    pub mutual_info: T,
    pub entropy: T,
    pub ratio: T,
    pub bound: f64,
    pub pass: bool,
}

pub fn decay_table<T: Scalar>(chain: &TreeChain<T>, k_max: usize) -> Result<Vec<DecayRow<T>>> {
    let h = entropy(&chain.root_table());
    (1..=k_max)
        .map(|k| {
            let mi = mutual_information(&joint_at_distance(chain, k)?)?;
            let ratio = if h > T::zero() { mi / h } else { T::zero() };
            let bound = decay_bound(chain.degree, k);
            Ok(DecayRow {
                k,
                mutual_info: mi,
                entropy: h,
                ratio,
                bound,
                pass: ratio.as_f64() <= bound,
            })
        })
        .collect()
}

pub const DECAY_CSV_HEADER: &str = "k,mutual_info,entropy,ratio,bound,pass";

/// Renders rows as `k,mutual_info,entropy,ratio,bound,pass`.
pub fn decay_csv<T: Scalar>(rows: &[DecayRow<T>]) -> String {
    let mut out = String::from(DECAY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{}",
            r.k,
            r.mutual_info.as_f64(),
            r.entropy.as_f64(),
            r.ratio.as_f64(),
            r.bound,
            r.pass
        )
        .unwrap();
    }
    out
}

/// Finite subtree of `T_d` as a parent array; vertex 0 is the root and
/// `parent[i] < i` for every other vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeShape {
    parent: Vec<Option<usize>>,
}

impl TreeShape {
    pub fn new(parent: Vec<Option<usize>>) -> Result<Self> {
        if parent.first() != Some(&None) {
            return Err(Error::invalid("vertex 0 must be the root"));
        }
        for (i, p) in parent.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < i => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "vertex {i} needs a parent with a smaller index"
                    )))
                }
            }
        }
        Ok(TreeShape { parent })
    }

    pub fn single() -> Self {
        TreeShape { parent: vec![None] }
    }

    /// Ball of radius `r` around a vertex of `T_d`, breadth-first.
    pub fn regular_ball(degree: usize, radius: usize) -> Self {
        let mut parent = vec![None];
        let mut frontier = 0..1;
        for depth in 0..radius {
            let start = parent.len();
            for node in frontier.clone() {
                let kids = if depth == 0 { degree } else { degree - 1 };
                parent.extend(std::iter::repeat_n(Some(node), kids));
            }
            frontier = start..parent.len();
        }
        TreeShape { parent }
    }

    /// Union of the radius-`r` balls around the two ends of an edge of
    /// `T_d`, rooted at one end; vertex 1 is the other end.
    pub fn regular_edge_union(degree: usize, radius: usize) -> Self {
        // root 0, partner 1; the root's side reaches depth r, the partner's
        // side reaches depth r + 1 from the root
        let mut parent = vec![None, Some(0)];
        let mut root_side: Vec<usize> = Vec::new();
        let mut far_side: Vec<usize> = vec![1];
        if radius > 0 {
            for _ in 0..degree - 1 {
                parent.push(Some(0));
                root_side.push(parent.len() - 1);
            }
        }
        for depth in 1..=radius {
            let mut next_far = Vec::new();
            for &x in &far_side {
                for _ in 0..degree - 1 {
                    parent.push(Some(x));
                    next_far.push(parent.len() - 1);
                }
            }
            far_side = next_far;
            if depth < radius {
                let mut next_root = Vec::new();
                for &x in &root_side {
                    for _ in 0..degree - 1 {
                        parent.push(Some(x));
                        next_root.push(parent.len() - 1);
                    }
                }
                root_side = next_root;
            }
        }
        TreeShape::new(parent).expect("constructed in breadth-first order")
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    /// Adjacency lists of the shape.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for (c, p) in self.parent.iter().enumerate() {
            if let Some(p) = *p {
                adj[p].push(c);
                adj[c].push(p);
            }
        }
        adj
    }

    /// The first `n` vertices, itself a subtree since parents come first.
    pub fn prefix(&self, n: usize) -> TreeShape {
        TreeShape {
            parent: self.parent[..n].to_vec(),
        }
    }
}

impl From<&RootedBall> for TreeShape {
    fn from(ball: &RootedBall) -> Self {
        TreeShape {
            parent: ball.parent.clone(),
        }
    }
}

/// Exact law of the chain on a finite subtree:
/// `π(ω_root) Π_{parent→child} P(ω_parent, ω_child)`.
pub fn ball_measure<T: Scalar>(chain: &TreeChain<T>, shape: &TreeShape) -> Result<DistTable<T>> {
    ball_measure_with_cap(chain, shape, DEFAULT_ENUMERATION_CAP)
}

pub fn ball_measure_with_cap<T: Scalar>(
    chain: &TreeChain<T>,
    shape: &TreeShape,
    cap: u128,
) -> Result<DistTable<T>> {
    let q = chain.alphabet();
    let n = shape.len();
    let len = check_cap(q, n, cap)?;
    let mut probs = Vec::with_capacity(len);
    let mut config = vec![0usize; n];

    fn fill<T: Scalar>(
        chain: &TreeChain<T>,
        shape: &TreeShape,
        i: usize,
        mass: T,
        config: &mut [usize],
        out: &mut Vec<T>,
    ) {
        if i == config.len() {
            out.push(mass);
            return;
        }
        for a in 0..chain.alphabet() {
            config[i] = a;
            let w = match shape.parent[i] {
                None => chain.pi[a],
                Some(p) => chain.transition(config[p], a),
            };
            fill(chain, shape, i + 1, mass * w, config, out);
        }
    }

    fill(chain, shape, 0, T::one(), &mut config, &mut probs);
    DistTable::new((0..n).collect(), q, probs)
}
