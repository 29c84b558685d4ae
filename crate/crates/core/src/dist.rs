//! Exact probability tables over colorings of a finite vertex set.

use crate::error::{Error, Result};
use crate::scalar::{mass_tolerance_for, Scalar};

/// Default limit on the number of states any exhaustive enumeration visits.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 24;

/// `alphabet^len`, or an error if it exceeds `cap`.
pub fn check_cap(alphabet: usize, len: usize, cap: u128) -> Result<usize> {
    let mut needed: u128 = 1;
    for _ in 0..len {
        needed = needed.saturating_mul(alphabet as u128);
    }
    if needed > cap {
        return Err(Error::CapExceeded { needed, cap });
    }
    Ok(needed as usize)
}

/// Probability of every coloring in `alphabet^domain`.
///
/// Colorings are indexed in mixed radix with the first domain vertex most
/// significant, so the table reads lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct DistTable<T = f64> {
    domain: Vec<usize>,
    alphabet: usize,
    probs: Vec<T>,
}

impl<T: Scalar> DistTable<T> {
    pub fn new(domain: Vec<usize>, alphabet: usize, probs: Vec<T>) -> Result<Self> {
        let len = check_cap(alphabet, domain.len(), u128::MAX)?;
        if probs.len() != len {
            return Err(Error::invalid(format!(
                "table over {} sites needs {len} entries, got {}",
                domain.len(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= T::zero())) {
            return Err(Error::InvariantViolation(format!(
                "negative or NaN probability {p}"
            )));
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > mass_tolerance_for::<T>(len) {
            return Err(Error::InvariantViolation(format!(
                "total mass {total} is not 1"
            )));
        }
        Ok(DistTable {
            domain,
            alphabet,
            probs,
        })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(domain: Vec<usize>, alphabet: usize, mut weights: Vec<T>) -> Result<Self> {
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::InvariantViolation(format!(
                "cannot normalize total weight {total}"
            )));
        }
        for w in &mut weights {
            *w = *w / total;
        }
        DistTable::new(domain, alphabet, weights)
    }

    pub fn uniform(domain: Vec<usize>, alphabet: usize) -> Self {
        let len = alphabet.pow(domain.len() as u32);
        let p = T::one() / T::from_count(len);
        DistTable {
            domain,
            alphabet,
            probs: vec![p; len],
        }
    }

    pub fn point_mass(domain: Vec<usize>, alphabet: usize, config: &[usize]) -> Self {
        let len = alphabet.pow(domain.len() as u32);
        let mut probs = vec![T::zero(); len];
        let mut t = DistTable {
            domain,
            alphabet,
            probs: Vec::new(),
        };
        probs[t.encode(config)] = T::one();
        t.probs = probs;
        t
    }

    /// Single-site table from a probability vector.
    pub fn from_vector(site: usize, probs: Vec<T>) -> Result<Self> {
        let q = probs.len();
        DistTable::new(vec![site], q, probs)
    }

    /// Two-site table from a row-major `q × q` matrix.
    pub fn from_matrix(sites: (usize, usize), alphabet: usize, probs: Vec<T>) -> Result<Self> {
        DistTable::new(vec![sites.0, sites.1], alphabet, probs)
    }

    pub fn domain(&self) -> &[usize] {
        &self.domain
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.domain.len()
    }

    pub fn encode(&self, config: &[usize]) -> usize {
        debug_assert_eq!(config.len(), self.domain.len());
        config.iter().fold(0, |acc, &a| acc * self.alphabet + a)
    }

    pub fn decode(&self, mut index: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = index % self.alphabet;
            index /= self.alphabet;
        }
    }

    pub fn prob(&self, config: &[usize]) -> T {
        self.probs[self.encode(config)]
    }

    /// Probability at a two-site coordinate.
    pub fn get2(&self, a: usize, b: usize) -> T {
        self.probs[a * self.alphabet + b]
    }

    /// Position of a vertex label in the domain.
    pub fn position(&self, vertex: usize) -> Option<usize> {
        self.domain.iter().position(|&w| w == vertex)
    }

    /// Marginal onto the listed domain positions, in the listed order.
    pub fn marginal(&self, positions: &[usize]) -> DistTable<T> {
        let domain: Vec<usize> = positions.iter().map(|&p| self.domain[p]).collect();
        let len = self.alphabet.pow(positions.len() as u32);
        let mut probs = vec![T::zero(); len];
        let mut config = vec![0; self.arity()];
        for (i, &p) in self.probs.iter().enumerate() {
            self.decode(i, &mut config);
            let j = positions
                .iter()
                .fold(0, |acc, &k| acc * self.alphabet + config[k]);
            probs[j] = probs[j] + p;
        }
        DistTable {
            domain,
            alphabet: self.alphabet,
            probs,
        }
    }

    /// Marginal onto the named vertices.
    pub fn marginal_on(&self, vertices: &[usize]) -> Result<DistTable<T>> {
        let positions = vertices
            .iter()
            .map(|&v| {
                self.position(v)
                    .ok_or_else(|| Error::DomainMismatch(format!("vertex {v} not in table domain")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.marginal(&positions))
    }

    /// Independent coupling; the domain is the concatenation.
    pub fn product(&self, other: &DistTable<T>) -> Result<DistTable<T>> {
        if self.alphabet != other.alphabet {
            return Err(Error::DomainMismatch("alphabets differ".into()));
        }
        let mut domain = self.domain.clone();
        domain.extend_from_slice(&other.domain);
        let mut probs = Vec::with_capacity(self.len() * other.len());
        for &p in &self.probs {
            for &q in &other.probs {
                probs.push(p * q);
            }
        }
        Ok(DistTable {
            domain,
            alphabet: self.alphabet,
            probs,
        })
    }

    /// For a two-site table, the product of its two marginals.
    pub fn product_of_marginals(&self) -> Result<DistTable<T>> {
        self.expect_pair()?;
        self.marginal(&[0]).product(&self.marginal(&[1]))
    }

    /// Swaps the two sites of a pair table.
    pub fn transpose(&self) -> Result<DistTable<T>> {
        self.expect_pair()?;
        Ok(self.marginal(&[1, 0]))
    }

    pub(crate) fn expect_pair(&self) -> Result<()> {
        if self.arity() != 2 {
            return Err(Error::DomainMismatch(format!(
                "expected a two-site table, got {} sites",
                self.arity()
            )));
        }
        Ok(())
    }

    /// Relabels the domain without touching the probabilities.
    pub fn with_domain(mut self, domain: Vec<usize>) -> Result<Self> {
        if domain.len() != self.domain.len() {
            return Err(Error::DomainMismatch("relabeling changes arity".into()));
        }
        self.domain = domain;
        Ok(self)
    }

    /// Same shape (arity and alphabet); labels are not compared.
    pub fn same_shape(&self, other: &DistTable<T>) -> bool {
        self.alphabet == other.alphabet && self.arity() == other.arity()
    }

    /// Convex combination `λ·self + (1-λ)·other`.
    pub fn mix(&self, other: &DistTable<T>, lambda: T) -> Result<DistTable<T>> {
        if !self.same_shape(other) {
            return Err(Error::DomainMismatch(
                "mixing tables of different shape".into(),
            ));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(&p, &q)| lambda * p + (T::one() - lambda) * q)
            .collect();
        Ok(DistTable {
            domain: self.domain.clone(),
            alphabet: self.alphabet,
            probs,
        })
    }

    /// Empirical distribution of a list of colorings of the domain.
    pub fn empirical<'a, I>(domain: Vec<usize>, alphabet: usize, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let len = check_cap(alphabet, domain.len(), DEFAULT_ENUMERATION_CAP)?;
        let mut counts = vec![0usize; len];
        let mut total = 0usize;
        for s in samples {
            let i = s.iter().fold(0, |acc, &a| acc * alphabet + a);
            counts[i] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::invalid("no samples"));
        }
        let n = T::from_count(total);
        let probs = counts.into_iter().map(|c| T::from_count(c) / n).collect();
        DistTable::new(domain, alphabet, probs)
    }

    pub fn cast<U: Scalar>(&self) -> DistTable<U> {
        DistTable {
            domain: self.domain.clone(),
            alphabet: self.alphabet,
            probs: self.probs.iter().map(|p| U::lit(p.as_f64())).collect(),
        }
    }
}
