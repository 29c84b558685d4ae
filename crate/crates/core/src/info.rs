//! Entropy, mutual information, total variation and covariance of exact
//! tables, all in nats.

use rand::Rng;

use crate::covering::seeded_rng;
use crate::dist::DistTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Real-valued function of a single symbol, applied at every site.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable<T = f64> {
    values: Vec<T>,
}

impl<T: Scalar> Observable<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observable values must be finite"));
        }
        Ok(Observable { values })
    }

    /// `a ↦ 2a - 1` on a binary alphabet.
    pub fn spin() -> Self {
        Observable {
            values: vec![-T::one(), T::one()],
        }
    }

    pub fn indicator(alphabet: usize, symbol: usize) -> Self {
        let values = (0..alphabet)
            .map(|a| if a == symbol { T::one() } else { T::zero() })
            .collect();
        Observable { values }
    }

    /// `a ↦ a`.
    pub fn identity(alphabet: usize) -> Self {
        Observable {
            values: (0..alphabet).map(T::from_count).collect(),
        }
    }

    pub fn value(&self, a: usize) -> T {
        self.values[a]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

fn plogp<T: Scalar>(p: T) -> T {
    if p > T::zero() {
        p * p.ln()
    } else {
        T::zero()
    }
}

/// Shannon entropy with `0 log 0 = 0`.
pub fn entropy<T: Scalar>(p: &DistTable<T>) -> T {
    let h = -p.probs().iter().map(|&x| plogp(x)).sum::<T>();
    h.max(T::zero())
}

/// `H(X) + H(Y) - H(X, Y)` for a two-site table.
///
/// Evaluated as `Σ r φ((p - r) / r)` with `r` the product of marginals and
/// `φ(δ) = (1 + δ) ln(1 + δ) - δ ≥ 0`, which keeps full relative precision
/// when the joint is close to a product; the entropy difference would
/// cancel to zero there.
pub fn mutual_information<T: Scalar>(joint: &DistTable<T>) -> Result<T> {
    joint.expect_pair()?;
    let q = joint.alphabet();
    let px = joint.marginal(&[0]);
    let py = joint.marginal(&[1]);
    let mut total = T::zero();
    for a in 0..q {
        for b in 0..q {
            let p = joint.get2(a, b);
            let r = px.probs()[a] * py.probs()[b];
            if r > T::zero() {
                total = total + r * phi((p - r) / r);
            }
        }
    }
    Ok(total.max(T::zero()))
}

/// `(1 + δ) ln(1 + δ) - δ`, by its Taylor series near zero.
fn phi<T: Scalar>(delta: T) -> T {
    if delta <= -T::one() {
        return T::one();
    }
    if delta.abs() < T::lit(1e-2) {
        // Σ_{n≥2} (-1)^n δ^n / (n (n - 1))
        let mut term = delta * delta;
        let mut sum = T::zero();
        for n in 2..10 {
            let c = T::from_count(n * (n - 1));
            sum = if n % 2 == 0 {
                sum + term / c
            } else {
                sum - term / c
            };
            term = term * delta;
        }
        return sum;
    }
    (T::one() + delta) * delta.ln_1p() - delta
}

/// Half the L1 distance; tables must share arity and alphabet.
pub fn tv_distance<T: Scalar>(p: &DistTable<T>, q: &DistTable<T>) -> Result<T> {
    if !p.same_shape(q) {
        return Err(Error::DomainMismatch(format!(
            "{} sites over {} symbols vs {} sites over {} symbols",
            p.arity(),
            p.alphabet(),
            q.arity(),
            q.alphabet()
        )));
    }
    let l1: T = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&a, &b)| (a - b).abs())
        .sum();
    Ok(l1 / T::lit(2.0))
}

/// `E f(X) g(Y) - E f(X) E g(Y)` under a two-site table.
pub fn covariance<T: Scalar>(
    joint: &DistTable<T>,
    f: &Observable<T>,
    g: &Observable<T>,
) -> Result<T> {
    joint.expect_pair()?;
    let q = joint.alphabet();
    if f.values().len() != q || g.values().len() != q {
        return Err(Error::DomainMismatch(
            "observable does not cover the alphabet".into(),
        ));
    }
    let mut exy = T::zero();
    let mut ex = T::zero();
    let mut ey = T::zero();
    for a in 0..q {
        for b in 0..q {
            let p = joint.get2(a, b);
            exy = exy + p * f.value(a) * g.value(b);
            ex = ex + p * f.value(a);
            ey = ey + p * g.value(b);
        }
    }
    Ok(exy - ex * ey)
}

/// The explicit decorrelation chain for one pair table: total variation
/// from independence, its Pinsker bound, and the coupling bound on the
/// covariance of `f` with itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecorrelationChain<T = f64> {
    pub mutual_info: T,
    pub tv_from_product: T,
    pub pinsker_bound: T,
    pub covariance: T,
    pub covariance_bound: T,
}

impl<T: Scalar> DecorrelationChain<T> {
    pub fn compute(joint: &DistTable<T>, f: &Observable<T>) -> Result<Self> {
        let mutual_info = mutual_information(joint)?;
        let tv_from_product = tv_distance(joint, &joint.product_of_marginals()?)?;
        let covariance = covariance(joint, f, f)?;
        let s = f.sup_norm();
        Ok(DecorrelationChain {
            mutual_info,
            tv_from_product,
            pinsker_bound: (mutual_info / T::lit(2.0)).sqrt(),
            covariance,
            covariance_bound: T::lit(4.0) * s * s * tv_from_product,
        })
    }

    pub fn holds(&self, slack: T) -> bool {
        self.tv_from_product <= self.pinsker_bound + slack
            && self.covariance.abs() <= self.covariance_bound + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticBoundReport {
    /// Smallest sampled `I(ξ) / ‖ξ - η⊗η‖²`.
    pub worst_ratio: f64,
    pub best_ratio: f64,
    pub samples: usize,
}

/// Random zero-margin direction on `q × q`, scaled to unit total variation.
fn zero_margin_direction<R: Rng>(q: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..q * q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let row: Vec<f64> = (0..q)
            .map(|a| (0..q).map(|b| g[a * q + b]).sum::<f64>() / q as f64)
            .collect();
        let col: Vec<f64> = (0..q)
            .map(|b| (0..q).map(|a| g[a * q + b]).sum::<f64>() / q as f64)
            .collect();
        let mean = row.iter().sum::<f64>() / q as f64;
        let mut d: Vec<f64> = (0..q * q)
            .map(|i| g[i] - row[i / q] - col[i % q] + mean)
            .collect();
        let tv = d.iter().map(|x| x.abs()).sum::<f64>() / 2.0;
        if tv > 1e-9 {
            d.iter_mut().for_each(|x| *x /= tv);
            return d;
        }
    }
}

/// Samples pair tables `ξ` with both marginals equal to `eta` at total
/// variation `magnitude` from `eta ⊗ eta` and reports the extreme ratios
/// of mutual information to squared distance.
pub fn quadratic_info_bound_check<T: Scalar>(
    eta: &DistTable<T>,
    n_perturbations: usize,
    magnitude: f64,
    seed: u64,
) -> Result<QuadraticBoundReport> {
    if eta.arity() != 1 {
        return Err(Error::DomainMismatch(
            "eta must be a single-site table".into(),
        ));
    }
    if !(magnitude > 0.0) {
        return Err(Error::invalid("perturbation magnitude must be positive"));
    }
    if n_perturbations == 0 {
        return Err(Error::invalid("need at least one perturbation"));
    }
    let q = eta.alphabet();
    let eta64: Vec<f64> = eta.probs().iter().map(|p| p.as_f64()).collect();
    if eta64.iter().any(|&p| p <= 0.0) {
        return Err(Error::invalid("eta must be strictly positive"));
    }
    let base: Vec<f64> = (0..q * q).map(|i| eta64[i / q] * eta64[i % q]).collect();
    let product = DistTable::<f64>::new(vec![0, 1], q, base.clone())?;
    let mut rng = seeded_rng(seed);
    let mut worst = f64::INFINITY;
    let mut best = 0.0_f64;
    for _ in 0..n_perturbations {
        let d = zero_margin_direction(q, &mut rng);
        let xi: Vec<f64> = base
            .iter()
            .zip(&d)
            .map(|(b, x)| b + magnitude * x)
            .collect();
        if xi.iter().any(|&p| p < 0.0) {
            return Err(Error::PerturbationInfeasible { magnitude });
        }
        let xi = DistTable::<f64>::new(vec![0, 1], q, xi)?;
        let dist = tv_distance(&xi, &product)?;
        let ratio = mutual_information(&xi)? / (dist * dist);
        worst = worst.min(ratio);
        best = best.max(ratio);
    }
    Ok(QuadraticBoundReport {
        worst_ratio: worst,
        best_ratio: best,
        samples: n_perturbations,
    })
}
