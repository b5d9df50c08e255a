//! Categorical distributions and the information-theoretic helpers shared by
//! the world model, the preference store and the EFE terms.

use rand::Rng;

use crate::{Error, Result};

/// Tolerance on the total mass of a categorical distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over a finite support.
#[derive(Clone, Debug, PartialEq)]
pub struct Categorical(Vec<f64>);

/// Belief over latent states; summarises the action/observation history.
pub type Belief = Categorical;

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("categorical support"));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("entry {p} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
        }
        Ok(Categorical(probs))
    }

    /// Normalises non-negative weights.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("categorical support"));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("weight {w} is not usable")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateUpdate);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Categorical(weights))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform over an empty support");
        Categorical(vec![1.0 / n as f64; n])
    }

    pub fn delta(n: usize, index: usize) -> Self {
        assert!(index < n, "delta index {index} outside support {n}");
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Categorical(probs)
    }

    /// Wraps a vector the caller has already normalised.
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        Categorical(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.0)
    }

    /// `KL(self || other)`, `+inf` when `other` misses support of `self`.
    pub fn kl(&self, other: &Categorical) -> f64 {
        kl_divergence(&self.0, &other.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.0, rng)
    }

    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    }
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln();
        }
    }
    total.max(0.0)
}

/// Inverse-CDF draw from possibly unnormalised non-negative weights.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
    }
    last
}

/// `ln p` floored so that zero-probability entries stay finite.
pub fn safe_ln(p: f64) -> f64 {
    p.max(f64::MIN_POSITIVE).ln()
}
