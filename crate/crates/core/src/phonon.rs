//! Phonon-number distributions of a single motional mode.
//!
//! The thermal law is the geometric distribution `n̄ⁿ/(n̄+1)^{n+1}`; the coherent law is
//! Poisson with mean |α|². Only |α| matters anywhere downstream, so the phase of α is not
//! represented.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::ln_factorial;

/// Tail mass used whenever the caller does not choose one.
pub const DEFAULT_TAIL_MASS: f64 = 1e-6;

/// Poisson mass of the coherent state |α⟩ at phonon number `n`, evaluated in log space.
pub fn coherent_pmf(alpha: f64, n: u32) -> f64 {
    let a2 = alpha * alpha;
    if a2 == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    (nf * a2.ln() - ln_factorial(n as u64) - a2).exp()
}

/// Geometric (thermal) mass with mean `nbar` at phonon number `n`.
pub fn thermal_pmf(nbar: f64, n: u32) -> f64 {
    if nbar == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    (nf * (nbar / (nbar + 1.0)).ln() - (nbar + 1.0).ln()).exp()
}

/// Phonon-number distribution of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", try_from = "RawDistribution", into = "RawDistribution")]
pub enum PhononDistribution {
    Thermal { nbar: f64 },
    Coherent { alpha: f64 },
    Fock { n: u32 },
    /// Sorted, de-duplicated `(n, p_n)` pairs.
    Explicit { probs: Vec<(u32, f64)> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawDistribution {
    Thermal(f64),
    Coherent(f64),
    Fock(u32),
    Explicit(Vec<(u32, f64)>),
}

impl TryFrom<RawDistribution> for PhononDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        match raw {
            RawDistribution::Thermal(nbar) => PhononDistribution::thermal(nbar),
            RawDistribution::Coherent(alpha) => PhononDistribution::coherent(alpha),
            RawDistribution::Fock(n) => Ok(PhononDistribution::fock(n)),
            RawDistribution::Explicit(p) => PhononDistribution::explicit(p),
        }
    }
}

impl From<PhononDistribution> for RawDistribution {
    fn from(d: PhononDistribution) -> Self {
        match d {
            PhononDistribution::Thermal { nbar } => RawDistribution::Thermal(nbar),
            PhononDistribution::Coherent { alpha } => RawDistribution::Coherent(alpha),
            PhononDistribution::Fock { n } => RawDistribution::Fock(n),
            PhononDistribution::Explicit { probs } => RawDistribution::Explicit(probs),
        }
    }
}

/// Probabilities `p_0..=p_N` of a distribution truncated at `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    pub probs: Vec<f64>,
}

impl Support {
    pub fn max_n(&self) -> usize {
        self.probs.len().saturating_sub(1)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (usize, f64)> + '_ {
        self.probs.iter().copied().enumerate()
    }
}

impl PhononDistribution {
    pub fn thermal(nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0) || !nbar.is_finite() {
            return invalid(format!("thermal mean phonon number must be >= 0, got {nbar}"));
        }
        Ok(PhononDistribution::Thermal { nbar })
    }

    pub fn coherent(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return invalid(format!("coherent state size must be >= 0, got {alpha}"));
        }
        Ok(PhononDistribution::Coherent { alpha })
    }

    pub fn fock(n: u32) -> Self {
        PhononDistribution::Fock { n }
    }

    /// Explicit distribution. Entries are merged by phonon number and must lie in [0, 1]
    /// with a total of at most one.
    pub fn explicit(mut probs: Vec<(u32, f64)>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("explicit distribution is empty");
        }
        if probs.iter().any(|&(_, p)| !(0.0..=1.0).contains(&p)) {
            return invalid("explicit probabilities must lie in [0, 1]");
        }
        probs.sort_by_key(|&(n, _)| n);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(probs.len());
        for (n, p) in probs {
            match merged.last_mut() {
                Some(last) if last.0 == n => last.1 += p,
                _ => merged.push((n, p)),
            }
        }
        let total: f64 = merged.iter().map(|&(_, p)| p).sum();
        if total > 1.0 + 1e-9 {
            return invalid(format!("explicit probabilities sum to {total} > 1"));
        }
        Ok(PhononDistribution::Explicit { probs: merged })
    }

    pub fn pmf(&self, n: u32) -> f64 {
        match self {
            PhononDistribution::Thermal { nbar } => thermal_pmf(*nbar, n),
            PhononDistribution::Coherent { alpha } => coherent_pmf(*alpha, n),
            PhononDistribution::Fock { n: k } => {
                if n == *k {
                    1.0
                } else {
                    0.0
                }
            }
            PhononDistribution::Explicit { probs } => probs
                .binary_search_by_key(&n, |&(k, _)| k)
                .map(|i| probs[i].1)
                .unwrap_or(0.0),
        }
    }

    /// Smallest `N` such that the mass above `N` is at most `tail_mass`.
    pub fn truncation_bound(&self, tail_mass: f64) -> Result<usize> {
        if !(tail_mass > 0.0 && tail_mass < 1.0) {
            return invalid(format!("tail mass must lie in (0, 1), got {tail_mass}"));
        }
        Ok(match self {
            PhononDistribution::Fock { n } => *n as usize,
            PhononDistribution::Thermal { nbar } => {
                if *nbar == 0.0 {
                    0
                } else {
                    // tail above N is q^(N+1)
                    let q = nbar / (nbar + 1.0);
                    let guess = (tail_mass.ln() / q.ln()).ceil() - 1.0;
                    let mut n = guess.max(0.0) as usize;
                    while n > 0 && q.powi(n as i32) <= tail_mass {
                        n -= 1;
                    }
                    while q.powi(n as i32 + 1) > tail_mass {
                        n += 1;
                    }
                    n
                }
            }
            PhononDistribution::Coherent { alpha } => {
                if *alpha == 0.0 {
                    0
                } else {
                    // Sum from the top down so the tail is accumulated without cancellation.
                    let a2 = alpha * alpha;
                    let hi = (a2 + 12.0 * alpha * (1.0 + 0.1 * (-tail_mass.log10()).max(1.0)) + 40.0)
                        .ceil() as u32;
                    let mut tail = 0.0;
                    let mut n = hi;
                    while n > 0 {
                        let next = tail + coherent_pmf(*alpha, n);
                        if next > tail_mass {
                            break;
                        }
                        tail = next;
                        n -= 1;
                    }
                    n as usize
                }
            }
            PhononDistribution::Explicit { probs } => {
                let mut tail = 0.0;
                let mut bound = probs.last().map(|&(n, _)| n as usize).unwrap_or(0);
                for &(n, p) in probs.iter().rev() {
                    if tail + p > tail_mass {
                        bound = n as usize;
                        break;
                    }
                    tail += p;
                    bound = n.saturating_sub(1) as usize;
                }
                bound
            }
        })
    }

    /// Truncated probability vector `p_0..=p_N` with `N = truncation_bound(tail_mass)`.
    pub fn support(&self, tail_mass: f64) -> Result<Support> {
        let n_max = self.truncation_bound(tail_mass)?;
        let probs = (0..=n_max as u32).map(|n| self.pmf(n)).collect();
        Ok(Support { probs })
    }

    /// Mean and variance of the untruncated law.
    pub fn moments(&self) -> (f64, f64) {
        match self {
            PhononDistribution::Thermal { nbar } => (*nbar, nbar * nbar + nbar),
            PhononDistribution::Coherent { alpha } => {
                let a2 = alpha * alpha;
                (a2, a2)
            }
            PhononDistribution::Fock { n } => (*n as f64, 0.0),
            PhononDistribution::Explicit { probs } => {
                let total: f64 = probs.iter().map(|&(_, p)| p).sum();
                let mean = probs.iter().map(|&(n, p)| n as f64 * p).sum::<f64>() / total;
                let var = probs
                    .iter()
                    .map(|&(n, p)| (n as f64 - mean).powi(2) * p)
                    .sum::<f64>()
                    / total;
                (mean, var)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.moments().0
    }
}
