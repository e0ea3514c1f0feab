//! Inverse problems: thermal sideband fits, coherent-state size, and the correlated
//! spectrum-pair fit for (ν₀, 𝒫), plus Monte-Carlo uncertainty propagation.
//!
//! All fits are weighted least squares with binomial standard errors, floored at
//! `1/(2·shots)` so points at p = 0 or 1 keep a finite weight.

pub mod alpha;
pub mod average;
pub mod lsq;
pub mod mc;
pub mod pair;
pub mod thermal;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use alpha::{fit_coherent_alpha, AlphaFit, AlphaFitOptions, FixedRabi};
pub use average::{power_law_fit, weighted_average, PowerLaw};
pub use lsq::LsqOptions;
pub use mc::{mc_uncertainty, EtaPrior, McConfig, McProblem, McReport};
pub use pair::{fit_spectrum_pair, LinearPart, PairFit, PairFitOptions, SpectrumSide};
pub use thermal::{fit_thermal_sidebands, ThermalFit, ThermalFitOptions};

/// Default number of start points per fit.
pub const DEFAULT_STARTS: usize = 8;

/// Binomial standard error of an observed fraction, floored at `1/(2·shots)`.
pub fn binomial_sigma(p: f64, shots: u32) -> f64 {
    let n = shots as f64;
    (p * (1.0 - p) / n).sqrt().max(0.5 / n)
}

/// `1/σ` for every point of a dataset.
pub(crate) fn sqrt_weights(probs: &[f64], shots: &[u32]) -> Vec<f64> {
    probs
        .iter()
        .zip(shots)
        .map(|(&p, &s)| 1.0 / binomial_sigma(p, s))
        .collect()
}

/// One fitted quantity in reporting units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub unit: String,
    pub value: f64,
    /// 1σ from the local quadratic approximation.
    pub sigma: f64,
}

/// Common report of every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<Estimate>,
    /// Covariance in the units of `parameters`, same order.
    pub covariance: Vec<Vec<f64>>,
    /// Weighted sum of squared residuals.
    pub residual_norm: f64,
    /// Data points minus fitted parameters.
    pub dof: usize,
    pub converged: bool,
    /// Iterations summed over all starts.
    pub iterations: usize,
    pub starts: usize,
    /// Largest scaled gradient component at the optimum.
    pub gradient_norm: f64,
}

impl FitResult {
    pub(crate) fn from_covariance(
        names: &[(&str, &str)],
        values: &[f64],
        cov: &DMatrix<f64>,
        residual_norm: f64,
        n_data: usize,
        solution: (&lsq::LsqSolution, usize, usize),
    ) -> Self {
        let (sol, iterations, starts) = solution;
        let parameters = names
            .iter()
            .zip(values)
            .enumerate()
            .map(|(i, (&(name, unit), &value))| Estimate {
                name: name.to_string(),
                unit: unit.to_string(),
                value,
                sigma: cov[(i, i)].max(0.0).sqrt(),
            })
            .collect();
        let covariance = (0..cov.nrows())
            .map(|i| (0..cov.ncols()).map(|j| cov[(i, j)]).collect())
            .collect();
        FitResult {
            parameters,
            covariance,
            residual_norm,
            dof: n_data.saturating_sub(values.len()),
            converged: sol.converged,
            iterations,
            starts,
            gradient_norm: sol.gradient_norm,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Estimate> {
        self.parameters.iter().find(|e| e.name == name)
    }

    pub fn value(&self, name: &str) -> Result<f64> {
        self.get(name)
            .map(|e| e.value)
            .ok_or_else(|| Error::MissingInput(format!("fit parameter {name}")))
    }

    pub fn sigma(&self, name: &str) -> Result<f64> {
        self.get(name)
            .map(|e| e.sigma)
            .ok_or_else(|| Error::MissingInput(format!("fit parameter {name}")))
    }

    /// `χ²/dof`, or NaN without degrees of freedom.
    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.residual_norm / self.dof as f64
        }
    }
}

/// Start points: `first` followed by `count − 1` perturbations drawn by `perturb`.
pub(crate) fn start_points<R: Rng>(
    first: Vec<f64>,
    count: usize,
    rng: &mut R,
    mut perturb: impl FnMut(&[f64], &mut R) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count.max(1));
    for _ in 1..count.max(1) {
        let p = perturb(&first, rng);
        out.push(p);
    }
    out.insert(0, first);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_floor() {
        assert_eq!(binomial_sigma(0.0, 100), 0.005);
        assert_eq!(binomial_sigma(1.0, 100), 0.005);
        assert!((binomial_sigma(0.5, 100) - 0.05).abs() < 1e-15);
    }
}
