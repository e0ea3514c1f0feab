//! Coherent-state size from red and blue sideband flopping after a kick.

use serde::{Deserialize, Serialize};

use super::lsq::{self, Bounds, LsqOptions, LsqSolution};
use super::thermal::Curve;
use super::{FitResult, DEFAULT_STARTS};
use crate::error::{invalid, Error, Result};
use crate::phonon::{PhononDistribution, DEFAULT_TAIL_MASS};
use crate::sideband::{Coupling, RabiDataset};
use crate::units::rad_s_to_mhz;

/// Parameters held fixed from a prior thermal fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedRabi {
    /// rad/s
    pub omega0: f64,
    pub eta: f64,
    /// 1/s
    pub gamma_dec: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub coupling: Coupling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlphaFitOptions {
    /// Number of grid minima refined.
    pub starts: usize,
    pub alpha_max: f64,
    pub grid_step: f64,
    /// Fit γ as well instead of holding it at the thermal value.
    pub free_decoherence: bool,
    /// Extra start value, refined alongside the grid minima.
    pub start: Option<f64>,
    pub lsq: LsqOptions,
}

impl Default for AlphaFitOptions {
    fn default() -> Self {
        AlphaFitOptions {
            starts: DEFAULT_STARTS,
            alpha_max: 15.0,
            grid_step: 0.05,
            free_decoherence: false,
            start: None,
            lsq: LsqOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha: f64,
    /// 1/s; equals the fixed value unless decoherence was free.
    pub gamma_dec: f64,
    pub result: FitResult,
}

/// Fits |α| (and optionally γ) to both sidebands with coherent populations.
///
/// A grid over `[0, alpha_max]` locates every basin; the lowest `starts` minima (plus
/// `opts.start`) are refined. A second basin within Δχ² < 1 of the best, separated by more
/// than 5 % and 0.1 in |α|, is reported as [`Error::AmbiguousFit`].
pub fn fit_coherent_alpha(
    red: &RabiDataset,
    blue: &RabiDataset,
    fixed: &FixedRabi,
    opts: &AlphaFitOptions,
) -> Result<AlphaFit> {
    if !(fixed.omega0 > 0.0) || !(fixed.eta > 0.0 && fixed.eta < 1.0) || !(fixed.gamma_dec >= 0.0) {
        return invalid("fixed Rabi parameters out of range");
    }
    if !(fixed.amplitude > 0.0 && fixed.amplitude <= 1.0) {
        return invalid("fixed amplitude must lie in (0, 1]");
    }
    if !(opts.alpha_max > 0.0 && opts.grid_step > 0.0) {
        return invalid("alpha_max and grid_step must be positive");
    }
    let n_cap = PhononDistribution::coherent(opts.alpha_max)?.truncation_bound(DEFAULT_TAIL_MASS)?;
    let curves = [
        Curve::new(red, -1, fixed.eta, n_cap, fixed.coupling)?,
        Curve::new(blue, 1, fixed.eta, n_cap, fixed.coupling)?,
    ];
    let n_data: usize = curves.iter().map(|c| c.taus_us.len()).sum();
    let f0 = rad_s_to_mhz(fixed.omega0);
    let gamma_fixed = fixed.gamma_dec * 1e-6;
    let free = opts.free_decoherence;
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let pn = PhononDistribution::coherent(x[0].max(0.0))?
            .support(DEFAULT_TAIL_MASS)?
            .probs;
        let gamma = if free { x[1] } else { gamma_fixed };
        let mut out = Vec::with_capacity(n_data);
        for c in &curves {
            c.residuals(&pn, f0, gamma, fixed.amplitude, &mut out);
        }
        Ok(out)
    };
    let cost = |x: &[f64]| -> Result<f64> { Ok(residuals(x)?.iter().map(|r| r * r).sum()) };

    let n_grid = (opts.alpha_max / opts.grid_step).round() as usize + 1;
    let grid: Vec<f64> = (0..n_grid).map(|i| i as f64 * opts.grid_step).collect();
    let chi: Vec<f64> = grid
        .iter()
        .map(|&a| if free { cost(&[a, gamma_fixed]) } else { cost(&[a]) })
        .collect::<Result<_>>()?;
    let mut minima: Vec<usize> = (0..n_grid)
        .filter(|&i| (i == 0 || chi[i] <= chi[i - 1]) && (i + 1 == n_grid || chi[i] <= chi[i + 1]))
        .collect();
    minima.sort_by(|&a, &b| chi[a].total_cmp(&chi[b]));
    minima.truncate(opts.starts.max(1));

    let tau_max = curves
        .iter()
        .filter_map(|c| c.taus_us.last().copied())
        .fold(0.0, f64::max);
    let (bounds, mk) = if free {
        (
            Bounds::new(vec![0.0, 0.0], vec![opts.alpha_max, f64::INFINITY], vec![1.0, 1.0 / tau_max])?,
            Box::new(move |a: f64| vec![a, gamma_fixed]) as Box<dyn Fn(f64) -> Vec<f64>>,
        )
    } else {
        (
            Bounds::new(vec![0.0], vec![opts.alpha_max], vec![1.0])?,
            Box::new(|a: f64| vec![a]) as Box<dyn Fn(f64) -> Vec<f64>>,
        )
    };
    let mut starts: Vec<Vec<f64>> = minima.iter().map(|&i| mk(grid[i])).collect();
    if let Some(a) = opts.start {
        starts.push(mk(a.clamp(0.0, opts.alpha_max)));
    }

    let mut solutions: Vec<LsqSolution> = Vec::new();
    let mut iterations = 0;
    for x0 in &starts {
        let sol = lsq::levenberg_marquardt(residuals, x0, &bounds, &opts.lsq)?;
        iterations += sol.iterations;
        if sol.converged {
            solutions.push(sol);
        }
    }
    if solutions.is_empty() {
        return Err(Error::NonConvergence {
            iterations: opts.lsq.max_iterations,
            starts: starts.len(),
        });
    }
    solutions.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    let best = &solutions[0];
    let a1 = best.x[0];
    if let Some(rival) = solutions.iter().skip(1).find(|s| {
        let sep = (s.x[0] - a1).abs();
        s.cost - best.cost < 1.0 && sep > 0.05 * a1.max(s.x[0]) && sep > 0.1
    }) {
        return Err(Error::AmbiguousFit {
            first: a1,
            first_chi2: best.cost,
            second: rival.x[0],
            second_chi2: rival.cost,
        });
    }

    let cov = lsq::covariance(&best.jacobian);
    let names: &[(&str, &str)] = if free {
        &[("alpha", "1"), ("gamma", "1/us")]
    } else {
        &[("alpha", "1")]
    };
    let result = FitResult::from_covariance(names, &best.x, &cov, best.cost, n_data, (best, iterations, starts.len()));
    Ok(AlphaFit {
        alpha: a1,
        gamma_dec: if free { best.x[1] * 1e6 } else { fixed.gamma_dec },
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::linspace;
    use crate::sideband::{simulate_dataset, RabiModel};
    use crate::units::khz_to_rad_s;

    fn fixed() -> FixedRabi {
        FixedRabi {
            omega0: khz_to_rad_s(60.0),
            eta: 0.051,
            gamma_dec: 800.0,
            amplitude: 0.95,
            coupling: Coupling::Full,
        }
    }

    fn sidebands(alpha: f64, shots: u32, seed: u64) -> (RabiDataset, RabiDataset) {
        let f = fixed();
        let m = RabiModel {
            omega0: f.omega0,
            eta: f.eta,
            gamma_dec: f.gamma_dec,
            amplitude: f.amplitude,
            sideband_order: -1,
            coupling: Coupling::Full,
        };
        let d = PhononDistribution::coherent(alpha).unwrap();
        let taus = linspace(2e-6, 150e-6, 50);
        (
            simulate_dataset(&m, &d, &taus, shots, seed).unwrap(),
            simulate_dataset(&m.with_order(1), &d, &taus, shots, seed + 1).unwrap(),
        )
    }

    #[test]
    fn recovers_alpha_at_high_statistics() {
        let (r, b) = sidebands(6.0, 100_000, 3);
        let fit = fit_coherent_alpha(&r, &b, &fixed(), &AlphaFitOptions::default()).unwrap();
        assert!((fit.alpha / 6.0 - 1.0).abs() < 0.01, "alpha {}", fit.alpha);
        assert!(fit.result.converged && fit.result.sigma("alpha").unwrap() > 0.0);
    }

    #[test]
    fn vacuum_is_compatible_with_zero() {
        let (r, b) = sidebands(0.0, 100, 4);
        let fit = fit_coherent_alpha(&r, &b, &fixed(), &AlphaFitOptions::default()).unwrap();
        assert!(fit.alpha < 0.5, "alpha {}", fit.alpha);
    }

    #[test]
    fn free_decoherence_recovers_gamma() {
        let (r, b) = sidebands(4.0, 100_000, 5);
        let opts = AlphaFitOptions {
            free_decoherence: true,
            ..AlphaFitOptions::default()
        };
        let fit = fit_coherent_alpha(&r, &b, &fixed(), &opts).unwrap();
        assert!((fit.alpha / 4.0 - 1.0).abs() < 0.01);
        assert!((fit.gamma_dec / 800.0 - 1.0).abs() < 0.2, "gamma {}", fit.gamma_dec);
    }
}
