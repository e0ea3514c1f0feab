//! Joint fit of carrier, red and blue sideband flopping for a thermal ion.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::lsq::{self, Bounds, LsqOptions};
use super::{sqrt_weights, start_points, FitResult, DEFAULT_STARTS};
use crate::error::{invalid, Result};
use crate::phonon::{PhononDistribution, DEFAULT_TAIL_MASS};
use crate::sideband::{coupling_table, Coupling, RabiDataset, RabiModel};
use crate::units::{s_to_us, us_to_s};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermalFitOptions {
    pub starts: usize,
    pub seed: u64,
    /// Upper bound on n̄ during the fit.
    pub nbar_max: f64,
    pub coupling: Coupling,
    pub lsq: LsqOptions,
}

impl Default for ThermalFitOptions {
    fn default() -> Self {
        ThermalFitOptions {
            starts: DEFAULT_STARTS,
            seed: 0,
            nbar_max: 30.0,
            coupling: Coupling::Full,
            lsq: LsqOptions::default(),
        }
    }
}

/// Result of [`fit_thermal_sidebands`] in SI units, with the full report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalFit {
    pub nbar: f64,
    /// rad/s
    pub omega0: f64,
    /// 1/s
    pub gamma_dec: f64,
    pub amplitude: f64,
    pub eta: f64,
    pub result: FitResult,
}

impl ThermalFit {
    /// Rabi model of the given sideband with the fitted parameters.
    pub fn model(&self, order: i32) -> RabiModel {
        RabiModel {
            omega0: self.omega0,
            eta: self.eta,
            gamma_dec: self.gamma_dec,
            amplitude: self.amplitude,
            sideband_order: order,
            coupling: Coupling::Full,
        }
    }
}

/// One dataset prepared for repeated evaluation: pulse lengths in µs and √weights.
pub(crate) struct Curve<'a> {
    pub taus_us: Vec<f64>,
    pub probs: &'a [f64],
    pub sw: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl<'a> Curve<'a> {
    pub fn new(data: &'a RabiDataset, order: i32, eta: f64, n_cap: usize, coupling: Coupling) -> Result<Self> {
        data.validate()?;
        if data.is_empty() {
            return invalid("empty Rabi dataset");
        }
        Ok(Curve {
            taus_us: data.taus.iter().map(|&t| s_to_us(t)).collect(),
            probs: &data.probs,
            sw: sqrt_weights(&data.probs, &data.shots),
            ratios: coupling_table(n_cap, order, eta, coupling),
        })
    }

    /// Appends √w·(data − model) for populations `pn`, Ω₀/2π = `f0` (MHz), γ in 1/µs.
    pub fn residuals(&self, pn: &[f64], f0: f64, gamma: f64, amp: f64, out: &mut Vec<f64>) {
        let w0 = 2.0 * PI * f0;
        for ((&t, &y), &sw) in self.taus_us.iter().zip(self.probs).zip(&self.sw) {
            let phase = w0 * t;
            let s: f64 = pn
                .iter()
                .zip(&self.ratios)
                .map(|(p, r)| p * (1.0 - (r * phase).cos()))
                .sum();
            let model = 0.5 * amp * s * (-gamma * t).exp();
            out.push(sw * (y - model));
        }
    }
}

/// Fits n̄, Ω₀, γ and A jointly to carrier, first red and first blue sideband flopping.
///
/// The start point comes from a grid over (Ω₀, n̄); further starts perturb it.
pub fn fit_thermal_sidebands(
    carrier: &RabiDataset,
    red: &RabiDataset,
    blue: &RabiDataset,
    eta: f64,
    opts: &ThermalFitOptions,
) -> Result<ThermalFit> {
    if !(eta > 0.0 && eta < 1.0) {
        return invalid("Lamb-Dicke parameter must lie in (0, 1)");
    }
    if !(opts.nbar_max > 0.0) {
        return invalid("nbar_max must be positive");
    }
    let n_cap = PhononDistribution::thermal(opts.nbar_max)?.truncation_bound(DEFAULT_TAIL_MASS)?;
    let curves = [
        Curve::new(carrier, 0, eta, n_cap, opts.coupling)?,
        Curve::new(red, -1, eta, n_cap, opts.coupling)?,
        Curve::new(blue, 1, eta, n_cap, opts.coupling)?,
    ];
    let n_data: usize = curves.iter().map(|c| c.taus_us.len()).sum();
    let pops = |nbar: f64| -> Result<Vec<f64>> {
        Ok(PhononDistribution::thermal(nbar)?.support(DEFAULT_TAIL_MASS)?.probs)
    };
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let pn = pops(x[0])?;
        let mut out = Vec::with_capacity(n_data);
        for c in &curves {
            c.residuals(&pn, x[1], x[2], x[3], &mut out);
        }
        Ok(out)
    };

    let tau_max = curves
        .iter()
        .filter_map(|c| c.taus_us.last().copied())
        .fold(0.0, f64::max);
    if !(tau_max > 0.0) {
        return invalid("pulse durations must include a positive value");
    }
    let amp0 = (2.0 * carrier.probs.iter().sum::<f64>() / carrier.len() as f64).clamp(0.05, 1.0);
    let mut best = (f64::INFINITY, vec![0.1, 1.0 / tau_max, 0.0, amp0]);
    let n_f = 240;
    for i in 0..n_f {
        // 0.1 to 30 carrier cycles over the longest scan
        let cycles = 0.1 * 300f64.powf(i as f64 / (n_f - 1) as f64);
        let f0 = cycles / tau_max;
        for nbar in [0.02, 0.2, 0.6, 1.5, 4.0, 10.0] {
            if nbar > opts.nbar_max {
                continue;
            }
            let x = [nbar, f0, 0.0, amp0];
            let cost: f64 = residuals(&x)?.iter().map(|r| r * r).sum();
            if cost < best.0 {
                best = (cost, x.to_vec());
            }
        }
    }

    let bounds = Bounds::new(
        vec![0.0, 1e-9, 0.0, 1e-3],
        vec![opts.nbar_max, f64::INFINITY, f64::INFINITY, 1.0],
        vec![1.0, best.1[1], 1.0 / tau_max, 1.0],
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let jitter: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let starts = start_points(best.1.clone(), opts.starts, &mut rng, |x, rng| {
        let mut p = vec![
            (x[0] + 0.05) * (0.6 * jitter.sample(rng)).exp(),
            x[1] * (0.03 * jitter.sample(rng)).exp(),
            rng.random::<f64>() * 0.5 / tau_max,
            x[3] * (0.1 * jitter.sample(rng)).exp(),
        ];
        bounds.project(&mut p);
        p
    });
    let (sol, iterations) = lsq::multistart(residuals, &starts, &bounds, &opts.lsq)?;
    let cov = lsq::covariance(&sol.jacobian);
    let result = FitResult::from_covariance(
        &[("nbar", "1"), ("omega0", "MHz"), ("gamma", "1/us"), ("amplitude", "1")],
        &sol.x,
        &cov,
        sol.cost,
        n_data,
        (&sol, iterations, starts.len()),
    );
    Ok(ThermalFit {
        nbar: sol.x[0],
        omega0: 2.0 * PI * sol.x[1] * 1e6,
        gamma_dec: sol.x[2] / us_to_s(1.0),
        amplitude: sol.x[3],
        eta,
        result,
    })
}
