//! Monte-Carlo uncertainty propagation by simulate-and-refit.
//!
//! Each replica owns a ChaCha8 stream selected by its index, so results do not depend on
//! how replicas are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::alpha::{fit_coherent_alpha, AlphaFitOptions, FixedRabi};
use super::pair::{fit_spectrum_pair, PairFitOptions, SpectrumSide};
use super::thermal::{fit_thermal_sidebands, ThermalFitOptions};
use crate::error::{invalid, Error, Result};
use crate::lineshape::{expected_spectrum, simulate_spectrum, ModeSpec, SpectrumModel, Truncation, VoigtParams};
use crate::phonon::PhononDistribution;
use crate::sideband::{expected_dataset, simulate_dataset_with, Coupling, RabiDataset, RabiModel};
use crate::trap::{Polarizability, TrapParameters};
use crate::units::rad_s_to_mhz;

/// Sampling law of the Lamb–Dicke parameter assumed by each refit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EtaPrior {
    Fixed,
    /// η ~ Normal(η₀, sigma·η₀).
    Relative { sigma: f64 },
    /// Beam angle θ ~ Normal(angle, sigma) and η = η₀ cos θ / cos(angle).
    BeamAngle { angle: f64, sigma: f64 },
}

impl Default for EtaPrior {
    fn default() -> Self {
        EtaPrior::Relative { sigma: 0.1 }
    }
}

impl EtaPrior {
    fn draw<R: Rng>(&self, eta0: f64, rng: &mut R) -> Result<f64> {
        let eta = match *self {
            EtaPrior::Fixed => eta0,
            EtaPrior::Relative { sigma } => normal(eta0, sigma * eta0)?.sample(rng),
            EtaPrior::BeamAngle { angle, sigma } => {
                let theta = normal(angle, sigma)?.sample(rng);
                eta0 * theta.cos() / angle.cos()
            }
        };
        Ok(eta.clamp(1e-4, 0.99))
    }
}

fn normal(mean: f64, sd: f64) -> Result<Normal<f64>> {
    Normal::new(mean, sd.max(0.0)).map_err(|e| Error::InvalidParameter(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub replicas: usize,
    pub seed: u64,
    pub eta_prior: EtaPrior,
    /// Relative 1σ of the |α| assumed when refitting spectra.
    pub alpha_rel_sigma: f64,
    /// Relative 1σ of the thermal n̄ assumed when refitting spectra.
    pub nbar_rel_sigma: f64,
    /// Range of 𝒫 start values, as multiples of the generating value.
    pub pol_start_range: (f64, f64),
    /// No shot noise and no nuisance draws: every replica sees the exact curves.
    pub noiseless: bool,
    /// Start points per refit.
    pub starts: usize,
    pub max_failure_fraction: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            replicas: 1000,
            seed: 0,
            eta_prior: EtaPrior::default(),
            alpha_rel_sigma: 0.077,
            nbar_rel_sigma: 0.2,
            pol_start_range: (0.5, 2.0),
            noiseless: false,
            starts: 2,
            max_failure_fraction: 0.2,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas < 100 {
            return invalid(format!("at least 100 replicas are required, got {}", self.replicas));
        }
        if !(self.alpha_rel_sigma >= 0.0 && self.nbar_rel_sigma >= 0.0) {
            return invalid("prior widths must be non-negative");
        }
        let (lo, hi) = self.pol_start_range;
        if !(lo > 0.0 && lo <= hi) {
            return invalid("polarizability start range must satisfy 0 < lo <= hi");
        }
        if self.starts == 0 {
            return invalid("at least one start per refit is required");
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return invalid("max_failure_fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Generating parameters of a thermal sideband experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiTruth {
    pub omega0: f64,
    pub eta: f64,
    pub gamma_dec: f64,
    pub amplitude: f64,
    pub nbar: f64,
    /// Carrier pulse lengths (s).
    pub carrier_taus: Vec<f64>,
    /// Sideband pulse lengths (s), used for the thermal and the coherent scans.
    pub sideband_taus: Vec<f64>,
    pub shots: u32,
}

impl RabiTruth {
    fn model(&self, order: i32) -> RabiModel {
        RabiModel {
            omega0: self.omega0,
            eta: self.eta,
            gamma_dec: self.gamma_dec,
            amplitude: self.amplitude,
            sideband_order: order,
            coupling: Coupling::Full,
        }
    }

    fn draw<R: Rng>(&self, dist: &PhononDistribution, order: i32, taus: &[f64], noiseless: bool, rng: &mut R) -> Result<RabiDataset> {
        let m = self.model(order);
        if noiseless {
            expected_dataset(&m, dist, taus, self.shots)
        } else {
            simulate_dataset_with(&m, dist, taus, self.shots, rng)
        }
    }

    /// Carrier, red and blue scans of the thermal ion.
    pub fn thermal_scans<R: Rng>(&self, noiseless: bool, rng: &mut R) -> Result<[RabiDataset; 3]> {
        let d = PhononDistribution::thermal(self.nbar)?;
        Ok([
            self.draw(&d, 0, &self.carrier_taus, noiseless, rng)?,
            self.draw(&d, -1, &self.sideband_taus, noiseless, rng)?,
            self.draw(&d, 1, &self.sideband_taus, noiseless, rng)?,
        ])
    }

    /// Red and blue scans after a kick to coherent size `alpha`.
    pub fn coherent_scans<R: Rng>(&self, alpha: f64, noiseless: bool, rng: &mut R) -> Result<[RabiDataset; 2]> {
        let d = PhononDistribution::coherent(alpha)?;
        Ok([
            self.draw(&d, -1, &self.sideband_taus, noiseless, rng)?,
            self.draw(&d, 1, &self.sideband_taus, noiseless, rng)?,
        ])
    }
}

/// Generating parameters of a reference/excited spectrum pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTruth {
    pub trap: TrapParameters,
    pub voigt: VoigtParams,
    /// rad/s
    pub center: f64,
    pub pol: Polarizability,
    pub nbar_x: f64,
    pub nbar_y: f64,
    pub alpha: f64,
    pub amplitude: f64,
    pub baseline: f64,
    /// Detunings (rad/s).
    pub grid: Vec<f64>,
    pub shots: u32,
}

impl PairTruth {
    pub fn reference_dists(&self) -> Result<Vec<PhononDistribution>> {
        Ok(vec![PhononDistribution::thermal(self.nbar_x)?, PhononDistribution::thermal(self.nbar_y)?])
    }

    pub fn excited_dists(&self) -> Result<Vec<PhononDistribution>> {
        self.excited_dists_with(self.nbar_x, self.alpha)
    }

    fn excited_dists_with(&self, nbar_x: f64, alpha: f64) -> Result<Vec<PhononDistribution>> {
        Ok(vec![PhononDistribution::thermal(nbar_x)?, PhononDistribution::coherent(alpha)?])
    }

    pub fn model(&self, dists: &[PhononDistribution]) -> Result<SpectrumModel> {
        let s = self.trap.line_shift_per_phonon(self.pol)?.as_array();
        Ok(SpectrumModel {
            center: self.center,
            modes: dists
                .iter()
                .zip(s)
                .map(|(d, delta_omega)| ModeSpec {
                    delta_omega,
                    dist: d.clone(),
                })
                .collect(),
            voigt: self.voigt,
            amplitude: self.amplitude,
            baseline: self.baseline,
            truncation: Truncation::default(),
        })
    }

    /// Reference and excited spectra at the generating parameters.
    pub fn spectra<R: Rng>(&self, noiseless: bool, rng: &mut R) -> Result<[crate::lineshape::SpectrumDataset; 2]> {
        let r = self.model(&self.reference_dists()?)?;
        let e = self.model(&self.excited_dists()?)?;
        if noiseless {
            Ok([expected_spectrum(&r, &self.grid, self.shots)?, expected_spectrum(&e, &self.grid, self.shots)?])
        } else {
            Ok([
                simulate_spectrum(&r, &self.grid, self.shots, rng)?,
                simulate_spectrum(&e, &self.grid, self.shots, rng)?,
            ])
        }
    }
}

/// Relative centroid shift (excited − reference) and motional width of the excited line,
/// both in rad/s, for given distributions and 𝒫.
pub fn shift_and_width(
    trap: &TrapParameters,
    pol: Polarizability,
    reference: &[PhononDistribution],
    excited: &[PhononDistribution],
) -> Result<(f64, f64)> {
    let s = trap.line_shift_per_phonon(pol)?.as_array();
    let mean = |d: &[PhononDistribution]| d.iter().zip(s).map(|(d, s)| d.mean() * s).sum::<f64>();
    let width = excited
        .iter()
        .zip(s)
        .map(|(d, s)| d.moments().1 * s * s)
        .sum::<f64>()
        .sqrt();
    Ok((mean(excited) - mean(reference), width))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum McProblem {
    /// Thermal sideband fit; reports n̄.
    Thermal(RabiTruth),
    /// Thermal fit followed by the coherent fit; reports |α|.
    Alpha { rabi: RabiTruth, alpha: f64 },
    /// Spectrum-pair fit; reports 𝒫 in 1e-30 C·m²/V.
    Pair(PairTruth),
}

impl McProblem {
    fn label(&self) -> (&'static str, &'static str, &'static str, f64) {
        match self {
            McProblem::Thermal(t) => ("thermal", "nbar", "1", t.nbar),
            McProblem::Alpha { alpha, .. } => ("alpha", "alpha", "1", *alpha),
            McProblem::Pair(p) => ("pair", "polarizability", "1e-30 C m^2/V", p.pol.to_e30()),
        }
    }
}

/// ±1σ acceptance band on relative shift and width, applied to prior draws of (|α|, n̄, 𝒫).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub shift_mhz: f64,
    pub shift_sigma_mhz: f64,
    pub width_mhz: f64,
    pub width_sigma_mhz: f64,
    pub draws: usize,
    pub accepted: usize,
    /// Standard deviation of the accepted 𝒫 (1e-30 C·m²/V).
    pub sigma: f64,
    pub rel_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub problem: String,
    pub parameter: String,
    pub unit: String,
    pub truth: f64,
    pub replicas: usize,
    pub failed: usize,
    pub mean: f64,
    pub std: f64,
    /// `std / |truth|`.
    pub rel_std: f64,
    pub bias: f64,
    pub rel_bias: f64,
    pub values: Vec<f64>,
    /// (replica index, error message)
    pub failures: Vec<(usize, String)>,
    pub band: Option<BandEstimate>,
}

fn replica_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Replica {
    value: f64,
    shift_width: Option<(f64, f64)>,
}

fn thermal_options(cfg: &McConfig, seed: u64) -> ThermalFitOptions {
    ThermalFitOptions {
        starts: cfg.starts,
        seed,
        ..ThermalFitOptions::default()
    }
}

fn run_replica(problem: &McProblem, cfg: &McConfig, index: usize) -> Result<Replica> {
    let mut rng = replica_rng(cfg.seed, index as u64);
    let quiet = cfg.noiseless;
    match problem {
        McProblem::Thermal(t) => {
            let [c, r, b] = t.thermal_scans(quiet, &mut rng)?;
            let eta = if quiet { t.eta } else { cfg.eta_prior.draw(t.eta, &mut rng)? };
            let fit = fit_thermal_sidebands(&c, &r, &b, eta, &thermal_options(cfg, rng.random()))?;
            Ok(Replica {
                value: fit.nbar,
                shift_width: None,
            })
        }
        McProblem::Alpha { rabi, alpha } => {
            let [c, r, b] = rabi.thermal_scans(quiet, &mut rng)?;
            let [cr, cb] = rabi.coherent_scans(*alpha, quiet, &mut rng)?;
            let eta = if quiet { rabi.eta } else { cfg.eta_prior.draw(rabi.eta, &mut rng)? };
            let th = fit_thermal_sidebands(&c, &r, &b, eta, &thermal_options(cfg, rng.random()))?;
            // start for |α|² ~ Normal(|α|², √|α|)
            let a2 = if quiet {
                alpha * alpha
            } else {
                normal(alpha * alpha, alpha.sqrt())?.sample(&mut rng)
            };
            let fixed = FixedRabi {
                omega0: th.omega0,
                eta,
                gamma_dec: th.gamma_dec,
                amplitude: th.amplitude,
                coupling: Coupling::Full,
            };
            let opts = AlphaFitOptions {
                starts: cfg.starts,
                start: Some(a2.max(0.0).sqrt()),
                ..AlphaFitOptions::default()
            };
            let fit = fit_coherent_alpha(&cr, &cb, &fixed, &opts)?;
            Ok(Replica {
                value: fit.alpha,
                shift_width: None,
            })
        }
        McProblem::Pair(p) => {
            let [rd, ed] = p.spectra(quiet, &mut rng)?;
            let (alpha, nx, ny) = if quiet {
                (p.alpha, p.nbar_x, p.nbar_y)
            } else {
                (
                    normal(p.alpha, cfg.alpha_rel_sigma * p.alpha)?.sample(&mut rng).max(0.0),
                    normal(p.nbar_x, cfg.nbar_rel_sigma * p.nbar_x)?.sample(&mut rng).max(0.0),
                    normal(p.nbar_y, cfg.nbar_rel_sigma * p.nbar_y)?.sample(&mut rng).max(0.0),
                )
            };
            let (lo, hi) = cfg.pol_start_range;
            let start = p.pol.to_e30() * (lo + (hi - lo) * rng.random::<f64>());
            let reference = SpectrumSide {
                data: rd,
                dists: vec![PhononDistribution::thermal(nx)?, PhononDistribution::thermal(ny)?],
            };
            let excited = SpectrumSide {
                data: ed,
                dists: p.excited_dists_with(nx, alpha)?,
            };
            let opts = PairFitOptions {
                starts: cfg.starts,
                seed: rng.random(),
                pol_start: Polarizability::from_e30(start),
                ..PairFitOptions::default()
            };
            let fit = fit_spectrum_pair(&reference, &excited, &p.trap, &p.voigt, &opts)?;
            let sw = shift_and_width(&p.trap, fit.polarizability, &reference.dists, &excited.dists)?;
            Ok(Replica {
                value: fit.polarizability.to_e30(),
                shift_width: Some(sw),
            })
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn band_estimate(p: &PairTruth, cfg: &McConfig, observed: &[(f64, f64)]) -> Result<Option<BandEstimate>> {
    if observed.len() < 2 {
        return Ok(None);
    }
    let shifts: Vec<f64> = observed.iter().map(|o| o.0).collect();
    let widths: Vec<f64> = observed.iter().map(|o| o.1).collect();
    let (_, s_sigma) = mean_std(&shifts);
    let (_, w_sigma) = mean_std(&widths);
    let (s_obs, w_obs) = shift_and_width(&p.trap, p.pol, &p.reference_dists()?, &p.excited_dists()?)?;
    let (lo, hi) = cfg.pol_start_range;
    let mut accepted = Vec::new();
    for i in 0..cfg.replicas {
        let mut rng = replica_rng(cfg.seed, (cfg.replicas + i) as u64);
        let alpha = normal(p.alpha, cfg.alpha_rel_sigma * p.alpha)?.sample(&mut rng).max(0.0);
        let nx = normal(p.nbar_x, cfg.nbar_rel_sigma * p.nbar_x)?.sample(&mut rng).max(0.0);
        let ny = normal(p.nbar_y, cfg.nbar_rel_sigma * p.nbar_y)?.sample(&mut rng).max(0.0);
        let pol = p.pol.to_e30() * (lo + (hi - lo) * rng.random::<f64>());
        let reference = [PhononDistribution::thermal(nx)?, PhononDistribution::thermal(ny)?];
        let excited = p.excited_dists_with(nx, alpha)?;
        let Ok((s, w)) = shift_and_width(&p.trap, Polarizability::from_e30(pol), &reference, &excited) else {
            continue;
        };
        if (s - s_obs).abs() <= s_sigma && (w - w_obs).abs() <= w_sigma {
            accepted.push(pol);
        }
    }
    let (_, sigma) = mean_std(&accepted);
    Ok(Some(BandEstimate {
        shift_mhz: rad_s_to_mhz(s_obs),
        shift_sigma_mhz: rad_s_to_mhz(s_sigma),
        width_mhz: rad_s_to_mhz(w_obs),
        width_sigma_mhz: rad_s_to_mhz(w_sigma),
        draws: cfg.replicas,
        accepted: accepted.len(),
        sigma,
        rel_sigma: sigma / p.pol.to_e30().abs(),
    }))
}

/// Simulates `cfg.replicas` datasets from the truth, refits each with nuisance parameters
/// drawn from the priors, and reports spread and bias of the recovered parameter.
pub fn mc_uncertainty(problem: &McProblem, cfg: &McConfig) -> Result<McReport> {
    cfg.validate()?;
    let outcomes: Vec<Result<Replica>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|i| run_replica(problem, cfg, i))
        .collect();
    let mut values = Vec::with_capacity(cfg.replicas);
    let mut observed = Vec::new();
    let mut failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => {
                values.push(r.value);
                if let Some(sw) = r.shift_width {
                    observed.push(sw);
                }
            }
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    if failures.len() as f64 > cfg.max_failure_fraction * cfg.replicas as f64 {
        return Err(Error::McAborted {
            failed: failures.len(),
            replicas: cfg.replicas,
        });
    }
    let (name, parameter, unit, truth) = problem.label();
    let (mean, std) = mean_std(&values);
    let band = match problem {
        McProblem::Pair(p) if !cfg.noiseless => band_estimate(p, cfg, &observed)?,
        _ => None,
    };
    Ok(McReport {
        problem: name.to_string(),
        parameter: parameter.to_string(),
        unit: unit.to_string(),
        truth,
        replicas: cfg.replicas,
        failed: failures.len(),
        mean,
        std,
        rel_std: std / truth.abs(),
        bias: mean - truth,
        rel_bias: (mean - truth) / truth.abs(),
        values,
        failures,
        band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_replica_counts() {
        let cfg = McConfig {
            replicas: 10,
            ..McConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn replica_streams_are_independent_of_order() {
        let mut a = replica_rng(5, 3);
        let _ = replica_rng(5, 2).random::<u64>();
        let mut b = replica_rng(5, 3);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
        assert_ne!(replica_rng(5, 3).random::<u64>(), replica_rng(5, 4).random::<u64>());
    }

    #[test]
    fn beam_angle_prior_width() {
        let prior = EtaPrior::BeamAngle {
            angle: std::f64::consts::FRAC_PI_4,
            sigma: std::f64::consts::PI / 40.0,
        };
        let mut rng = replica_rng(1, 0);
        let draws: Vec<f64> = (0..20_000).map(|_| prior.draw(0.05, &mut rng).unwrap()).collect();
        let (m, s) = mean_std(&draws);
        // tan(π/4)·π/40 ≈ 7.85 % to first order
        assert!((s / m - 0.0785).abs() < 0.004, "{}", s / m);
    }
}
