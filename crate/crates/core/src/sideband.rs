//! Carrier and sideband Rabi oscillations on the quadrupole transition.
//!
//! The coupling between Fock states `n` and `n + s` is the displacement-operator matrix
//! element
//!
//! ```text
//! Ω_{n,n+s} = Ω₀ e^{−η²/2} η^{|s|} √(n_<! / n_>!) L_{n_<}^{|s|}(η²)
//! ```
//!
//! and the upper-state population after a pulse of length τ is
//!
//! ```text
//! P_s(τ) = Σ_n P_n · ½A [1 − cos(Ω_{n,n+s} τ)] e^{−γτ}
//! ```
//!
//! with one decoherence rate γ for all `n`. The full Laguerre form is used throughout; the
//! first-order Lamb–Dicke coupling is available only for comparison.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::phonon::{PhononDistribution, Support, DEFAULT_TAIL_MASS};
use crate::special::laguerre_table;

/// How the n-dependence of the sideband coupling is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// Exact matrix element with generalized Laguerre polynomials.
    #[default]
    Full,
    /// Leading order in η: `Ω₀ η^{|s|} √(n_>!/n_<!) / |s|!`.
    LambDickeFirstOrder,
}

/// Parameters of one Rabi-flopping curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiModel {
    /// Carrier Rabi frequency at n = 0 (rad/s).
    pub omega0: f64,
    /// Lamb–Dicke parameter.
    pub eta: f64,
    /// Decoherence rate (1/s).
    pub gamma_dec: f64,
    /// Contrast A in (0, 1].
    pub amplitude: f64,
    /// Sideband order: −1 red, 0 carrier, +1 blue, …
    pub sideband_order: i32,
    #[serde(default)]
    pub coupling: Coupling,
}

impl RabiModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0) || !self.omega0.is_finite() {
            return invalid("carrier Rabi frequency must be positive");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return invalid(format!("Lamb-Dicke parameter must lie in (0, 1), got {}", self.eta));
        }
        if !(self.gamma_dec >= 0.0) || !self.gamma_dec.is_finite() {
            return invalid("decoherence rate must be non-negative");
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return invalid(format!("amplitude must lie in (0, 1], got {}", self.amplitude));
        }
        Ok(())
    }

    pub fn with_order(mut self, order: i32) -> Self {
        self.sideband_order = order;
        self
    }
}

/// `√(n_<!/n_>!)` as a product, exact for the small orders used here.
fn factorial_ratio_sqrt(lo: usize, hi: usize) -> f64 {
    let prod: f64 = (lo + 1..=hi).map(|k| k as f64).product();
    1.0 / prod.sqrt()
}

/// Ω_{n,n+s}/Ω₀ for n = 0..=n_max. Entries with n + s < 0 are zero (no such transition).
pub fn coupling_table(n_max: usize, order: i32, eta: f64, coupling: Coupling) -> Vec<f64> {
    let k = order.unsigned_abs() as usize;
    let eta_k = eta.powi(k as i32);
    match coupling {
        Coupling::Full => {
            let dw = (-0.5 * eta * eta).exp();
            let lag = laguerre_table(n_max, k as f64, eta * eta);
            (0..=n_max)
                .map(|n| {
                    if order < 0 && n < k {
                        return 0.0;
                    }
                    let lo = if order >= 0 { n } else { n - k };
                    dw * eta_k * factorial_ratio_sqrt(lo, lo + k) * lag[lo]
                })
                .collect()
        }
        Coupling::LambDickeFirstOrder => {
            let kfact: f64 = (1..=k).map(|j| j as f64).product();
            (0..=n_max)
                .map(|n| {
                    if order < 0 && n < k {
                        return 0.0;
                    }
                    let lo = if order >= 0 { n } else { n - k };
                    eta_k / (kfact * factorial_ratio_sqrt(lo, lo + k))
                })
                .collect()
        }
    }
}

/// Rabi frequency of the `order`-th sideband starting from Fock state `n`.
pub fn rabi_frequency(n: u32, order: i32, omega0: f64, eta: f64) -> Result<f64> {
    if (n as i64) + (order as i64) < 0 {
        return Err(Error::InvalidSideband { n, order });
    }
    Ok(coupled_rabi_frequency(n, order, omega0, eta))
}

/// Like [`rabi_frequency`], but returns zero when `n + order < 0` (the level is dark).
pub fn coupled_rabi_frequency(n: u32, order: i32, omega0: f64, eta: f64) -> f64 {
    if (n as i64) + (order as i64) < 0 {
        return 0.0;
    }
    let k = order.unsigned_abs() as usize;
    let lo = if order >= 0 { n as usize } else { n as usize - k };
    let lag = crate::special::laguerre(lo, k as f64, eta * eta);
    omega0 * (-0.5 * eta * eta).exp() * eta.powi(k as i32) * factorial_ratio_sqrt(lo, lo + k) * lag
}

/// Precomputed evaluator of one flopping curve for a fixed distribution, order and η.
///
/// Ω₀, γ and A may change between evaluations without rebuilding the table.
#[derive(Debug, Clone)]
pub struct RabiCurve {
    probs: Vec<f64>,
    ratios: Vec<f64>,
}

impl RabiCurve {
    pub fn new(support: &Support, order: i32, eta: f64, coupling: Coupling) -> Self {
        let ratios = coupling_table(support.max_n(), order, eta, coupling);
        RabiCurve {
            probs: support.probs.clone(),
            ratios,
        }
    }

    pub fn from_model(model: &RabiModel, dist: &PhononDistribution, tail_mass: f64) -> Result<Self> {
        model.validate()?;
        let support = dist.support(tail_mass)?;
        Ok(Self::new(&support, model.sideband_order, model.eta, model.coupling))
    }

    /// Σ P_n ½A[1 − cos(Ω₀ r_n τ)] e^{−γτ}.
    #[inline]
    pub fn eval(&self, tau: f64, omega0: f64, gamma_dec: f64, amplitude: f64) -> f64 {
        let phase = omega0 * tau;
        let s: f64 = self
            .probs
            .iter()
            .zip(&self.ratios)
            .map(|(p, r)| p * (1.0 - (r * phase).cos()))
            .sum();
        0.5 * amplitude * s * (-gamma_dec * tau).exp()
    }
}

/// Upper-state probability after a pulse of length `tau` (s).
pub fn excitation_probability(tau: f64, model: &RabiModel, dist: &PhononDistribution) -> Result<f64> {
    let curve = RabiCurve::from_model(model, dist, DEFAULT_TAIL_MASS)?;
    Ok(curve.eval(tau, model.omega0, model.gamma_dec, model.amplitude))
}

/// Measured (or simulated) flopping curve: pulse lengths, excitation fractions, shots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiDataset {
    /// Pulse durations (s), strictly increasing.
    pub taus: Vec<f64>,
    pub probs: Vec<f64>,
    pub shots: Vec<u32>,
}

impl RabiDataset {
    pub fn new(taus: Vec<f64>, probs: Vec<f64>, shots: Vec<u32>) -> Result<Self> {
        let d = RabiDataset { taus, probs, shots };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.len() != self.probs.len() || self.taus.len() != self.shots.len() {
            return invalid("dataset columns have different lengths");
        }
        if self.taus.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("pulse durations must be strictly increasing");
        }
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return invalid("probabilities must lie in [0, 1]");
        }
        if self.shots.iter().any(|&s| s == 0) {
            return invalid("every point needs at least one shot");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }
}

/// Draws `Binomial(shots, P(τ))/shots` at each pulse length.
pub fn simulate_dataset_with<R: Rng + ?Sized>(
    model: &RabiModel,
    dist: &PhononDistribution,
    taus: &[f64],
    shots: u32,
    rng: &mut R,
) -> Result<RabiDataset> {
    if shots == 0 {
        return invalid("shots must be at least 1");
    }
    let curve = RabiCurve::from_model(model, dist, DEFAULT_TAIL_MASS)?;
    let mut probs = Vec::with_capacity(taus.len());
    for &tau in taus {
        let p = curve
            .eval(tau, model.omega0, model.gamma_dec, model.amplitude)
            .clamp(0.0, 1.0);
        let k = Binomial::new(shots as u64, p)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(rng);
        probs.push(k as f64 / shots as f64);
    }
    RabiDataset::new(taus.to_vec(), probs, vec![shots; taus.len()])
}

/// [`simulate_dataset_with`] on a fresh ChaCha8 stream seeded from `seed`.
pub fn simulate_dataset(
    model: &RabiModel,
    dist: &PhononDistribution,
    taus: &[f64],
    shots: u32,
    seed: u64,
) -> Result<RabiDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_dataset_with(model, dist, taus, shots, &mut rng)
}

/// The noiseless curve on the same grid, as a dataset with `shots` recorded per point.
pub fn expected_dataset(
    model: &RabiModel,
    dist: &PhononDistribution,
    taus: &[f64],
    shots: u32,
) -> Result<RabiDataset> {
    let curve = RabiCurve::from_model(model, dist, DEFAULT_TAIL_MASS)?;
    let probs = taus
        .iter()
        .map(|&t| curve.eval(t, model.omega0, model.gamma_dec, model.amplitude))
        .collect();
    RabiDataset::new(taus.to_vec(), probs, vec![shots.max(1); taus.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::linspace;
    use crate::units::khz_to_rad_s;
    use proptest::prelude::*;

    fn model(order: i32) -> RabiModel {
        RabiModel {
            omega0: khz_to_rad_s(100.0),
            eta: 0.1,
            gamma_dec: 0.0,
            amplitude: 1.0,
            sideband_order: order,
            coupling: Coupling::Full,
        }
    }

    #[test]
    fn red_sideband_from_ground_is_dark() {
        assert!(matches!(rabi_frequency(0, -1, 1.0, 0.1), Err(Error::InvalidSideband { .. })));
        assert_eq!(coupled_rabi_frequency(0, -1, 1.0, 0.1), 0.0);
        assert_eq!(coupling_table(3, -1, 0.1, Coupling::Full)[0], 0.0);
        assert_eq!(coupling_table(3, -2, 0.1, Coupling::Full)[1], 0.0);
    }

    #[test]
    fn blue_sideband_from_ground_closed_form() {
        let eta: f64 = 0.2;
        let w = rabi_frequency(0, 1, 3.0, eta).unwrap();
        assert!((w - 3.0 * eta * (-eta * eta / 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn table_matches_pointwise() {
        for order in -2..=2 {
            let t = coupling_table(60, order, 0.17, Coupling::Full);
            for n in 0..=60u32 {
                let p = coupled_rabi_frequency(n, order, 1.0, 0.17);
                assert!((t[n as usize] - p).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn red_and_blue_share_matrix_elements() {
        // ⟨n+1|D|n⟩ couples the same pair of levels as ⟨n|D|n+1⟩
        for n in 0..100u32 {
            let blue = rabi_frequency(n, 1, 1.0, 0.08).unwrap();
            let red = rabi_frequency(n + 1, -1, 1.0, 0.08).unwrap();
            assert!((blue - red).abs() < 1e-15);
        }
    }

    #[test]
    fn first_order_agrees_for_small_eta() {
        let full = coupling_table(5, 1, 1e-4, Coupling::Full);
        let ld = coupling_table(5, 1, 1e-4, Coupling::LambDickeFirstOrder);
        for (a, b) in full.iter().zip(&ld) {
            assert!(((a - b) / b).abs() < 1e-6);
        }
        assert!((ld[3] - 1e-4 * 2.0).abs() < 1e-18);
    }

    #[test]
    fn zero_pulse_gives_zero() {
        for order in -1..=1 {
            let p = excitation_probability(0.0, &model(order), &PhononDistribution::thermal(3.0).unwrap())
                .unwrap();
            assert_eq!(p, 0.0);
        }
    }

    #[test]
    fn red_sideband_dark_in_ground_state() {
        let m = model(-1);
        for tau in linspace(0.0, 1e-3, 50) {
            assert_eq!(excitation_probability(tau, &m, &PhononDistribution::fock(0)).unwrap(), 0.0);
        }
    }

    #[test]
    fn thermal_carrier_matches_direct_sum() {
        let m = model(0);
        let dist = PhononDistribution::thermal(6.0).unwrap();
        for tau in linspace(0.0, 200e-6, 41) {
            let got = excitation_probability(tau, &m, &dist).unwrap();
            // oracle: 200 terms, pointwise Laguerre, no truncation logic
            let mut expect = 0.0;
            for n in 0..200u32 {
                let om = coupled_rabi_frequency(n, 0, m.omega0, m.eta);
                expect += crate::phonon::thermal_pmf(6.0, n) * 0.5 * (1.0 - (om * tau).cos());
            }
            assert!((got - expect).abs() < 2e-6, "tau {tau}: {got} vs {expect}");
        }
    }

    #[test]
    fn red_below_blue_for_thermal_at_short_times() {
        let dist = PhononDistribution::thermal(0.8).unwrap();
        for tau in linspace(1e-6, 30e-6, 30) {
            let r = excitation_probability(tau, &model(-1), &dist).unwrap();
            let b = excitation_probability(tau, &model(1), &dist).unwrap();
            assert!(r <= b);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let m = model(1);
        let dist = PhononDistribution::thermal(0.5).unwrap();
        let taus = linspace(1e-6, 100e-6, 30);
        let a = simulate_dataset(&m, &dist, &taus, 100, 7).unwrap();
        let b = simulate_dataset(&m, &dist, &taus, 100, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_dataset(&m, &dist, &taus, 100, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn large_shot_limit_converges() {
        let m = model(1);
        let dist = PhononDistribution::coherent(3.0).unwrap();
        let taus = linspace(5e-6, 150e-6, 30);
        let shots = 100_000;
        let data = simulate_dataset(&m, &dist, &taus, shots, 11).unwrap();
        for (tau, p) in taus.iter().zip(&data.probs) {
            let truth = excitation_probability(*tau, &m, &dist).unwrap();
            let sd = (truth * (1.0 - truth) / shots as f64).sqrt().max(1.0 / shots as f64);
            assert!((p - truth).abs() <= 5.0 * sd, "tau {tau}: {p} vs {truth}");
        }
    }

    #[test]
    fn noise_envelope_is_binomial() {
        let m = model(0);
        let dist = PhononDistribution::fock(0);
        let tau = std::f64::consts::FRAC_PI_2 / (m.omega0 * (-0.005f64).exp());
        let p = excitation_probability(tau, &m, &dist).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<f64> = (0..4000)
            .map(|_| simulate_dataset_with(&m, &dist, &[tau], 100, &mut rng).unwrap().probs[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let expect = (p * (1.0 - p) / 100.0).sqrt();
        assert!((var.sqrt() / expect - 1.0).abs() < 0.05);
    }

    #[test]
    fn dataset_validation() {
        assert!(RabiDataset::new(vec![1.0, 1.0], vec![0.1, 0.2], vec![1, 1]).is_err());
        assert!(RabiDataset::new(vec![1.0, 2.0], vec![0.1, 1.2], vec![1, 1]).is_err());
        assert!(RabiDataset::new(vec![1.0], vec![0.1], vec![0]).is_err());
        let m = RabiModel { eta: 1.2, ..model(0) };
        assert!(m.validate().is_err());
    }

    proptest! {
        #[test]
        fn probability_within_envelope(
            tau in 0.0f64..500e-6, alpha in 0.0f64..10.0, order in -2i32..=2,
            gamma in 0.0f64..5e3, amp in 0.05f64..1.0,
        ) {
            let m = RabiModel { gamma_dec: gamma, amplitude: amp, ..model(order) };
            let p = excitation_probability(tau, &m, &PhononDistribution::coherent(alpha).unwrap()).unwrap();
            prop_assert!(p >= 0.0);
            prop_assert!(p <= amp * (-gamma * tau).exp() + 1e-15);
        }
    }
}
