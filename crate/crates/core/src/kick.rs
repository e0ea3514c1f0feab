//! Phenomenological response of a radial mode to a sinusoidal electric kick.
//!
//! A drive of `cycles` periods at `drive_freq` lasts `T = cycles·2π/drive_freq` and leaves
//! the mode in a coherent state of size
//!
//! ```text
//! |α| = κ · V_k · T · |sinc(δT/2)|,   δ = drive_freq − mode_freq
//! ```
//!
//! which is linear in V_k on resonance and vanishes whenever δT is a non-zero multiple of 2π.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::units::mhz_to_rad_s;

/// κ in |α| per (V·s), from a least-squares line through the origin on the calibrated range
/// (10 mV → |α| ≈ 2, 40 mV → |α| ≈ 11) at 100 cycles of a 2π × 1.8 MHz drive.
pub const DEFAULT_KAPPA: f64 = 4.8706e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KickModel {
    /// |α| per (V·s).
    pub kappa: f64,
    /// Kick amplitude V_k (V).
    pub amplitude: f64,
    pub cycles: u32,
    /// rad/s
    pub drive_freq: f64,
    /// Secular frequency of the kicked mode (rad/s).
    pub mode_freq: f64,
}

impl KickModel {
    /// Resonant kick of the 1.8 MHz mode with the default κ.
    pub fn resonant(amplitude: f64, cycles: u32) -> Self {
        let w = mhz_to_rad_s(1.8);
        KickModel {
            kappa: DEFAULT_KAPPA,
            amplitude,
            cycles,
            drive_freq: w,
            mode_freq: w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return invalid("kick calibration kappa must be positive");
        }
        if self.cycles < 1 {
            return invalid("a kick needs at least one cycle");
        }
        if !(self.drive_freq > 0.0 && self.mode_freq > 0.0) {
            return invalid("kick and mode frequencies must be positive");
        }
        if !self.amplitude.is_finite() {
            return invalid("kick amplitude must be finite");
        }
        Ok(())
    }

    /// Pulse duration T (s).
    pub fn duration(&self) -> f64 {
        self.cycles as f64 * 2.0 * PI / self.drive_freq
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Coherent-state size left by the kick.
pub fn kick_to_alpha(kick: &KickModel) -> Result<f64> {
    kick.validate()?;
    let t = kick.duration();
    let delta = kick.drive_freq - kick.mode_freq;
    Ok(kick.kappa * kick.amplitude.abs() * t * sinc(0.5 * delta * t).abs())
}

/// [`kick_to_alpha`] with the mode frequency drifted by a relative Normal(0, `rel_sigma`).
pub fn kick_to_alpha_drifted<R: Rng + ?Sized>(kick: &KickModel, rel_sigma: f64, rng: &mut R) -> Result<f64> {
    if rel_sigma == 0.0 {
        return kick_to_alpha(kick);
    }
    let d = Normal::new(0.0, rel_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let drifted = KickModel {
        mode_freq: kick.mode_freq * (1.0 + d.sample(rng)),
        ..*kick
    };
    kick_to_alpha(&drifted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_on_resonance() {
        let a1 = kick_to_alpha(&KickModel::resonant(0.01, 100)).unwrap();
        for k in 2..=8 {
            let ak = kick_to_alpha(&KickModel::resonant(0.01 * k as f64, 100)).unwrap();
            assert!((ak / a1 - k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn calibrated_range() {
        let lo = kick_to_alpha(&KickModel::resonant(0.010, 100)).unwrap();
        let hi = kick_to_alpha(&KickModel::resonant(0.040, 100)).unwrap();
        assert!((lo - 2.0).abs() < 0.8 && (hi - 11.0).abs() < 0.5, "{lo} {hi}");
    }

    #[test]
    fn zero_at_full_detuning_period() {
        let mut k = KickModel::resonant(0.03, 100);
        // δT = 2π with T fixed by the drive: δ = drive/cycles
        k.mode_freq = k.drive_freq - k.drive_freq / k.cycles as f64;
        assert!(kick_to_alpha(&k).unwrap() < 1e-9);
        k.mode_freq = k.drive_freq - 2.0 * k.drive_freq / k.cycles as f64;
        assert!(kick_to_alpha(&k).unwrap() < 1e-9);
    }

    #[test]
    fn rejects_invalid() {
        let mut k = KickModel::resonant(0.01, 100);
        k.cycles = 0;
        assert!(kick_to_alpha(&k).is_err());
        let mut k = KickModel::resonant(0.01, 100);
        k.kappa = 0.0;
        assert!(kick_to_alpha(&k).is_err());
    }
}
