//! Physical constants (CODATA 2018, SI) and unit conversions used at I/O boundaries.
//!
//! Everything inside the crate works in SI: angular frequencies in rad/s, masses in kg,
//! polarizabilities in C·m²/V. Files and configs use MHz, µs, atomic mass units, and
//! polarizabilities in units of 1e-30 C·m²/V.

use std::f64::consts::TAU;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Scale of the polarizability unit used in files and inside the optimizers.
pub const POLARIZABILITY_UNIT: f64 = 1e-30;

/// Atomic mass of neutral 40Ca in u.
pub const CA40_ATOMIC_MASS_AMU: f64 = 39.962_590_863;

/// Mass of a singly charged 40Ca ion in kg.
pub fn ca40_ion_mass() -> f64 {
    CA40_ATOMIC_MASS_AMU * ATOMIC_MASS_UNIT - ELECTRON_MASS
}

#[inline]
pub fn mhz_to_rad_s(f_mhz: f64) -> f64 {
    TAU * f_mhz * 1e6
}

#[inline]
pub fn rad_s_to_mhz(omega: f64) -> f64 {
    omega / (TAU * 1e6)
}

#[inline]
pub fn khz_to_rad_s(f_khz: f64) -> f64 {
    TAU * f_khz * 1e3
}

#[inline]
pub fn rad_s_to_khz(omega: f64) -> f64 {
    omega / (TAU * 1e3)
}

#[inline]
pub fn us_to_s(t_us: f64) -> f64 {
    t_us * 1e-6
}

#[inline]
pub fn s_to_us(t_s: f64) -> f64 {
    t_s * 1e6
}

#[inline]
pub fn amu_to_kg(m_amu: f64) -> f64 {
    m_amu * ATOMIC_MASS_UNIT
}

#[inline]
pub fn kg_to_amu(m_kg: f64) -> f64 {
    m_kg / ATOMIC_MASS_UNIT
}

/// Gaussian (Doppler) standard deviation in rad/s of a transition probed with effective
/// wavevector `k_eff` (1/m) for a motional temperature `temperature` (K).
pub fn doppler_sigma(k_eff: f64, temperature: f64, mass: f64) -> f64 {
    k_eff * (BOLTZMANN * temperature / mass).sqrt()
}

/// Lamb–Dicke parameter for a beam of wavelength `wavelength` (m) at `angle` (rad) to a
/// mode of angular frequency `omega` (rad/s).
pub fn lamb_dicke(wavelength: f64, angle: f64, mass: f64, omega: f64) -> f64 {
    let k = TAU / wavelength;
    k * angle.cos() * (HBAR / (2.0 * mass * omega)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_round_trip() {
        let f = 1.8;
        assert!((rad_s_to_mhz(mhz_to_rad_s(f)) - f).abs() < 1e-15);
        assert!((rad_s_to_khz(khz_to_rad_s(f)) - f).abs() < 1e-15);
    }

    #[test]
    fn ca_lamb_dicke_is_small() {
        let eta = lamb_dicke(729e-9, std::f64::consts::FRAC_PI_4, ca40_ion_mass(), mhz_to_rad_s(1.8));
        assert!(eta > 0.04 && eta < 0.06, "eta = {eta}");
    }
}
