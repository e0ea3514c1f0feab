//! Secular frequencies of a single ion in a linear Paul trap and their modification by the
//! static polarizability of the electronic state.
//!
//! With potential gradients γ_RF, γ_DC, drive frequency Ω_RF, radial asymmetry ε and ion
//! mass M, the radial (x takes `1 + ε`, y takes `1 − ε`) and axial secular frequencies are
//!
//! ```text
//! ω'_{x,y}² = 2e²γ_RF²/(M²Ω_RF²) − 2eγ_DC(1 ± ε)/M − 2𝒫(γ_RF² + γ_DC²(1 ± ε)²)/M
//! ω'_z²     = 4eγ_DC/M − 16𝒫γ_DC²/M
//! ```
//!
//! Intrinsic micromotion is neglected. The square roots are evaluated exactly, never
//! linearized in 𝒫.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::units::{self, ELEMENTARY_CHARGE, POLARIZABILITY_UNIT};

/// Static dipole polarizability in C·m²/V. Positive values soften the trap.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polarizability(pub f64);

impl Polarizability {
    pub const ZERO: Polarizability = Polarizability(0.0);

    /// From a value in units of 1e-30 C·m²/V.
    pub fn from_e30(value: f64) -> Self {
        Polarizability(value * POLARIZABILITY_UNIT)
    }

    pub fn to_e30(self) -> f64 {
        self.0 / POLARIZABILITY_UNIT
    }

    pub fn si(self) -> f64 {
        self.0
    }
}

/// Angular secular frequencies (rad/s); always real and positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeFrequencies {
    pub omega_x: f64,
    pub omega_y: f64,
    pub omega_z: f64,
}

impl ModeFrequencies {
    pub fn as_array(&self) -> [f64; 3] {
        [self.omega_x, self.omega_y, self.omega_z]
    }
}

/// Per-phonon line shift Δω_i = ω'_i(𝒫) − ω_i(0) for each mode, in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeShifts {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl ModeShifts {
    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Electrode gradients and drive of a linear Paul trap, in SI units.
///
/// Serialized through [`TrapFile`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrapFile", into = "TrapFile")]
pub struct TrapParameters {
    /// RF potential gradient (V/m²).
    pub gamma_rf: f64,
    /// Static potential gradient (V/m²).
    pub gamma_dc: f64,
    /// RF drive angular frequency (rad/s).
    pub omega_rf: f64,
    /// Radial asymmetry; x takes (1 + ε).
    pub epsilon: f64,
    /// Ion mass (kg).
    pub mass: f64,
    /// Ion charge (C).
    pub charge: f64,
}

/// Radicands of the three secular frequencies, split as `r(𝒫) = base − 𝒫·slope`.
#[derive(Debug, Clone, Copy)]
struct Radicands {
    base: [f64; 3],
    slope: [f64; 3],
}

const AXES: [char; 3] = ['x', 'y', 'z'];

impl TrapParameters {
    /// Validates the field invariants, including confinement at zero polarizability.
    pub fn new(
        gamma_rf: f64,
        gamma_dc: f64,
        omega_rf: f64,
        epsilon: f64,
        mass: f64,
        charge: f64,
    ) -> Result<Self> {
        let trap = TrapParameters {
            gamma_rf,
            gamma_dc,
            omega_rf,
            epsilon,
            mass,
            charge,
        };
        trap.validate()?;
        Ok(trap)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.gamma_rf,
            self.gamma_dc,
            self.omega_rf,
            self.epsilon,
            self.mass,
            self.charge,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return invalid("trap parameters must be finite");
        }
        if self.mass <= 0.0 {
            return invalid("mass must be positive");
        }
        if self.omega_rf <= 0.0 {
            return invalid("RF drive frequency must be positive");
        }
        if self.gamma_rf < 0.0 {
            return invalid("gamma_rf must be non-negative");
        }
        if self.gamma_dc <= 0.0 {
            return invalid("gamma_dc must be positive");
        }
        if self.charge <= 0.0 {
            return invalid("charge must be positive");
        }
        self.secular_frequencies(Polarizability::ZERO).map(|_| ())
    }

    fn radicands(&self) -> Radicands {
        let (e, m) = (self.charge, self.mass);
        let rf = 2.0 * e * e * self.gamma_rf * self.gamma_rf
            / (m * m * self.omega_rf * self.omega_rf);
        let radial = |sign: f64| {
            let f = 1.0 + sign * self.epsilon;
            let base = rf - 2.0 * e * self.gamma_dc * f / m;
            let slope = 2.0 * (self.gamma_rf * self.gamma_rf + self.gamma_dc * self.gamma_dc * f * f) / m;
            (base, slope)
        };
        let (bx, sx) = radial(1.0);
        let (by, sy) = radial(-1.0);
        let bz = 4.0 * e * self.gamma_dc / m;
        let sz = 16.0 * self.gamma_dc * self.gamma_dc / m;
        Radicands {
            base: [bx, by, bz],
            slope: [sx, sy, sz],
        }
    }

    /// Polarizability-modified secular frequencies. At 𝒫 = 0 these are the ground-state
    /// frequencies.
    pub fn secular_frequencies(&self, pol: Polarizability) -> Result<ModeFrequencies> {
        let r = self.radicands();
        let mut out = [0.0; 3];
        for i in 0..3 {
            let radicand = r.base[i] - pol.0 * r.slope[i];
            if !(radicand > 0.0) {
                return Err(Error::UnconfinedTrap {
                    axis: AXES[i],
                    radicand,
                });
            }
            out[i] = radicand.sqrt();
        }
        Ok(ModeFrequencies {
            omega_x: out[0],
            omega_y: out[1],
            omega_z: out[2],
        })
    }

    /// Shift of each secular frequency relative to the ground state, i.e. the line shift
    /// contributed by each phonon in that mode.
    pub fn line_shift_per_phonon(&self, pol: Polarizability) -> Result<ModeShifts> {
        let ground = self.secular_frequencies(Polarizability::ZERO)?;
        let modified = self.secular_frequencies(pol)?;
        Ok(ModeShifts {
            x: modified.omega_x - ground.omega_x,
            y: modified.omega_y - ground.omega_y,
            z: modified.omega_z - ground.omega_z,
        })
    }

    /// Largest polarizability for which all three modes remain confined.
    pub fn confinement_limit(&self) -> Polarizability {
        let r = self.radicands();
        let limit = (0..3)
            .filter(|&i| r.slope[i] > 0.0)
            .map(|i| r.base[i] / r.slope[i])
            .fold(f64::INFINITY, f64::min);
        Polarizability(limit)
    }

    /// Inverts the zero-polarizability secular frequencies for the trap gradients:
    /// γ_DC from ω_z, ε from the radial splitting ω_x² − ω_y² = −ε·ω_z², and γ_RF from the
    /// radial sum.
    pub fn calibrate(
        omega_x: f64,
        omega_y: f64,
        omega_z: f64,
        omega_rf: f64,
        mass: f64,
    ) -> Result<Self> {
        Self::calibrate_with_charge(omega_x, omega_y, omega_z, omega_rf, mass, ELEMENTARY_CHARGE)
    }

    pub fn calibrate_with_charge(
        omega_x: f64,
        omega_y: f64,
        omega_z: f64,
        omega_rf: f64,
        mass: f64,
        charge: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("omega_x", omega_x),
            ("omega_y", omega_y),
            ("omega_z", omega_z),
            ("omega_rf", omega_rf),
            ("mass", mass),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be positive and finite"));
            }
        }
        let (wx2, wy2, wz2) = (omega_x * omega_x, omega_y * omega_y, omega_z * omega_z);
        let gamma_dc = mass * wz2 / (4.0 * charge);
        if !(gamma_dc > 0.0) {
            return Err(Error::InconsistentFrequencies(format!(
                "gamma_dc = {gamma_dc:e} is not positive"
            )));
        }
        let epsilon = -(wx2 - wy2) / wz2;
        // ω_x² + ω_y² = 2·rf − ω_z², with rf = 2e²γ_RF²/(M²Ω²)
        let rf = 0.5 * (wx2 + wy2 + wz2);
        let gamma_rf_sq = rf * mass * mass * omega_rf * omega_rf / (2.0 * charge * charge);
        if !(gamma_rf_sq > 0.0) {
            return Err(Error::InconsistentFrequencies(format!(
                "gamma_rf^2 = {gamma_rf_sq:e} is not positive"
            )));
        }
        TrapParameters::new(gamma_rf_sq.sqrt(), gamma_dc, omega_rf, epsilon, mass, charge)
            .map_err(|e| Error::InconsistentFrequencies(e.to_string()))
    }

    pub fn to_file(&self) -> TrapFile {
        TrapFile {
            gamma_rf_v_per_m2: self.gamma_rf,
            gamma_dc_v_per_m2: self.gamma_dc,
            omega_rf_mhz: units::rad_s_to_mhz(self.omega_rf),
            epsilon: self.epsilon,
            mass_amu: units::kg_to_amu(self.mass),
            charge_e: self.charge / ELEMENTARY_CHARGE,
        }
    }
}

/// On-disk form of a trap calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapFile {
    pub gamma_rf_v_per_m2: f64,
    pub gamma_dc_v_per_m2: f64,
    pub omega_rf_mhz: f64,
    pub epsilon: f64,
    pub mass_amu: f64,
    #[serde(default = "one")]
    pub charge_e: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<&TrapFile> for TrapParameters {
    type Error = Error;

    fn try_from(f: &TrapFile) -> Result<Self> {
        TrapParameters::new(
            f.gamma_rf_v_per_m2,
            f.gamma_dc_v_per_m2,
            units::mhz_to_rad_s(f.omega_rf_mhz),
            f.epsilon,
            units::amu_to_kg(f.mass_amu),
            f.charge_e * ELEMENTARY_CHARGE,
        )
    }
}

impl TryFrom<TrapFile> for TrapParameters {
    type Error = Error;

    fn try_from(f: TrapFile) -> Result<Self> {
        TrapParameters::try_from(&f)
    }
}

impl From<TrapParameters> for TrapFile {
    fn from(t: TrapParameters) -> Self {
        t.to_file()
    }
}

/// The trap used for the 49S/53S/57S measurements: secular frequencies
/// 2π × {2.16, 1.8, 1.05} MHz at a 2π × 14.11 MHz drive, for a 40Ca+ ion.
pub fn paper_trap() -> TrapParameters {
    TrapParameters::calibrate(
        units::mhz_to_rad_s(2.16),
        units::mhz_to_rad_s(1.8),
        units::mhz_to_rad_s(1.05),
        units::mhz_to_rad_s(14.11),
        units::ca40_ion_mass(),
    )
    .expect("reference trap calibrates")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz_to_rad_s;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn zero_polarizability_recovers_calibration_inputs() {
        let trap = paper_trap();
        let f = trap.secular_frequencies(Polarizability::ZERO).unwrap();
        assert!(rel(f.omega_x, mhz_to_rad_s(2.16)) < 1e-12);
        assert!(rel(f.omega_y, mhz_to_rad_s(1.8)) < 1e-12);
        assert!(rel(f.omega_z, mhz_to_rad_s(1.05)) < 1e-12);
    }

    #[test]
    fn asymmetry_is_negative_when_x_is_stiffer() {
        let trap = paper_trap();
        assert!(trap.epsilon < 0.0);
    }

    #[test]
    fn degenerate_radial_modes_have_no_asymmetry() {
        let w = mhz_to_rad_s(1.9);
        let trap = TrapParameters::calibrate(w, w, mhz_to_rad_s(1.0), mhz_to_rad_s(14.0), 1e-25)
            .unwrap();
        assert_eq!(trap.epsilon, 0.0);
    }

    #[test]
    fn positive_polarizability_softens_every_mode() {
        let trap = paper_trap();
        let g = trap.secular_frequencies(Polarizability::ZERO).unwrap();
        let p = trap.secular_frequencies(Polarizability::from_e30(3.68)).unwrap();
        assert!(p.omega_x < g.omega_x);
        assert!(p.omega_y < g.omega_y);
        assert!(p.omega_z < g.omega_z);
        let n = trap.secular_frequencies(Polarizability::from_e30(-3.68)).unwrap();
        assert!(n.omega_x > g.omega_x && n.omega_y > g.omega_y && n.omega_z > g.omega_z);
    }

    #[test]
    fn shift_is_zero_at_zero_polarizability() {
        let s = paper_trap().line_shift_per_phonon(Polarizability::ZERO).unwrap();
        assert_eq!(s.as_array(), [0.0; 3]);
    }

    #[test]
    fn shift_per_phonon_for_57s_is_tens_of_khz() {
        let s = paper_trap()
            .line_shift_per_phonon(Polarizability::from_e30(3.68))
            .unwrap();
        let dy_khz = units::rad_s_to_khz(s.y);
        assert!(dy_khz < -10.0 && dy_khz > -150.0, "Δω_y = {dy_khz} kHz");
        assert!(s.x < 0.0 && s.z < 0.0);
    }

    #[test]
    fn unconfined_past_the_limit() {
        let trap = paper_trap();
        let limit = trap.confinement_limit();
        assert!(trap
            .secular_frequencies(Polarizability(limit.0 * 0.999))
            .is_ok());
        match trap.secular_frequencies(Polarizability(limit.0 * 1.001)) {
            Err(Error::UnconfinedTrap { axis, .. }) => assert_eq!(axis, 'y'),
            other => panic!("expected UnconfinedTrap, got {other:?}"),
        }
    }

    #[test]
    fn invalid_traps_are_rejected() {
        assert!(TrapParameters::new(1e8, 1e6, 1e8, 0.0, -1.0, ELEMENTARY_CHARGE).is_err());
        assert!(TrapParameters::new(1e8, 0.0, 1e8, 0.0, 1e-25, ELEMENTARY_CHARGE).is_err());
        // strong DC with no RF: radial modes anti-confined
        assert!(matches!(
            TrapParameters::new(0.0, 1e6, 1e8, 0.0, 1e-25, ELEMENTARY_CHARGE),
            Err(Error::UnconfinedTrap { .. })
        ));
    }

    #[test]
    fn calibration_rejects_nonpositive_inputs() {
        assert!(TrapParameters::calibrate(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        let w = mhz_to_rad_s(1.0);
        assert!(matches!(
            TrapParameters::calibrate_with_charge(w, w, w, mhz_to_rad_s(14.0), 1e-25, -ELEMENTARY_CHARGE),
            Err(Error::InconsistentFrequencies(_))
        ));
    }

    #[test]
    fn shift_finite_difference_matches_slope() {
        let trap = paper_trap();
        let h = 1e-34;
        let p0 = Polarizability::from_e30(2.0);
        let f = |p: f64| trap.line_shift_per_phonon(Polarizability(p)).unwrap().y;
        let fd = (f(p0.0 + h) - f(p0.0 - h)) / (2.0 * h);
        // analytic derivative of sqrt(base - P slope)
        let r = trap.radicands();
        let analytic = -0.5 * r.slope[1] / (r.base[1] - p0.0 * r.slope[1]).sqrt();
        assert!(rel(fd, analytic) < 1e-5, "{fd} vs {analytic}");
    }

    #[test]
    fn shift_scales_linearly_for_small_polarizability() {
        // Δω ∝ 𝒫 to first order: with 𝒫 ∝ n⁷ the shift grows as n⁷.
        let trap = paper_trap();
        let base = Polarizability::from_e30(1e-4);
        let d1 = trap.line_shift_per_phonon(base).unwrap().y;
        let ratio: f64 = (57.0f64 / 49.0).powi(7);
        let d2 = trap.line_shift_per_phonon(Polarizability(base.0 * ratio)).unwrap().y;
        assert!(rel(d2 / d1, ratio) < 1e-4);
    }

    #[test]
    fn trap_file_round_trip() {
        let trap = paper_trap();
        let file = trap.to_file();
        let text = serde_json::to_string(&file).unwrap();
        let back: TrapFile = serde_json::from_str(&text).unwrap();
        let t2 = TrapParameters::try_from(&back).unwrap();
        assert!(rel(t2.gamma_rf, trap.gamma_rf) < 1e-14);
        assert!(rel(t2.mass, trap.mass) < 1e-14);
    }

    proptest! {
        #[test]
        fn calibration_round_trip(
            fx in 0.5f64..4.0, fy in 0.5f64..4.0, fz in 0.2f64..2.0, frf in 10.0f64..40.0,
        ) {
            let (wx, wy, wz) = (mhz_to_rad_s(fx), mhz_to_rad_s(fy), mhz_to_rad_s(fz));
            if let Ok(trap) = TrapParameters::calibrate(wx, wy, wz, mhz_to_rad_s(frf), units::ca40_ion_mass()) {
                let f = trap.secular_frequencies(Polarizability::ZERO).unwrap();
                prop_assert!(rel(f.omega_x, wx) < 1e-12);
                prop_assert!(rel(f.omega_y, wy) < 1e-12);
                prop_assert!(rel(f.omega_z, wz) < 1e-12);
            }
        }

        #[test]
        fn shift_is_monotone_in_polarizability(p in 0.01f64..10.0) {
            let trap = paper_trap();
            let a = trap.line_shift_per_phonon(Polarizability::from_e30(p)).unwrap();
            let b = trap.line_shift_per_phonon(Polarizability::from_e30(2.0 * p)).unwrap();
            prop_assert!(b.y.abs() > a.y.abs());
            prop_assert!(b.x.abs() > a.x.abs());
        }
    }
}
