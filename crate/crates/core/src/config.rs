//! Experiment configuration: JSON in lab units (MHz, kHz, µs, mV), validated on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::mc::{EtaPrior, McConfig};
use crate::kick::{KickModel, DEFAULT_KAPPA};
use crate::lineshape::{linspace, VoigtParams};
use crate::trap::{paper_trap, Polarizability, TrapFile, TrapParameters};
use crate::units::{khz_to_rad_s, mhz_to_rad_s, us_to_s};

/// Evenly spaced points from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.points)
    }

    fn check(&self, what: &str, positive: bool) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite()) || self.points < 2 || self.stop <= self.start {
            return cfg_err(format!("{what}: need start < stop and at least 2 points"));
        }
        if positive && self.start < 0.0 {
            return cfg_err(format!("{what}: values must be non-negative"));
        }
        Ok(())
    }
}

/// Where the trap calibration comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrapSource {
    /// Built-in calibration: 2π × {2.16, 1.8, 1.05} MHz at 2π × 14.11 MHz for 40Ca+.
    Reference(String),
    /// Calibrate from secular frequencies.
    Frequencies {
        secular_mhz: [f64; 3],
        drive_mhz: f64,
        mass_amu: f64,
    },
    Gradients(TrapFile),
}

impl TrapSource {
    pub fn resolve(&self) -> Result<TrapParameters> {
        match self {
            TrapSource::Reference(name) if name == "paper" => Ok(paper_trap()),
            TrapSource::Reference(name) => cfg_err(format!("unknown trap reference '{name}'")),
            TrapSource::Frequencies {
                secular_mhz: [x, y, z],
                drive_mhz,
                mass_amu,
            } => TrapParameters::calibrate(
                mhz_to_rad_s(*x),
                mhz_to_rad_s(*y),
                mhz_to_rad_s(*z),
                mhz_to_rad_s(*drive_mhz),
                crate::units::amu_to_kg(*mass_amu),
            ),
            TrapSource::Gradients(f) => TrapParameters::try_from(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    /// e.g. "57S".
    pub label: String,
    pub principal_n: u32,
    /// Generating 𝒫 (1e-30 C·m²/V).
    pub polarizability_e30: f64,
    /// Start value of the fit; defaults to the generating value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_e30: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KickConfig {
    pub amplitude_mv: f64,
    pub cycles: u32,
    /// Drive minus mode frequency (kHz).
    #[serde(default)]
    pub detuning_khz: f64,
    /// |α| per (V·s).
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

impl KickConfig {
    pub fn model(&self, mode_freq: f64) -> KickModel {
        KickModel {
            kappa: self.kappa,
            amplitude: self.amplitude_mv * 1e-3,
            cycles: self.cycles,
            drive_freq: mode_freq + khz_to_rad_s(self.detuning_khz),
            mode_freq,
        }
    }
}

/// One coherent excitation of the y mode, given directly or through a kick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Excitation {
    Alpha(f64),
    Kick(KickConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    pub nbar_x: f64,
    pub nbar_y: f64,
    pub excitations: Vec<Excitation>,
    /// Relative 1σ drift of the y-mode frequency per kick; 0 disables it.
    #[serde(default)]
    pub kick_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserConfig {
    /// Gaussian standard deviation (MHz).
    pub sigma_mhz: f64,
    /// Lorentzian FWHM (MHz).
    pub lorentz_fwhm_mhz: f64,
}

impl LaserConfig {
    pub fn voigt(&self) -> Result<VoigtParams> {
        VoigtParams::new(mhz_to_rad_s(self.sigma_mhz), mhz_to_rad_s(self.lorentz_fwhm_mhz))
    }
}

/// Quadrupole-transition settings for the sideband scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiConfig {
    /// Ω₀/2π (kHz).
    pub omega0_khz: f64,
    pub eta: f64,
    /// 1/s
    pub gamma_dec: f64,
    pub amplitude: f64,
    pub carrier_us: Sweep,
    pub sideband_us: Sweep,
    pub shots: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Line centre ν₀ relative to the grid origin (MHz).
    pub center_mhz: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub detuning_mhz: Sweep,
    pub shots: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub replicas: usize,
    #[serde(default)]
    pub eta_prior: EtaPrior,
    #[serde(default = "default_alpha_sigma")]
    pub alpha_rel_sigma: f64,
    #[serde(default = "default_nbar_sigma")]
    pub nbar_rel_sigma: f64,
}

fn default_alpha_sigma() -> f64 {
    McConfig::default().alpha_rel_sigma
}

fn default_nbar_sigma() -> f64 {
    McConfig::default().nbar_rel_sigma
}

impl McSettings {
    pub fn mc_config(&self, seed: u64) -> McConfig {
        McConfig {
            replicas: self.replicas,
            seed,
            eta_prior: self.eta_prior,
            alpha_rel_sigma: self.alpha_rel_sigma,
            nbar_rel_sigma: self.nbar_rel_sigma,
            ..McConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub trap: TrapSource,
    pub state: StateConfig,
    pub motion: MotionConfig,
    pub laser: LaserConfig,
    pub rabi: RabiConfig,
    pub spectrum: SpectrumConfig,
    #[serde(default = "default_starts")]
    pub fit_starts: usize,
    /// Monte-Carlo stage; skipped when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSettings>,
}

fn default_starts() -> usize {
    crate::inference::DEFAULT_STARTS
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn in_range(what: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        cfg_err(format!("{what} = {v} outside [{lo}, {hi}]"))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return cfg_err("name must be non-empty and free of path separators");
        }
        let trap = self.trap.resolve().map_err(|e| Error::Config(format!("trap: {e}")))?;
        // the pair fit needs its start strictly inside the confinement limit
        let pol_max = trap.confinement_limit().to_e30() * (1.0 - 1e-9);
        in_range("state.polarizability_e30", self.state.polarizability_e30, -pol_max, pol_max)?;
        if let Some(p) = self.state.prior_e30 {
            in_range("state.prior_e30", p, -pol_max, pol_max)?;
        }
        if self.state.principal_n == 0 {
            return cfg_err("state.principal_n must be positive");
        }
        in_range("motion.nbar_x", self.motion.nbar_x, 0.0, 1e3)?;
        in_range("motion.nbar_y", self.motion.nbar_y, 0.0, 1e3)?;
        in_range("motion.kick_drift", self.motion.kick_drift, 0.0, 0.5)?;
        let mode = trap.secular_frequencies(Polarizability::ZERO)?.omega_y;
        for (i, e) in self.motion.excitations.iter().enumerate() {
            match e {
                Excitation::Alpha(a) => in_range(&format!("motion.excitations[{i}]"), *a, 0.0, 40.0)?,
                Excitation::Kick(k) => k
                    .model(mode)
                    .validate()
                    .map_err(|e| Error::Config(format!("motion.excitations[{i}]: {e}")))?,
            }
        }
        self.laser.voigt().map_err(|e| Error::Config(format!("laser: {e}")))?;
        let r = &self.rabi;
        in_range("rabi.omega0_khz", r.omega0_khz, 1e-6, 1e6)?;
        if !(r.eta > 0.0 && r.eta < 1.0) {
            return cfg_err("rabi.eta must lie in (0, 1)");
        }
        in_range("rabi.gamma_dec", r.gamma_dec, 0.0, 1e9)?;
        if !(r.amplitude > 0.0 && r.amplitude <= 1.0) {
            return cfg_err("rabi.amplitude must lie in (0, 1]");
        }
        r.carrier_us.check("rabi.carrier_us", true)?;
        r.sideband_us.check("rabi.sideband_us", true)?;
        let s = &self.spectrum;
        s.detuning_mhz.check("spectrum.detuning_mhz", false)?;
        if !(s.amplitude > 0.0 && s.amplitude <= 1.0) {
            return cfg_err("spectrum.amplitude must lie in (0, 1]");
        }
        in_range("spectrum.baseline", s.baseline, 0.0, 1.0)?;
        if s.amplitude + s.baseline > 1.0 {
            return cfg_err("spectrum.amplitude + baseline must not exceed 1");
        }
        if !s.center_mhz.is_finite() {
            return cfg_err("spectrum.center_mhz must be finite");
        }
        if r.shots == 0 || s.shots == 0 {
            return cfg_err("shots must be positive");
        }
        if self.fit_starts == 0 {
            return cfg_err("fit_starts must be positive");
        }
        if let Some(mc) = &self.mc {
            mc.mc_config(self.seed).validate().map_err(|e| Error::Config(format!("mc: {e}")))?;
        }
        Ok(())
    }

    pub fn trap(&self) -> Result<TrapParameters> {
        self.trap.resolve()
    }

    pub fn polarizability(&self) -> Polarizability {
        Polarizability::from_e30(self.state.polarizability_e30)
    }

    pub fn carrier_taus(&self) -> Vec<f64> {
        self.rabi.carrier_us.values().into_iter().map(us_to_s).collect()
    }

    pub fn sideband_taus(&self) -> Vec<f64> {
        self.rabi.sideband_us.values().into_iter().map(us_to_s).collect()
    }

    /// Spectrum grid in rad/s.
    pub fn grid(&self) -> Vec<f64> {
        self.spectrum.detuning_mhz.values().into_iter().map(mhz_to_rad_s).collect()
    }

    /// Configuration of one Table-1 state with the shared trap, laser and scan settings.
    pub fn table1(label: &str) -> Result<Self> {
        let (n, pol, seed) = match label {
            "49S" => (49, 1.24, 49),
            "53S" => (53, 2.18, 53),
            "57S" => (57, 3.68, 57),
            _ => return cfg_err(format!("no bundled state '{label}'")),
        };
        let kick = |mv: f64| {
            Excitation::Kick(KickConfig {
                amplitude_mv: mv,
                cycles: 100,
                detuning_khz: 0.0,
                kappa: DEFAULT_KAPPA,
            })
        };
        Ok(ExperimentConfig {
            name: format!("table1-{label}"),
            seed,
            trap: TrapSource::Reference("paper".into()),
            state: StateConfig {
                label: label.into(),
                principal_n: n,
                polarizability_e30: pol,
                prior_e30: None,
            },
            motion: MotionConfig {
                nbar_x: 0.3,
                nbar_y: 0.3,
                excitations: vec![kick(9.0), kick(14.0), kick(22.0), kick(30.0)],
                kick_drift: 0.0,
            },
            laser: LaserConfig {
                sigma_mhz: 0.39,
                lorentz_fwhm_mhz: 2.0,
            },
            rabi: RabiConfig {
                omega0_khz: 50.0,
                eta: 0.051,
                gamma_dec: 500.0,
                amplitude: 0.95,
                carrier_us: Sweep { start: 1.0, stop: 60.0, points: 40 },
                sideband_us: Sweep { start: 2.0, stop: 300.0, points: 60 },
                shots: 100,
            },
            spectrum: SpectrumConfig {
                center_mhz: 0.0,
                amplitude: 0.6,
                baseline: 0.02,
                detuning_mhz: Sweep { start: -16.0, stop: 6.0, points: 89 },
                shots: 100,
            },
            fit_starts: crate::inference::DEFAULT_STARTS,
            mc: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_states_validate_and_round_trip() {
        for label in ["49S", "53S", "57S"] {
            let c = ExperimentConfig::table1(label).unwrap();
            c.validate().unwrap();
            let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn rejects_bad_units_and_unknown_fields() {
        let mut c = ExperimentConfig::table1("57S").unwrap();
        c.rabi.eta = 1.5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::table1("57S").unwrap();
        c.state.polarizability_e30 = 1e3;
        assert!(c.validate().is_err());
        let text = ExperimentConfig::table1("57S").unwrap().to_json().unwrap();
        let text = text.replacen("\"seed\"", "\"sede\"", 1);
        assert!(ExperimentConfig::from_json(&text).is_err());
        assert!(ExperimentConfig::table1("60S").is_err());
    }

    #[test]
    fn unknown_trap_reference() {
        let mut c = ExperimentConfig::table1("49S").unwrap();
        c.trap = TrapSource::Reference("other".into());
        assert!(c.validate().is_err());
    }
}
