//! End-to-end synthetic experiment: generate → thermal fit → |α| fits → spectrum pairs →
//! (ν₀, 𝒫) fits → optional Monte-Carlo → weighted average.
//!
//! Every random draw comes from one ChaCha8 stream seeded by the config, in a fixed order,
//! so a run is a pure function of the config.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Excitation, ExperimentConfig};
use crate::error::{Error, Result};
use crate::figures::{self, AlphaPoint, Table};
use crate::inference::mc::PairTruth;
use crate::inference::{
    fit_coherent_alpha, fit_spectrum_pair, fit_thermal_sidebands, mc_uncertainty, weighted_average, AlphaFit,
    AlphaFitOptions, FixedRabi, LinearPart, McProblem, McReport, PairFit, PairFitOptions, SpectrumSide, ThermalFit,
    ThermalFitOptions,
};
use crate::io::{Manifest, OutputDir};
use crate::kick::kick_to_alpha_drifted;
use crate::lineshape::{simulate_spectrum, ModeSpec, SpectrumDataset, SpectrumModel, Truncation, VoigtParams};
use crate::phonon::PhononDistribution;
use crate::sideband::{simulate_dataset_with, Coupling, RabiDataset, RabiModel};
use crate::trap::{Polarizability, TrapParameters};
use crate::units::{khz_to_rad_s, mhz_to_rad_s, rad_s_to_mhz};

/// Fitted results for one coherent excitation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationResult {
    pub index: usize,
    /// Generating |α|.
    pub alpha_true: f64,
    pub alpha: AlphaFit,
    pub pair: PairFit,
    /// Centroid of the excited line relative to ν₀ (MHz).
    pub excited_shift_mhz: f64,
    /// Excited minus reference centroid (MHz).
    pub relative_shift_mhz: f64,
    /// 1σ of both shifts from σ_𝒫 and σ_|α|.
    pub shift_err_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub state: String,
    pub principal_n: u32,
    pub truth_e30: f64,
    pub trap: TrapParameters,
    pub voigt: VoigtParams,
    pub nbar_x: f64,
    pub thermal: ThermalFit,
    /// Centroid of the reference line relative to ν₀ (MHz), from the first pair fit.
    pub reference_shift_mhz: Option<f64>,
    pub excitations: Vec<ExcitationResult>,
    /// Inverse-variance mean of 𝒫 and its standard error (1e-30 C·m²/V).
    pub weighted_e30: Option<(f64, f64)>,
    pub mc: Vec<McReport>,
}

impl RunSummary {
    pub fn alpha_points(&self, value: impl Fn(&ExcitationResult) -> (f64, f64)) -> Vec<AlphaPoint> {
        self.excitations
            .iter()
            .map(|e| {
                let (v, err) = value(e);
                AlphaPoint {
                    alpha: e.alpha.alpha,
                    alpha_err: e.alpha.result.sigma("alpha").unwrap_or(f64::NAN),
                    value: v,
                    err,
                }
            })
            .collect()
    }

    /// Absolute shifts against |α|, with the thermal reference at |α| = 0.
    pub fn shift_points(&self) -> Vec<AlphaPoint> {
        let mut pts = Vec::new();
        if let (Some(r), Some(first)) = (self.reference_shift_mhz, self.excitations.first()) {
            let p = first.pair.polarizability.to_e30();
            let rel = if p != 0.0 { first.pair.pol_sigma_e30() / p.abs() } else { 0.0 };
            pts.push(AlphaPoint {
                alpha: 0.0,
                alpha_err: 0.0,
                value: r,
                err: (r * rel).abs(),
            });
        }
        pts.extend(self.alpha_points(|e| (e.excited_shift_mhz, e.shift_err_mhz)));
        pts
    }

    pub fn pol_points(&self) -> Vec<AlphaPoint> {
        self.alpha_points(|e| (e.pair.polarizability.to_e30(), e.pair.pol_sigma_e30()))
    }

    pub fn reference_dists(&self) -> Result<Vec<PhononDistribution>> {
        Ok(vec![PhononDistribution::thermal(self.nbar_x)?, PhononDistribution::thermal(self.thermal.nbar)?])
    }

    pub fn excited_dists(&self, e: &ExcitationResult) -> Result<Vec<PhononDistribution>> {
        Ok(vec![PhononDistribution::thermal(self.nbar_x)?, PhononDistribution::coherent(e.alpha.alpha)?])
    }

    /// Fitted spectrum model of one side of a pair.
    pub fn fitted_model(&self, pair: &PairFit, dists: &[PhononDistribution], part: LinearPart) -> Result<SpectrumModel> {
        let s = self.trap.line_shift_per_phonon(pair.polarizability)?.as_array();
        Ok(SpectrumModel {
            center: pair.nu0,
            modes: dists
                .iter()
                .zip(s)
                .map(|(d, delta_omega)| ModeSpec {
                    delta_omega,
                    dist: d.clone(),
                })
                .collect(),
            voigt: self.voigt,
            amplitude: part.amplitude.clamp(1e-12, 1.0),
            baseline: part.baseline.clamp(0.0, 1.0 - part.amplitude.clamp(1e-12, 1.0)),
            truncation: Truncation::default(),
        })
    }
}

/// Datasets generated for one run.
#[derive(Debug, Clone)]
pub struct Generated {
    pub thermal: [RabiDataset; 3],
    pub coherent: Vec<[RabiDataset; 2]>,
    pub alpha_true: Vec<f64>,
}

/// Receives intermediate outputs as stages finish.
trait Sink {
    fn rabi(&mut self, rel: &str, d: &RabiDataset) -> Result<()>;
    fn spectrum(&mut self, rel: &str, d: &SpectrumDataset) -> Result<()>;
    fn json(&mut self, rel: &str, v: &dyn erased::Json) -> Result<()>;
}

mod erased {
    /// Object-safe serialization to a JSON value.
    pub trait Json {
        fn to_value(&self) -> serde_json::Result<serde_json::Value>;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_value(&self) -> serde_json::Result<serde_json::Value> {
            serde_json::to_value(self)
        }
    }
}

struct NoSink;

impl Sink for NoSink {
    fn rabi(&mut self, _: &str, _: &RabiDataset) -> Result<()> {
        Ok(())
    }
    fn spectrum(&mut self, _: &str, _: &SpectrumDataset) -> Result<()> {
        Ok(())
    }
    fn json(&mut self, _: &str, _: &dyn erased::Json) -> Result<()> {
        Ok(())
    }
}

impl Sink for OutputDir {
    fn rabi(&mut self, rel: &str, d: &RabiDataset) -> Result<()> {
        OutputDir::rabi(self, rel, d)
    }
    fn spectrum(&mut self, rel: &str, d: &SpectrumDataset) -> Result<()> {
        OutputDir::spectrum(self, rel, d)
    }
    fn json(&mut self, rel: &str, v: &dyn erased::Json) -> Result<()> {
        OutputDir::json(self, rel, &v.to_value()?)
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage: name.to_string(),
            source: Box::new(other),
        },
    })
}

fn rabi_truth(cfg: &ExperimentConfig, order: i32) -> RabiModel {
    RabiModel {
        omega0: khz_to_rad_s(cfg.rabi.omega0_khz),
        eta: cfg.rabi.eta,
        gamma_dec: cfg.rabi.gamma_dec,
        amplitude: cfg.rabi.amplitude,
        sideband_order: order,
        coupling: Coupling::Full,
    }
}

fn generate(cfg: &ExperimentConfig, trap: &TrapParameters, rng: &mut ChaCha8Rng) -> Result<Generated> {
    let shots = cfg.rabi.shots;
    let (ct, st) = (cfg.carrier_taus(), cfg.sideband_taus());
    let th = PhononDistribution::thermal(cfg.motion.nbar_y)?;
    let thermal = [
        simulate_dataset_with(&rabi_truth(cfg, 0), &th, &ct, shots, rng)?,
        simulate_dataset_with(&rabi_truth(cfg, -1), &th, &st, shots, rng)?,
        simulate_dataset_with(&rabi_truth(cfg, 1), &th, &st, shots, rng)?,
    ];
    let mode = trap.secular_frequencies(Polarizability::ZERO)?.omega_y;
    let mut coherent = Vec::new();
    let mut alpha_true = Vec::new();
    for e in &cfg.motion.excitations {
        let alpha = match e {
            Excitation::Alpha(a) => *a,
            Excitation::Kick(k) => kick_to_alpha_drifted(&k.model(mode), cfg.motion.kick_drift, rng)?,
        };
        let d = PhononDistribution::coherent(alpha)?;
        coherent.push([
            simulate_dataset_with(&rabi_truth(cfg, -1), &d, &st, shots, rng)?,
            simulate_dataset_with(&rabi_truth(cfg, 1), &d, &st, shots, rng)?,
        ]);
        alpha_true.push(alpha);
    }
    Ok(Generated {
        thermal,
        coherent,
        alpha_true,
    })
}

fn truth_model(cfg: &ExperimentConfig, trap: &TrapParameters, dists: Vec<PhononDistribution>) -> Result<SpectrumModel> {
    let s = trap.line_shift_per_phonon(cfg.polarizability())?.as_array();
    Ok(SpectrumModel {
        center: mhz_to_rad_s(cfg.spectrum.center_mhz),
        modes: dists
            .into_iter()
            .zip(s)
            .map(|(dist, delta_omega)| ModeSpec { delta_omega, dist })
            .collect(),
        voigt: cfg.laser.voigt()?,
        amplitude: cfg.spectrum.amplitude,
        baseline: cfg.spectrum.baseline,
        truncation: Truncation::default(),
    })
}

fn execute(cfg: &ExperimentConfig, sink: &mut dyn Sink) -> Result<RunSummary> {
    stage("config", cfg.validate())?;
    let trap = stage("config", cfg.trap())?;
    let voigt = stage("config", cfg.laser.voigt())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sink.json("config.json", cfg)?;

    let gen = stage("generate", generate(cfg, &trap, &mut rng))?;
    for (name, d) in ["carrier", "red", "blue"].iter().zip(&gen.thermal) {
        sink.rabi(&format!("data/thermal_{name}.csv"), d)?;
    }
    for (k, [r, b]) in gen.coherent.iter().enumerate() {
        sink.rabi(&format!("data/coherent_{k}_red.csv"), r)?;
        sink.rabi(&format!("data/coherent_{k}_blue.csv"), b)?;
    }

    let thermal_opts = ThermalFitOptions {
        starts: cfg.fit_starts,
        seed: rng.random(),
        ..ThermalFitOptions::default()
    };
    let [c, r, b] = &gen.thermal;
    let thermal = stage("calibrate", fit_thermal_sidebands(c, r, b, cfg.rabi.eta, &thermal_opts))?;
    sink.json("fits/thermal.json", &thermal)?;

    let fixed = FixedRabi {
        omega0: thermal.omega0,
        eta: cfg.rabi.eta,
        gamma_dec: thermal.gamma_dec,
        amplitude: thermal.amplitude,
        coupling: Coupling::Full,
    };
    let mut alphas = Vec::new();
    for (k, [r, b]) in gen.coherent.iter().enumerate() {
        let opts = AlphaFitOptions {
            starts: cfg.fit_starts,
            ..AlphaFitOptions::default()
        };
        let fit = stage("alpha-fit", fit_coherent_alpha(r, b, &fixed, &opts))?;
        sink.json(&format!("fits/alpha_{k}.json"), &fit)?;
        alphas.push(fit);
    }

    let grid = cfg.grid();
    let nbar_x = cfg.motion.nbar_x;
    let mut spectra = Vec::new();
    for (k, &alpha) in gen.alpha_true.iter().enumerate() {
        let pair = stage("spectrum-simulation", (|| {
            let rm = truth_model(
                cfg,
                &trap,
                vec![PhononDistribution::thermal(nbar_x)?, PhononDistribution::thermal(cfg.motion.nbar_y)?],
            )?;
            let em = truth_model(
                cfg,
                &trap,
                vec![PhononDistribution::thermal(nbar_x)?, PhononDistribution::coherent(alpha)?],
            )?;
            Ok([
                simulate_spectrum(&rm, &grid, cfg.spectrum.shots, &mut rng)?,
                simulate_spectrum(&em, &grid, cfg.spectrum.shots, &mut rng)?,
            ])
        })())?;
        sink.spectrum(&format!("spectra/reference_{k}.csv"), &pair[0])?;
        sink.spectrum(&format!("spectra/excited_{k}.csv"), &pair[1])?;
        spectra.push(pair);
    }

    let pol_start = Polarizability::from_e30(cfg.state.prior_e30.unwrap_or(cfg.state.polarizability_e30));
    let mut summary = RunSummary {
        name: cfg.name.clone(),
        seed: cfg.seed,
        state: cfg.state.label.clone(),
        principal_n: cfg.state.principal_n,
        truth_e30: cfg.state.polarizability_e30,
        trap,
        voigt,
        nbar_x,
        thermal,
        reference_shift_mhz: None,
        excitations: Vec::new(),
        weighted_e30: None,
        mc: Vec::new(),
    };
    let ref_dists = summary.reference_dists()?;
    for (k, ([rd, ed], alpha)) in spectra.into_iter().zip(alphas).enumerate() {
        let reference = SpectrumSide {
            data: rd,
            dists: ref_dists.clone(),
        };
        let excited = SpectrumSide {
            data: ed,
            dists: vec![PhononDistribution::thermal(nbar_x)?, PhononDistribution::coherent(alpha.alpha)?],
        };
        let opts = PairFitOptions {
            starts: cfg.fit_starts,
            seed: rng.random(),
            pol_start,
            ..PairFitOptions::default()
        };
        let pair = stage("pair-fit", fit_spectrum_pair(&reference, &excited, &trap, &voigt, &opts))?;
        sink.json(&format!("fits/pair_{k}.json"), &pair)?;
        let shifts = stage("pair-fit", shift_report(&trap, &pair, &alpha, &reference.dists, &excited.dists))?;
        if summary.reference_shift_mhz.is_none() {
            summary.reference_shift_mhz = Some(shifts.0);
        }
        summary.excitations.push(ExcitationResult {
            index: k,
            alpha_true: gen.alpha_true[k],
            alpha,
            pair,
            excited_shift_mhz: shifts.1,
            relative_shift_mhz: shifts.1 - shifts.0,
            shift_err_mhz: shifts.2,
        });
    }

    if let Some(mc) = &cfg.mc {
        for e in &summary.excitations {
            let truth = PairTruth {
                trap,
                voigt,
                center: e.pair.nu0,
                pol: e.pair.polarizability,
                nbar_x,
                nbar_y: summary.thermal.nbar,
                alpha: e.alpha.alpha,
                amplitude: e.pair.excited.amplitude.clamp(1e-3, 0.98),
                baseline: e.pair.excited.baseline.clamp(0.0, 0.02),
                grid: grid.clone(),
                shots: cfg.spectrum.shots,
            };
            let report = stage("mc", mc_uncertainty(&McProblem::Pair(truth), &mc.mc_config(cfg.seed + e.index as u64)))?;
            sink.json(&format!("mc/pair_{}.json", e.index), &report)?;
            summary.mc.push(report);
        }
    }

    if !summary.excitations.is_empty() {
        let est: Vec<(f64, f64)> = summary
            .excitations
            .iter()
            .map(|e| (e.pair.polarizability.to_e30(), e.pair.pol_sigma_e30()))
            .collect();
        summary.weighted_e30 = Some(stage("average", weighted_average(&est))?);
    }
    sink.json("summary.json", &summary)?;
    Ok(summary)
}

/// (reference shift, excited shift, 1σ of the excited shift), all relative to ν₀ in MHz.
fn shift_report(
    trap: &TrapParameters,
    pair: &PairFit,
    alpha: &AlphaFit,
    reference: &[PhononDistribution],
    excited: &[PhononDistribution],
) -> Result<(f64, f64, f64)> {
    let pol = pair.polarizability;
    let mean = |d: &[PhononDistribution], p: Polarizability| -> Result<f64> {
        let s = trap.line_shift_per_phonon(p)?.as_array();
        Ok(rad_s_to_mhz(d.iter().zip(s).map(|(d, s)| d.mean() * s).sum::<f64>()))
    };
    let r = mean(reference, pol)?;
    let e = mean(excited, pol)?;
    let sp = pair.pol_sigma_e30();
    let d_pol = mean(excited, Polarizability::from_e30(pol.to_e30() + sp))? - e;
    // ∂⟨n⟩/∂|α| = 2|α| for the coherent mode
    let dy = trap.line_shift_per_phonon(pol)?.y;
    let sa = alpha.result.sigma("alpha").unwrap_or(0.0);
    let d_alpha = rad_s_to_mhz(dy) * 2.0 * alpha.alpha * sa;
    Ok((r, e, d_pol.hypot(d_alpha)))
}

/// Runs the pipeline without writing anything.
pub fn simulate_and_fit(cfg: &ExperimentConfig) -> Result<RunSummary> {
    execute(cfg, &mut NoSink)
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub manifest: Manifest,
}

/// `<root>/<name>-<local time>-s<seed>`, suffixed when taken.
pub fn run_directory(root: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let base = format!("{}-{stamp}-s{}", cfg.name, cfg.seed);
    let mut dir = root.join(&base);
    let mut k = 2;
    while dir.exists() {
        dir = root.join(format!("{base}-{k}"));
        k += 1;
    }
    dir
}

/// Runs every stage and writes data, fits, figures and the manifest into `dir`.
///
/// On failure the files written so far stay in place and the manifest records the stage.
pub fn run_pipeline_in(cfg: &ExperimentConfig, dir: &Path) -> Result<PipelineOutput> {
    let mut out = OutputDir::create(dir)?;
    let result = execute(cfg, &mut out).and_then(|summary| {
        stage("figures", write_figures(&mut out, &summary))?;
        Ok(summary)
    });
    match result {
        Ok(summary) => {
            let manifest = out.finish(&cfg.name, cfg.seed, None)?;
            Ok(PipelineOutput {
                dir: dir.to_path_buf(),
                summary,
                manifest,
            })
        }
        Err(e) => {
            let name = match &e {
                Error::Stage { stage, .. } => stage.clone(),
                _ => "write".to_string(),
            };
            out.finish(&cfg.name, cfg.seed, Some(&name))?;
            Err(e)
        }
    }
}

/// [`run_pipeline_in`] a fresh timestamped directory under `root`.
pub fn run_pipeline(cfg: &ExperimentConfig, root: &Path) -> Result<PipelineOutput> {
    run_pipeline_in(cfg, &run_directory(root, cfg))
}

fn put(out: &mut OutputDir, rel: &str, t: Table) -> Result<()> {
    out.table(rel, &t.header, t.rows)
}

/// Thermal sweep used for the shift-vs-n̄ figure.
pub const NBAR_SWEEP: [f64; 6] = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0];

pub fn write_figures(out: &mut OutputDir, s: &RunSummary) -> Result<()> {
    put(out, "figures/shift-vs-alpha.csv", figures::shift_vs_alpha(&s.shift_points()))?;
    put(out, "figures/pol-vs-alpha.csv", figures::pol_vs_alpha(&s.pol_points(), s.weighted_e30))?;
    let (p, pe) = s.weighted_e30.unwrap_or((s.truth_e30, 0.0));
    put(out, "figures/shift-vs-nbar.csv", figures::shift_vs_nbar(&s.trap, p, pe, &NBAR_SWEEP)?)?;
    for e in &s.excitations {
        let (rt, et) = pair_curves(out.root(), s, e)?;
        put(out, &format!("figures/spectrum-pair_{}.csv", e.index), figures::spectrum_pair(&rt.0, &et.0, &rt.1, &et.1)?)?;
    }
    if let Some(e) = s.excitations.last() {
        let m = s.fitted_model(&e.pair, &s.excited_dists(e)?, e.pair.excited)?;
        let grid = crate::lineshape::linspace(-20.0, 8.0, 281).into_iter().map(mhz_to_rad_s).collect::<Vec<_>>();
        put(out, "figures/lineshape-fock-decomposition.csv", figures::lineshape_fock_decomposition(&m, &grid, 6)?)?;
    }
    Ok(())
}

type Curve = (SpectrumDataset, Vec<f64>);

/// Measured spectra of one excitation, read back from a run directory, with fitted curves.
pub fn pair_curves(dir: &Path, s: &RunSummary, e: &ExcitationResult) -> Result<(Curve, Curve)> {
    let rd = crate::io::read_spectrum_csv(dir.join(format!("spectra/reference_{}.csv", e.index)))?;
    let ed = crate::io::read_spectrum_csv(dir.join(format!("spectra/excited_{}.csv", e.index)))?;
    let rm = s.fitted_model(&e.pair, &s.reference_dists()?, e.pair.reference)?.spectrum(&rd.detunings)?;
    let em = s.fitted_model(&e.pair, &s.excited_dists(e)?, e.pair.excited)?.spectrum(&ed.detunings)?;
    Ok(((rd, rm), (ed, em)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::table1("57S").unwrap();
        c.motion.excitations = vec![Excitation::Alpha(6.0)];
        c
    }

    #[test]
    fn stage_errors_are_labelled() {
        let mut c = small();
        c.rabi.eta = 2.0;
        match simulate_and_fit(&c) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "config"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn in_memory_run_recovers_polarizability() {
        let s = simulate_and_fit(&small()).unwrap();
        let (p, e) = s.weighted_e30.unwrap();
        assert!((p - 3.68).abs() < 4.0 * e + 0.05, "{p} ± {e}");
        assert_eq!(s.excitations.len(), 1);
        assert!(s.excitations[0].relative_shift_mhz < 0.0);
    }
}
