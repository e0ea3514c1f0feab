use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rydion::config::ExperimentConfig;
use rydion::figures::{self, FigureKind, Table};
use rydion::inference::mc::{McProblem, PairTruth, RabiTruth};
use rydion::inference::{
    fit_coherent_alpha, fit_spectrum_pair, mc_uncertainty, AlphaFitOptions, FitResult, FixedRabi, McReport,
    PairFitOptions, SpectrumSide, ThermalFit,
};
use rydion::io;
use rydion::lineshape::{simulate_spectrum, ModeSpec, SpectrumModel, Truncation};
use rydion::phonon::PhononDistribution;
use rydion::pipeline::{self, RunSummary};
use rydion::sideband::{simulate_dataset_with, Coupling, RabiModel};
use rydion::trap::Polarizability;
use rydion::units::{khz_to_rad_s, mhz_to_rad_s};
use rydion::Error;

/// Synthetic Rydberg-ion spectroscopy: simulate scans and spectra, fit n̄, |α| and 𝒫,
/// propagate uncertainties, and emit plot data.
#[derive(Parser)]
#[command(name = "rydion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "bundled")]
    config: Option<PathBuf>,
    /// Bundled config: table1-49S, table1-53S or table1-57S.
    #[arg(long)]
    bundled: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> rydion::Result<ExperimentConfig> {
        match (&self.config, &self.bundled) {
            (Some(p), _) => ExperimentConfig::load(p),
            (None, Some(name)) => {
                let label = name.strip_prefix("table1-").unwrap_or(name);
                ExperimentConfig::table1(label)
            }
            (None, None) => Err(Error::Config("pass --config or --bundled".into())),
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum Sideband {
    Red,
    Carrier,
    Blue,
}

#[derive(Copy, Clone, ValueEnum)]
enum McKind {
    Thermal,
    Alpha,
    Pair,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one Rabi scan (CSV: tau_us,probability,shots).
    SimulateRabi {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "blue")]
        sideband: Sideband,
        /// Coherent |α| of the y mode; thermal at the config n̄_y when absent.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        shots: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one spectrum (CSV: detuning_MHz,probability,shots).
    SimulateSpectrum {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
        /// Coherent |α| of the y mode; thermal reference when absent.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        shots: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit |α| to red and blue sideband scans.
    FitAlpha {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        red: PathBuf,
        #[arg(long)]
        blue: PathBuf,
        /// Thermal fit report (JSON); the config's Rabi settings are used when absent.
        #[arg(long)]
        thermal: Option<PathBuf>,
        #[arg(long)]
        free_decoherence: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit (ν₀, 𝒫) to a reference and an excited spectrum.
    FitPol {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        excited: PathBuf,
        /// |α| of the excited spectrum.
        #[arg(long)]
        alpha: f64,
        /// n̄ of the y mode in both spectra; the config value when absent.
        #[arg(long)]
        nbar_y: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo uncertainty of one of the three fits.
    Mc {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum)]
        problem: McKind,
        /// |α| for the alpha and pair problems.
        #[arg(long, default_value_t = 6.0)]
        alpha: f64,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full synthetic experiment into a timestamped directory under --out.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        shots: Option<u32>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Plot data from a pipeline run directory.
    FigureData {
        #[arg(long)]
        kind: FigureKind,
        #[arg(long)]
        run: PathBuf,
        /// Excitation index for spectrum-pair and lineshape-fock-decomposition.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Comma-separated n̄ values for shift-vs-nbar; empty for none.
        #[arg(long)]
        nbar: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn with_overrides(mut c: ExperimentConfig, seed: Option<u64>, shots: Option<u32>) -> rydion::Result<ExperimentConfig> {
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(n) = shots {
        c.rabi.shots = n;
        c.spectrum.shots = n;
    }
    c.validate()?;
    Ok(c)
}

fn rabi_model(c: &ExperimentConfig, order: i32) -> RabiModel {
    RabiModel {
        omega0: khz_to_rad_s(c.rabi.omega0_khz),
        eta: c.rabi.eta,
        gamma_dec: c.rabi.gamma_dec,
        amplitude: c.rabi.amplitude,
        sideband_order: order,
        coupling: Coupling::Full,
    }
}

fn spectrum_model(c: &ExperimentConfig, alpha: Option<f64>) -> rydion::Result<SpectrumModel> {
    let trap = c.trap()?;
    let s = trap.line_shift_per_phonon(c.polarizability())?;
    let y = match alpha {
        Some(a) => PhononDistribution::coherent(a)?,
        None => PhononDistribution::thermal(c.motion.nbar_y)?,
    };
    Ok(SpectrumModel {
        center: mhz_to_rad_s(c.spectrum.center_mhz),
        modes: vec![
            ModeSpec {
                delta_omega: s.x,
                dist: PhononDistribution::thermal(c.motion.nbar_x)?,
            },
            ModeSpec {
                delta_omega: s.y,
                dist: y,
            },
        ],
        voigt: c.laser.voigt()?,
        amplitude: c.spectrum.amplitude,
        baseline: c.spectrum.baseline,
        truncation: Truncation::default(),
    })
}

fn print_fit(title: &str, r: &FitResult) {
    println!("{title}");
    println!("  {:<22} {:>14} {:>12}  unit", "parameter", "value", "sigma");
    for e in &r.parameters {
        println!("  {:<22} {:>14.6} {:>12.6}  {}", e.name, e.value, e.sigma, e.unit);
    }
    println!(
        "  chi2 {:.3}  dof {}  converged {}  iterations {}",
        r.residual_norm, r.dof, r.converged, r.iterations
    );
}

fn print_mc(r: &McReport) {
    println!("{} Monte-Carlo: {} replicas, {} failed", r.problem, r.replicas, r.failed);
    println!(
        "  {} truth {:.6}  mean {:.6}  std {:.6}  rel_std {:.4}  rel_bias {:.4}  [{}]",
        r.parameter, r.truth, r.mean, r.std, r.rel_std, r.rel_bias, r.unit
    );
    if let Some(b) = &r.band {
        println!("  acceptance band: {} of {} draws, rel_sigma {:.4}", b.accepted, b.draws, b.rel_sigma);
    }
}

fn write_json_opt<T: serde::Serialize>(out: &Option<PathBuf>, v: &T) -> rydion::Result<()> {
    if let Some(p) = out {
        io::write_json(p, v)?;
    }
    Ok(())
}

/// `scan.csv` → `scan.json`, holding the generating model next to the data.
fn sidecar(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn write_table(path: &Path, t: Table) -> rydion::Result<()> {
    io::write_table(path, &t.header, t.rows)
}

fn figure_data(kind: FigureKind, run: &Path, index: usize, nbar: Option<String>, out: &Path) -> anyhow::Result<()> {
    let s: RunSummary = io::read_json(run.join("summary.json"))?;
    let excitation = || {
        s.excitations
            .iter()
            .find(|e| e.index == index)
            .ok_or_else(|| Error::MissingInput(format!("excitation {index} in {}", run.display())))
    };
    let table = match kind {
        FigureKind::ShiftVsAlpha => figures::shift_vs_alpha(&s.shift_points()),
        FigureKind::PolVsAlpha => figures::pol_vs_alpha(&s.pol_points(), s.weighted_e30),
        FigureKind::ShiftVsNbar => {
            let (p, pe) = s
                .weighted_e30
                .ok_or_else(|| Error::MissingInput("weighted polarizability in summary".into()))?;
            let nbars = match nbar {
                None => pipeline::NBAR_SWEEP.to_vec(),
                Some(list) => list
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(|v| v.parse::<f64>().map_err(|e| Error::Config(format!("--nbar '{v}': {e}"))))
                    .collect::<rydion::Result<_>>()?,
            };
            figures::shift_vs_nbar(&s.trap, p, pe, &nbars)?
        }
        FigureKind::SpectrumPair => {
            let e = excitation()?;
            let ((rd, rm), (ed, em)) = pipeline::pair_curves(run, &s, e)?;
            figures::spectrum_pair(&rd, &ed, &rm, &em)?
        }
        FigureKind::LineshapeFockDecomposition => {
            let e = excitation()?;
            let m = s.fitted_model(&e.pair, &s.excited_dists(e)?, e.pair.excited)?;
            let grid: Vec<f64> = rydion::lineshape::linspace(-20.0, 8.0, 281)
                .into_iter()
                .map(mhz_to_rad_s)
                .collect();
            figures::lineshape_fock_decomposition(&m, &grid, 6)?
        }
    };
    let rows = table.rows.len();
    write_table(out, table)?;
    println!("{kind}: {rows} rows -> {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::SimulateRabi {
            cfg,
            seed,
            sideband,
            alpha,
            shots,
            out,
        } => {
            let c = with_overrides(cfg.load()?, Some(seed), shots)?;
            let (order, taus) = match sideband {
                Sideband::Red => (-1, c.sideband_taus()),
                Sideband::Carrier => (0, c.carrier_taus()),
                Sideband::Blue => (1, c.sideband_taus()),
            };
            let dist = match alpha {
                Some(a) => PhononDistribution::coherent(a)?,
                None => PhononDistribution::thermal(c.motion.nbar_y)?,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            let model = rabi_model(&c, order);
            let d = simulate_dataset_with(&model, &dist, &taus, c.rabi.shots, &mut rng)?;
            io::write_rabi_csv(&out, &d)?;
            let side = serde_json::json!({ "seed": c.seed, "shots": c.rabi.shots, "model": model, "distribution": dist });
            io::write_json(sidecar(&out), &side)?;
            println!("{} points -> {}", d.len(), out.display());
        }
        Command::SimulateSpectrum {
            cfg,
            seed,
            alpha,
            shots,
            out,
        } => {
            let c = with_overrides(cfg.load()?, Some(seed), shots)?;
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            let model = spectrum_model(&c, alpha)?;
            let d = simulate_spectrum(&model, &c.grid(), c.spectrum.shots, &mut rng)?;
            io::write_spectrum_csv(&out, &d)?;
            let side = serde_json::json!({ "seed": c.seed, "shots": c.spectrum.shots, "model": model });
            io::write_json(sidecar(&out), &side)?;
            println!("{} points -> {}", d.len(), out.display());
        }
        Command::FitAlpha {
            cfg,
            red,
            blue,
            thermal,
            free_decoherence,
            out,
        } => {
            let c = cfg.load()?;
            let fixed = match thermal {
                Some(p) => {
                    let t: ThermalFit = io::read_json(&p)?;
                    FixedRabi {
                        omega0: t.omega0,
                        eta: t.eta,
                        gamma_dec: t.gamma_dec,
                        amplitude: t.amplitude,
                        coupling: Coupling::Full,
                    }
                }
                None => FixedRabi {
                    omega0: khz_to_rad_s(c.rabi.omega0_khz),
                    eta: c.rabi.eta,
                    gamma_dec: c.rabi.gamma_dec,
                    amplitude: c.rabi.amplitude,
                    coupling: Coupling::Full,
                },
            };
            let opts = AlphaFitOptions {
                starts: c.fit_starts,
                free_decoherence,
                ..AlphaFitOptions::default()
            };
            let fit = fit_coherent_alpha(&io::read_rabi_csv(&red)?, &io::read_rabi_csv(&blue)?, &fixed, &opts)?;
            print_fit("coherent-state fit", &fit.result);
            write_json_opt(&out, &fit)?;
        }
        Command::FitPol {
            cfg,
            reference,
            excited,
            alpha,
            nbar_y,
            out,
        } => {
            let c = cfg.load()?;
            let ny = nbar_y.unwrap_or(c.motion.nbar_y);
            let nx = PhononDistribution::thermal(c.motion.nbar_x)?;
            let r = SpectrumSide {
                data: io::read_spectrum_csv(&reference)?,
                dists: vec![nx.clone(), PhononDistribution::thermal(ny)?],
            };
            let e = SpectrumSide {
                data: io::read_spectrum_csv(&excited)?,
                dists: vec![nx, PhononDistribution::coherent(alpha)?],
            };
            let opts = PairFitOptions {
                starts: c.fit_starts,
                pol_start: Polarizability::from_e30(c.state.prior_e30.unwrap_or(c.state.polarizability_e30)),
                ..PairFitOptions::default()
            };
            let fit = fit_spectrum_pair(&r, &e, &c.trap()?, &c.laser.voigt()?, &opts)?;
            print_fit("spectrum-pair fit", &fit.result);
            write_json_opt(&out, &fit)?;
        }
        Command::Mc {
            cfg,
            seed,
            problem,
            alpha,
            replicas,
            out,
        } => {
            let c = with_overrides(cfg.load()?, Some(seed), None)?;
            let rabi = RabiTruth {
                omega0: khz_to_rad_s(c.rabi.omega0_khz),
                eta: c.rabi.eta,
                gamma_dec: c.rabi.gamma_dec,
                amplitude: c.rabi.amplitude,
                nbar: c.motion.nbar_y,
                carrier_taus: c.carrier_taus(),
                sideband_taus: c.sideband_taus(),
                shots: c.rabi.shots,
            };
            let p = match problem {
                McKind::Thermal => McProblem::Thermal(rabi),
                McKind::Alpha => McProblem::Alpha { rabi, alpha },
                McKind::Pair => McProblem::Pair(PairTruth {
                    trap: c.trap()?,
                    voigt: c.laser.voigt()?,
                    center: mhz_to_rad_s(c.spectrum.center_mhz),
                    pol: c.polarizability(),
                    nbar_x: c.motion.nbar_x,
                    nbar_y: c.motion.nbar_y,
                    alpha,
                    amplitude: c.spectrum.amplitude,
                    baseline: c.spectrum.baseline,
                    grid: c.grid(),
                    shots: c.spectrum.shots,
                }),
            };
            let mut mc = c.mc.map(|m| m.mc_config(c.seed)).unwrap_or_default();
            mc.seed = c.seed;
            if let Some(n) = replicas {
                mc.replicas = n;
            }
            let report = mc_uncertainty(&p, &mc)?;
            print_mc(&report);
            write_json_opt(&out, &report)?;
        }
        Command::Pipeline { cfg, seed, shots, out } => {
            let c = with_overrides(cfg.load()?, Some(seed), shots)?;
            let res = pipeline::run_pipeline(&c, &out).with_context(|| format!("pipeline '{}'", c.name))?;
            let s = &res.summary;
            println!("{} ({}), seed {}", s.name, s.state, s.seed);
            println!("  thermal n̄ = {:.4}", s.thermal.nbar);
            println!("  {:>8} {:>8} {:>12} {:>10} {:>14}", "alpha", "sigma", "pol_e30", "sigma", "rel_shift_MHz");
            for e in &s.excitations {
                println!(
                    "  {:>8.3} {:>8.3} {:>12.4} {:>10.4} {:>14.4}",
                    e.alpha.alpha,
                    e.alpha.result.sigma("alpha").unwrap_or(f64::NAN),
                    e.pair.polarizability.to_e30(),
                    e.pair.pol_sigma_e30(),
                    e.relative_shift_mhz
                );
            }
            if let Some((m, se)) = s.weighted_e30 {
                println!("  weighted 𝒫 = {m:.4} ± {se:.4} × 1e-30 C m^2/V (truth {})", s.truth_e30);
            }
            println!("  {} files -> {}", res.manifest.files.len(), res.dir.display());
        }
        Command::FigureData {
            kind,
            run,
            index,
            nbar,
            out,
        } => {
            if !run.is_dir() {
                bail!(Error::MissingInput(format!("run directory {}", run.display())));
            }
            figure_data(kind, &run, index, nbar, &out)?;
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if err.is_numerical() => 3,
        Some(err) if err.is_config() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
