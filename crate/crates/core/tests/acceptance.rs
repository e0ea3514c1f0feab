//! Acceptance suite. Every test prints one `PASS`/`FAIL` line and then asserts it.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use rydion::config::{Excitation, ExperimentConfig};
use rydion::inference::mc::{mc_uncertainty, EtaPrior, McConfig, McProblem, PairTruth, RabiTruth};
use rydion::inference::power_law_fit;
use rydion::lineshape::{linspace, ModeSpec, SpectrumModel, Truncation, VoigtParams};
use rydion::phonon::PhononDistribution;
use rydion::pipeline::{run_pipeline_in, simulate_and_fit};
use rydion::sideband::rabi_frequency;
use rydion::trap::{paper_trap, Polarizability, TrapParameters};
use rydion::units::{ca40_ion_mass, khz_to_rad_s, mhz_to_rad_s};

fn verdict(id: u32, what: &str, pass: bool, detail: String) {
    println!("criterion {id} [{what}]: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} [{what}] failed: {detail}");
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed < Duration::from_secs(secs)
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}

#[test]
fn c1_secular_frequency_oracle() {
    let t = Instant::now();
    let m = ca40_ion_mass();
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for (i, radial) in linspace(1.4, 3.2, 5).into_iter().enumerate() {
        for (j, drive) in [11.0, 14.11].into_iter().enumerate() {
            let split = 0.1 + 0.25 * (i + j) as f64;
            let axial = 0.7 + 0.1 * i as f64;
            let trap = TrapParameters::calibrate(
                mhz_to_rad_s(radial + split),
                mhz_to_rad_s(radial),
                mhz_to_rad_s(axial),
                mhz_to_rad_s(drive),
                m,
            )
            .unwrap();
            let limit = trap.confinement_limit().to_e30();
            for pol in linspace(-0.5 * limit, 0.9 * limit, 10) {
                let got = trap.secular_frequencies(Polarizability::from_e30(pol)).unwrap().as_array();
                let want = common::secular_oracle(
                    trap.gamma_rf,
                    trap.gamma_dc,
                    trap.omega_rf,
                    trap.epsilon,
                    trap.mass,
                    trap.charge,
                    Polarizability::from_e30(pol).si(),
                );
                for k in 0..3 {
                    worst = worst.max(rel(got[k], want[k]));
                }
                points += 1;
            }
        }
    }
    let el = t.elapsed();
    verdict(
        1,
        "secular frequencies vs scalar oracle",
        points == 100 && worst <= 1e-12 && within(el, 1),
        format!("{points} points, worst rel err {worst:.2e} (tol 1e-12), {el:.2?}"),
    );
}

#[test]
fn c2_calibration_round_trip() {
    let t = Instant::now();
    let input = [2.16, 1.8, 1.05].map(mhz_to_rad_s);
    let trap = TrapParameters::calibrate(input[0], input[1], input[2], mhz_to_rad_s(14.11), ca40_ion_mass()).unwrap();
    let back = trap.secular_frequencies(Polarizability::ZERO).unwrap().as_array();
    let worst = (0..3).map(|k| rel(back[k], input[k])).fold(0.0, f64::max);
    let el = t.elapsed();
    verdict(
        2,
        "calibration round trip",
        worst <= 1e-12 && within(el, 1),
        format!("worst rel err {worst:.2e} (tol 1e-12), {el:.2?}"),
    );
}

fn spectrum_model(modes: Vec<(f64, PhononDistribution)>) -> SpectrumModel {
    SpectrumModel {
        center: 0.0,
        modes: modes
            .into_iter()
            .map(|(delta_omega, dist)| ModeSpec { delta_omega, dist })
            .collect(),
        voigt: VoigtParams::new(mhz_to_rad_s(0.39), mhz_to_rad_s(2.0)).unwrap(),
        amplitude: 0.6,
        baseline: 0.02,
        truncation: Truncation::default(),
    }
}

fn oracle_probs(d: &PhononDistribution) -> Vec<f64> {
    match *d {
        PhononDistribution::Thermal { nbar } => {
            let nmax = if nbar == 0.0 { 0 } else { (35.0 / (1.0 + 1.0 / nbar).ln()).ceil() as usize };
            common::thermal_probs(nbar, nmax)
        }
        PhononDistribution::Coherent { alpha } => {
            let m = alpha * alpha;
            common::coherent_probs(alpha, (m + 12.0 * m.sqrt() + 40.0).ceil() as usize)
        }
        _ => unreachable!(),
    }
}

#[test]
fn c3_centroid_identities() {
    let t = Instant::now();
    let d = paper_trap().line_shift_per_phonon(Polarizability::from_e30(3.68)).unwrap();
    let th = |n: f64| PhononDistribution::thermal(n).unwrap();
    let co = |a: f64| PhononDistribution::coherent(a).unwrap();
    let mut cases: Vec<Vec<(f64, PhononDistribution)>> = Vec::new();
    for n in [0.0, 0.3, 1.0, 2.5, 5.0, 7.5, 10.0] {
        cases.push(vec![(d.y, th(n))]);
    }
    for a in [0.5, 2.4, 3.8, 6.0, 8.0, 10.0, 12.0] {
        cases.push(vec![(d.y, co(a))]);
    }
    cases.push(vec![(d.x, th(0.3)), (d.y, co(6.0))]);
    cases.push(vec![(d.x, th(10.0)), (d.y, th(10.0))]);
    cases.push(vec![(d.x, co(12.0)), (d.y, th(10.0))]);
    cases.push(vec![(d.x, th(2.0)), (d.y, co(5.0)), (d.z, th(0.5))]);
    let mut worst: f64 = 0.0;
    for modes in &cases {
        let model = spectrum_model(modes.clone());
        let centroid = model.centroid().unwrap();
        let closed = model.centroid_closed_form();
        let oracle_modes: Vec<(f64, Vec<f64>)> = modes.iter().map(|(s, dist)| (*s, oracle_probs(dist))).collect();
        let brute = common::brute_centroid(model.center, &oracle_modes);
        let sum: f64 = modes.iter().map(|(s, dist)| s * dist.mean()).sum();
        let scale = sum.abs().max(1e-300);
        for v in [centroid, closed] {
            worst = worst.max((v - brute).abs() / scale).max((v - sum).abs() / scale);
        }
    }
    // linear in n̄ and quadratic in |α|: both follow from the identity at every point
    let lin = (0..=10)
        .map(|k| rel(spectrum_model(vec![(d.y, th(k as f64))]).centroid().unwrap(), k as f64 * d.y))
        .fold(0.0, f64::max);
    let quad = (1..=12)
        .map(|a| rel(spectrum_model(vec![(d.y, co(a as f64))]).centroid().unwrap(), (a * a) as f64 * d.y))
        .fold(0.0, f64::max);
    let worst = worst.max(lin).max(quad);
    let el = t.elapsed();
    verdict(
        3,
        "centroid identities",
        worst <= 1e-5 && within(el, 10),
        format!("{} mixtures + n̄/|α| sweeps, worst rel err {worst:.2e} (tol 1e-5), {el:.2?}", cases.len()),
    );
}

#[test]
fn c4_relative_shift_ladder() {
    let t = Instant::now();
    let mut cfg = ExperimentConfig::table1("57S").unwrap();
    cfg.motion.excitations = [2.4, 3.8, 6.0].map(Excitation::Alpha).to_vec();
    let run = simulate_and_fit(&cfg).unwrap();
    // measured positions −1.74(1) (thermal), −2.1(2), −2.8(2), −4.3(3) MHz
    let measured = [(-0.36, 0.2f64.hypot(0.01)), (-1.06, 0.2f64.hypot(0.01)), (-2.56, 0.3f64.hypot(0.01))];
    let mut pass = true;
    let mut detail = String::new();
    for (e, (want, err)) in run.excitations.iter().zip(measured) {
        let tol = err + e.shift_err_mhz;
        let ok = (e.relative_shift_mhz - want).abs() <= tol;
        pass &= ok;
        detail += &format!(
            "|α|={:.1}: {:+.3} vs {:+.2} (tol {:.3}) {}; ",
            e.alpha_true,
            e.relative_shift_mhz,
            want,
            tol,
            if ok { "ok" } else { "off" }
        );
    }
    let el = t.elapsed();
    pass &= run.excitations.len() == 3 && within(el, 120);
    verdict(4, "relative shift ladder", pass, format!("{detail}{el:.2?}"));
}

struct StateRuns {
    label: &'static str,
    principal_n: u32,
    lo: f64,
    hi: f64,
    values: Vec<f64>,
    failures: usize,
}

const SEEDS: u64 = 50;

fn table1_runs() -> &'static (Vec<StateRuns>, Duration) {
    static RUNS: OnceLock<(Vec<StateRuns>, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let t = Instant::now();
        let states = [("49S", 49, 1.1, 1.5), ("53S", 53, 2.0, 2.4), ("57S", 57, 3.4, 3.8)]
            .into_iter()
            .map(|(label, principal_n, lo, hi)| {
                let fits: Vec<Option<f64>> = (0..SEEDS)
                    .into_par_iter()
                    .map(|s| {
                        let mut c = ExperimentConfig::table1(label).unwrap();
                        c.seed = 1000 + s;
                        simulate_and_fit(&c).ok().and_then(|r| r.weighted_e30).map(|(p, _)| p)
                    })
                    .collect();
                StateRuns {
                    label,
                    principal_n,
                    lo,
                    hi,
                    failures: fits.iter().filter(|f| f.is_none()).count(),
                    values: fits.into_iter().flatten().collect(),
                }
            })
            .collect();
        (states, t.elapsed())
    })
}

#[test]
fn c5_table1_recovery() {
    let (states, el) = table1_runs();
    let mut pass = within(*el, 600);
    let mut detail = String::new();
    for s in states {
        let hits = s.values.iter().filter(|&&p| p >= s.lo && p <= s.hi).count();
        // failed runs count as misses
        let ok = hits as f64 >= 0.9 * SEEDS as f64;
        pass &= ok;
        detail += &format!("{} {hits}/{SEEDS} in [{}, {}] ({} failed); ", s.label, s.lo, s.hi, s.failures);
    }
    verdict(5, "table 1 recovery", pass, format!("{detail}{el:.2?}"));
}

fn rabi_truth() -> RabiTruth {
    let c = ExperimentConfig::table1("57S").unwrap();
    RabiTruth {
        omega0: khz_to_rad_s(c.rabi.omega0_khz),
        eta: c.rabi.eta,
        gamma_dec: c.rabi.gamma_dec,
        amplitude: c.rabi.amplitude,
        nbar: c.motion.nbar_y,
        carrier_taus: c.carrier_taus(),
        sideband_taus: c.sideband_taus(),
        shots: c.rabi.shots,
    }
}

fn pair_truth(pol: f64, alpha: f64) -> PairTruth {
    let c = ExperimentConfig::table1("57S").unwrap();
    PairTruth {
        trap: paper_trap(),
        voigt: c.laser.voigt().unwrap(),
        center: 0.0,
        pol: Polarizability::from_e30(pol),
        nbar_x: c.motion.nbar_x,
        nbar_y: c.motion.nbar_y,
        alpha,
        amplitude: c.spectrum.amplitude,
        baseline: c.spectrum.baseline,
        grid: c.grid(),
        shots: c.spectrum.shots,
    }
}

#[test]
fn c6_uncertainty_budgets() {
    let t = Instant::now();
    // η error from a π/40 uncertainty on the π/4 beam angle
    let beam = EtaPrior::BeamAngle {
        angle: FRAC_PI_4,
        sigma: PI / 40.0,
    };
    let mut pass = true;
    let mut detail = String::new();
    for (k, alpha) in [3.0, 6.0, 10.0].into_iter().enumerate() {
        let cfg = McConfig {
            replicas: 1000,
            seed: 600 + k as u64,
            eta_prior: beam,
            ..McConfig::default()
        };
        let r = mc_uncertainty(&McProblem::Alpha { rabi: rabi_truth(), alpha }, &cfg).unwrap();
        let ok = (0.05..=0.11).contains(&r.rel_std);
        pass &= ok;
        detail += &format!("σ|α|/|α| at |α|={alpha}: {:.2}% ({} failed); ", 100.0 * r.rel_std, r.failed);
    }
    {
        let cfg = McConfig {
            replicas: 100,
            seed: 610,
            eta_prior: EtaPrior::Relative { sigma: 0.1 },
            ..McConfig::default()
        };
        let r = mc_uncertainty(&McProblem::Alpha { rabi: rabi_truth(), alpha: 6.0 }, &cfg).unwrap();
        println!("criterion 6 [info]: σ|α|/|α| at |α|=6 with η ~ N(η₀, η₀/10), 100 replicas: {:.2}%", 100.0 * r.rel_std);
    }
    let mut prev = 0.0;
    for (k, pol) in [1.24, 2.18, 3.68].into_iter().enumerate() {
        let cfg = McConfig {
            replicas: 1000,
            seed: 620 + k as u64,
            ..McConfig::default()
        };
        let r = mc_uncertainty(&McProblem::Pair(pair_truth(pol, 6.0)), &cfg).unwrap();
        let ok = (0.10..=0.18).contains(&r.rel_std) && r.std > prev;
        pass &= ok;
        prev = r.std;
        detail += &format!(
            "σ𝒫/𝒫 at 𝒫={pol}: {:.2}% (σ {:.3}, {} failed); ",
            100.0 * r.rel_std,
            r.std,
            r.failed
        );
    }
    let el = t.elapsed();
    pass &= within(el, 900);
    verdict(6, "uncertainty budgets", pass, format!("{detail}{el:.2?}"));
}

#[test]
fn c7_rabi_frequency_vs_displacement_oracle() {
    let t = Instant::now();
    let etas = [0.01, 0.051, 0.1, 0.2, 0.3];
    let jobs: Vec<(f64, usize)> = etas.iter().flat_map(|&e| (0..=300).map(move |n| (e, n))).collect();
    let (worst, checked) = jobs
        .par_iter()
        .map(|&(eta, n)| {
            let col = common::displacement_column(n, eta, n + 80);
            let mut worst: f64 = 0.0;
            let mut checked = 0;
            for s in -2i32..=2 {
                let m = n as i32 + s;
                if m < 0 {
                    continue;
                }
                let got = rabi_frequency(n as u32, s, 1.0, eta).unwrap().abs();
                worst = worst.max(rel(got, col[m as usize].norm()));
                checked += 1;
            }
            (worst, checked)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
    let el = t.elapsed();
    verdict(
        7,
        "Rabi frequency vs displacement operator",
        worst <= 1e-8 && within(el, 30),
        format!("{checked} elements, worst rel err {worst:.2e} (tol 1e-8), {el:.2?}"),
    );
}

#[test]
fn c8_power_law_in_principal_number() {
    let (states, _) = table1_runs();
    let pts: Vec<(f64, f64, f64)> = states
        .iter()
        .map(|s| {
            let n = s.values.len() as f64;
            let m = s.values.iter().sum::<f64>() / n;
            let sd = (s.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            (s.principal_n as f64, m, sd / n.sqrt())
        })
        .collect();
    let fit = power_law_fit(&pts).unwrap();
    let ratio = 3.68 / 1.24;
    let scaling = (57.0f64 / 49.0).powi(7);
    let ratio_err = rel(ratio, scaling);
    verdict(
        8,
        "n^7 scaling",
        (fit.exponent - 7.0).abs() <= 1.0 && ratio_err <= 0.05,
        format!(
            "fitted exponent {:.2} ± {:.2} (want 7 ± 1); 3.68/1.24 = {ratio:.3} vs (57/49)^7 = {scaling:.3}, {:.1}% apart",
            fit.exponent,
            fit.exponent_err,
            100.0 * ratio_err
        ),
    );
}

#[test]
fn c9_pipeline_determinism() {
    let cfg = ExperimentConfig::table1("57S").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    run_pipeline_in(&cfg, &dir.path().join("a")).unwrap();
    let once = t.elapsed();
    run_pipeline_in(&cfg, &dir.path().join("b")).unwrap();
    let el = t.elapsed();
    let a = std::fs::read(dir.path().join("a/manifest.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/manifest.json")).unwrap();
    verdict(
        9,
        "pipeline determinism",
        a == b && !a.is_empty() && el <= once * 2 + Duration::from_secs(1),
        format!("manifests {} ({} bytes), two runs {el:.2?}", if a == b { "identical" } else { "differ" }, a.len()),
    );
}
