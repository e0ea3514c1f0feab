//! Correlated fit of a reference and an excited spectrum for the line centre ν₀ and the
//! polarizability 𝒫.
//!
//! Both spectra share ν₀ and 𝒫; each has its own amplitude and baseline, which enter
//! linearly and are solved exactly at every (ν₀, 𝒫) (variable projection). 𝒫 is kept below
//! the confinement limit 𝒫_max through `𝒫 = 𝒫_max (1 − e^{−u})`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::lsq::{self, Bounds, LsqOptions};
use super::{sqrt_weights, start_points, FitResult, DEFAULT_STARTS};
use crate::error::{invalid, Result};
use crate::lineshape::{mixture_shape, JointSupport, SpectrumDataset, Truncation, VoigtKernel, VoigtParams};
use crate::phonon::PhononDistribution;
use crate::trap::{Polarizability, TrapParameters};
use crate::units::{mhz_to_rad_s, rad_s_to_mhz};

/// One measured spectrum with the phonon distributions of its modes (x, y and optionally z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSide {
    pub data: SpectrumDataset,
    pub dists: Vec<PhononDistribution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairFitOptions {
    pub starts: usize,
    pub seed: u64,
    /// Start value for 𝒫; further starts draw from 0.5–2 times it.
    pub pol_start: Polarizability,
    /// Start value for ν₀ (rad/s); taken from the reference data when absent.
    pub nu0_start: Option<f64>,
    pub truncation: Truncation,
    pub lsq: LsqOptions,
}

impl Default for PairFitOptions {
    fn default() -> Self {
        PairFitOptions {
            starts: DEFAULT_STARTS,
            seed: 0,
            pol_start: Polarizability::from_e30(1.0),
            nu0_start: None,
            truncation: Truncation::default(),
            lsq: LsqOptions::default(),
        }
    }
}

/// Amplitude and baseline of one spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearPart {
    pub amplitude: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFit {
    /// rad/s
    pub nu0: f64,
    pub polarizability: Polarizability,
    pub reference: LinearPart,
    pub excited: LinearPart,
    pub result: FitResult,
}

impl PairFit {
    /// 1σ of 𝒫 in units of 1e-30 C·m²/V.
    pub fn pol_sigma_e30(&self) -> f64 {
        self.result.sigma("polarizability").unwrap_or(f64::NAN)
    }
}

/// Precomputed state shared by every residual evaluation.
pub(crate) struct PairProblem<'a> {
    trap: &'a TrapParameters,
    kernel: VoigtKernel,
    sides: [PreparedSide<'a>; 2],
    pol_max: f64,
}

struct PreparedSide<'a> {
    grid: &'a [f64],
    probs: &'a [f64],
    sw: Vec<f64>,
    support: JointSupport,
}

impl<'a> PairProblem<'a> {
    pub fn new(
        reference: &'a SpectrumSide,
        excited: &'a SpectrumSide,
        trap: &'a TrapParameters,
        voigt: &VoigtParams,
        trunc: Truncation,
    ) -> Result<Self> {
        let prep = |side: &'a SpectrumSide| -> Result<PreparedSide<'a>> {
            side.data.validate()?;
            if side.data.len() < 3 {
                return invalid("a spectrum needs at least three points");
            }
            if side.dists.is_empty() || side.dists.len() > 3 {
                return invalid("a spectrum needs one to three mode distributions");
            }
            let dists: Vec<&PhononDistribution> = side.dists.iter().collect();
            Ok(PreparedSide {
                grid: &side.data.detunings,
                probs: &side.data.probs,
                sw: sqrt_weights(&side.data.probs, &side.data.shots),
                support: JointSupport::new(&dists, trunc)?,
            })
        };
        Ok(PairProblem {
            trap,
            kernel: VoigtKernel::tabulated(voigt)?,
            sides: [prep(reference)?, prep(excited)?],
            pol_max: trap.confinement_limit().to_e30(),
        })
    }

    pub fn n_data(&self) -> usize {
        self.sides.iter().map(|s| s.grid.len()).sum()
    }

    pub fn pol_from_u(&self, u: f64) -> f64 {
        self.pol_max * (1.0 - (-u).exp())
    }

    pub fn u_from_pol(&self, pol: f64) -> f64 {
        -(1.0 - (pol / self.pol_max).min(1.0 - 1e-12)).ln()
    }

    /// Unit-height mixture shapes of both spectra at (ν₀ in MHz, 𝒫 in 1e-30).
    fn shapes(&self, nu0_mhz: f64, pol_e30: f64) -> Result<[Vec<f64>; 2]> {
        let shifts = self
            .trap
            .line_shift_per_phonon(Polarizability::from_e30(pol_e30))?
            .as_array();
        let center = mhz_to_rad_s(nu0_mhz);
        let mk = |s: &PreparedSide| {
            let comps = s.support.components(&shifts);
            mixture_shape(&self.kernel, &comps, center, s.grid)
        };
        Ok([mk(&self.sides[0]), mk(&self.sides[1])])
    }

    /// Weighted linear least squares for (amplitude, baseline) of one side.
    fn solve_linear(side: &PreparedSide, shape: &[f64]) -> LinearPart {
        let (mut s00, mut s01, mut s11, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((&f, &y), &sw) in shape.iter().zip(side.probs).zip(&side.sw) {
            let w = sw * sw;
            s00 += w * f * f;
            s01 += w * f;
            s11 += w;
            t0 += w * f * y;
            t1 += w * y;
        }
        let det = s00 * s11 - s01 * s01;
        if det.abs() <= 1e-300 {
            return LinearPart {
                amplitude: 0.0,
                baseline: t1 / s11,
            };
        }
        LinearPart {
            amplitude: (t0 * s11 - t1 * s01) / det,
            baseline: (s00 * t1 - s01 * t0) / det,
        }
    }

    /// Residuals and linear parts for (ν₀ in MHz, u).
    pub fn projected(&self, nu0_mhz: f64, u: f64) -> Result<(Vec<f64>, [LinearPart; 2])> {
        let shapes = self.shapes(nu0_mhz, self.pol_from_u(u))?;
        let mut out = Vec::with_capacity(self.n_data());
        let mut parts = [LinearPart {
            amplitude: 0.0,
            baseline: 0.0,
        }; 2];
        for (k, (side, shape)) in self.sides.iter().zip(&shapes).enumerate() {
            let lp = Self::solve_linear(side, shape);
            for ((&f, &y), &sw) in shape.iter().zip(side.probs).zip(&side.sw) {
                out.push(sw * (y - lp.baseline - lp.amplitude * f));
            }
            parts[k] = lp;
        }
        Ok((out, parts))
    }

    /// Residuals in the natural parameters (ν₀, 𝒫, A_ref, b_ref, A_exc, b_exc).
    pub fn full(&self, p: &[f64]) -> Result<Vec<f64>> {
        let shapes = self.shapes(p[0], p[1])?;
        let mut out = Vec::with_capacity(self.n_data());
        for (k, (side, shape)) in self.sides.iter().zip(&shapes).enumerate() {
            let (a, b) = (p[2 + 2 * k], p[3 + 2 * k]);
            for ((&f, &y), &sw) in shape.iter().zip(side.probs).zip(&side.sw) {
                out.push(sw * (y - b - a * f));
            }
        }
        Ok(out)
    }

    /// Centroid of the baseline-subtracted reference data (MHz), a robust ν start.
    fn reference_centroid_mhz(&self) -> f64 {
        let s = &self.sides[0];
        let floor = s.probs.iter().cloned().fold(f64::INFINITY, f64::min);
        let (mut m0, mut m1) = (0.0, 0.0);
        for (&w, &p) in s.grid.iter().zip(s.probs) {
            let h = p - floor;
            m0 += h;
            m1 += h * w;
        }
        if m0 > 0.0 {
            rad_s_to_mhz(m1 / m0)
        } else {
            rad_s_to_mhz(s.grid[s.grid.len() / 2])
        }
    }
}

/// Fits ν₀ and 𝒫 jointly to a reference and an excited spectrum.
pub fn fit_spectrum_pair(
    reference: &SpectrumSide,
    excited: &SpectrumSide,
    trap: &TrapParameters,
    voigt: &VoigtParams,
    opts: &PairFitOptions,
) -> Result<PairFit> {
    let problem = PairProblem::new(reference, excited, trap, voigt, opts.truncation)?;
    let pol0 = opts.pol_start.to_e30();
    if !pol0.is_finite() || pol0 >= problem.pol_max {
        return invalid("polarizability start lies beyond the confinement limit");
    }
    let ref_mean_shift = {
        let shifts = trap.line_shift_per_phonon(opts.pol_start)?.as_array();
        reference
            .dists
            .iter()
            .zip(shifts)
            .map(|(d, s)| d.mean() * s)
            .sum::<f64>()
    };
    let nu0_start = match opts.nu0_start {
        Some(v) => rad_s_to_mhz(v),
        None => problem.reference_centroid_mhz() - rad_s_to_mhz(ref_mean_shift),
    };

    let residuals = |x: &[f64]| -> Result<Vec<f64>> { Ok(problem.projected(x[0], x[1])?.0) };
    let bounds = Bounds::new(vec![f64::NEG_INFINITY, -20.0], vec![f64::INFINITY, 30.0], vec![1.0, 0.1])?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let jitter = Normal::new(0.0, 0.1).expect("valid normal");
    let first = vec![nu0_start, problem.u_from_pol(pol0)];
    let mut starts = start_points(first, opts.starts, &mut rng, |_, rng| {
        let f = 0.5 * 4f64.powf(rng.random::<f64>());
        let pol = (pol0 * f).min(0.95 * problem.pol_max);
        vec![nu0_start + jitter.sample(rng), problem.u_from_pol(pol)]
    });
    // When the trial shift misses the excited line entirely the excited amplitude drops to
    // zero and the objective is flat in 𝒫, so a coarse scan seeds the best basins first.
    for x in scan_starts(&problem, trap, reference, pol0, nu0_start + rad_s_to_mhz(ref_mean_shift))? {
        starts.insert(0, x);
    }
    let (sol, iterations) = lsq::multistart(residuals, &starts, &bounds, &opts.lsq)?;
    let (_, parts) = problem.projected(sol.x[0], sol.x[1])?;
    let pol = problem.pol_from_u(sol.x[1]);

    let natural = [
        sol.x[0],
        pol,
        parts[0].amplitude,
        parts[0].baseline,
        parts[1].amplitude,
        parts[1].baseline,
    ];
    let nat_bounds = Bounds::new(
        vec![f64::NEG_INFINITY; 6],
        vec![f64::INFINITY, problem.pol_max, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY],
        vec![1.0, 1.0, 0.1, 0.01, 0.1, 0.01],
    )?;
    let mut full = |p: &[f64]| problem.full(p);
    let r_nat = full(&natural)?;
    let jac = lsq::jacobian(&mut full, &natural, &r_nat, &nat_bounds, 1e-6)?;
    let cov = lsq::covariance(&jac);
    let result = FitResult::from_covariance(
        &[
            ("nu0", "MHz"),
            ("polarizability", "1e-30 C m^2/V"),
            ("amplitude_reference", "1"),
            ("baseline_reference", "1"),
            ("amplitude_excited", "1"),
            ("baseline_excited", "1"),
        ],
        &natural,
        &cov,
        sol.cost,
        problem.n_data(),
        (&sol, iterations, starts.len()),
    );
    Ok(PairFit {
        nu0: mhz_to_rad_s(sol.x[0]),
        polarizability: Polarizability::from_e30(pol),
        reference: parts[0],
        excited: parts[1],
        result,
    })
}

/// Local minima of the projected χ² along 𝒫 ∈ [−s/2, 4s], s = max(|𝒫₀|, 0.1), at most two,
/// best last. ν₀ follows the reference centroid `ref_centroid` (MHz) at each trial 𝒫.
fn scan_starts(
    problem: &PairProblem,
    trap: &TrapParameters,
    reference: &SpectrumSide,
    pol0: f64,
    ref_centroid: f64,
) -> Result<Vec<Vec<f64>>> {
    const POINTS: usize = 64;
    let s = pol0.abs().max(0.1);
    let hi = (4.0 * s).min(0.9 * problem.pol_max);
    let mut trials = Vec::with_capacity(POINTS);
    for i in 0..POINTS {
        let pol = -0.5 * s + (hi + 0.5 * s) * i as f64 / (POINTS - 1) as f64;
        let Ok(shifts) = trap.line_shift_per_phonon(Polarizability::from_e30(pol)) else {
            continue;
        };
        let ref_shift: f64 = reference
            .dists
            .iter()
            .zip(shifts.as_array())
            .map(|(d, s)| d.mean() * s)
            .sum();
        let nu0 = ref_centroid - rad_s_to_mhz(ref_shift);
        let u = problem.u_from_pol(pol);
        let cost: f64 = problem.projected(nu0, u)?.0.iter().map(|r| r * r).sum();
        trials.push((cost, vec![nu0, u]));
    }
    let m = trials.len();
    let mut minima: Vec<&(f64, Vec<f64>)> = (0..m)
        .filter(|&i| (i == 0 || trials[i].0 <= trials[i - 1].0) && (i + 1 == m || trials[i].0 <= trials[i + 1].0))
        .map(|i| &trials[i])
        .collect();
    minima.sort_by(|a, b| b.0.total_cmp(&a.0));
    let keep = minima.len().saturating_sub(2);
    Ok(minima.into_iter().skip(keep).map(|t| t.1.clone()).collect())
}

/// χ² of the pair profiled over ν₀ (and the linear parts) at fixed 𝒫.
pub fn profile_chi2(
    reference: &SpectrumSide,
    excited: &SpectrumSide,
    trap: &TrapParameters,
    voigt: &VoigtParams,
    pol: Polarizability,
    nu0_start: f64,
    trunc: Truncation,
) -> Result<f64> {
    let problem = PairProblem::new(reference, excited, trap, voigt, trunc)?;
    let u = problem.u_from_pol(pol.to_e30());
    let f = |x: &[f64]| -> Result<Vec<f64>> { Ok(problem.projected(x[0], u)?.0) };
    let sol = lsq::levenberg_marquardt(f, &[rad_s_to_mhz(nu0_start)], &Bounds::unbounded(vec![1.0]), &LsqOptions::default())?;
    Ok(sol.cost)
}
