//! Rydberg depopulation spectra of an ion with occupied motional modes.
//!
//! Every joint Fock state `(n_1, …, n_k)` contributes one Voigt line centred at
//! `center + Σ n_i Δω_i` with weight `Π P(n_i)`. The spectrum is the weighted sum of those
//! lines, peak-normalized so that `amplitude` is the height of a single unshifted Fock line:
//!
//! ```text
//! L'(ω) = baseline + amplitude · Σ w_j V(ω − center − s_j) / V(0)
//! ```
//!
//! The zero-point shift is absorbed into `center`, and the axial mode is normally folded into
//! the Gaussian width instead of being enumerated.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::phonon::{PhononDistribution, DEFAULT_TAIL_MASS};
use crate::special::{faddeeva, faddeeva_re};

/// Default cap on the number of joint Fock states enumerated for one spectrum.
pub const DEFAULT_MAX_TERMS: usize = 1_000_000;

/// Upper bound on the tail mass used by [`SpectrumModel::centroid`].
pub const CENTROID_TAIL_MASS: f64 = 1e-10;

/// Widths of a single Fock line, in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoigtParams {
    /// Gaussian standard deviation (Doppler and axial motion).
    pub sigma: f64,
    /// Lorentzian full width at half maximum (laser and natural widths).
    pub gamma_l: f64,
}

impl VoigtParams {
    pub fn new(sigma: f64, gamma_l: f64) -> Result<Self> {
        let p = VoigtParams { sigma, gamma_l };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.gamma_l >= 0.0) || !self.sigma.is_finite() || !self.gamma_l.is_finite() {
            return invalid("Voigt widths must be finite and non-negative");
        }
        if self.sigma == 0.0 && self.gamma_l == 0.0 {
            return invalid("Voigt widths cannot both be zero");
        }
        Ok(())
    }

    /// Full width at half maximum, using the Olivero–Longbothum approximation (0.02 %).
    pub fn fwhm(&self) -> f64 {
        let fg = 2.0 * (2.0 * 2f64.ln()).sqrt() * self.sigma;
        let fl = self.gamma_l;
        0.5346 * fl + (0.2166 * fl * fl + fg * fg).sqrt()
    }
}

/// Precomputed evaluator of an area-normalized Voigt density.
///
/// [`VoigtKernel::new`] evaluates the Faddeeva function on every call.
/// [`VoigtKernel::tabulated`] adds a cubic Hermite table over the line core (relative error
/// below 1e-8 of the peak), which is what the fitting routines use.
#[derive(Debug, Clone)]
pub struct VoigtKernel {
    kind: KernelKind,
    peak: f64,
    table: Option<Arc<HermiteTable>>,
}

#[derive(Debug)]
struct HermiteTable {
    step: f64,
    inv_step: f64,
    x_max: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteTable {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let t = x * self.inv_step;
        let i = t as usize;
        let u = t - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * self.step, self.slopes[i + 1] * self.step);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * d1
    }
}

#[derive(Debug, Clone, Copy)]
enum KernelKind {
    Gaussian { inv_two_var: f64, norm: f64 },
    Lorentzian { hwhm: f64 },
    Voigt { inv_scale: f64, y: f64, norm: f64 },
}

impl VoigtKernel {
    pub fn new(params: &VoigtParams) -> Result<Self> {
        params.validate()?;
        let kind = if params.gamma_l == 0.0 {
            KernelKind::Gaussian {
                inv_two_var: 1.0 / (2.0 * params.sigma * params.sigma),
                norm: 1.0 / (params.sigma * (2.0 * PI).sqrt()),
            }
        } else if params.sigma == 0.0 {
            KernelKind::Lorentzian {
                hwhm: 0.5 * params.gamma_l,
            }
        } else {
            let inv_scale = 1.0 / (params.sigma * SQRT_2);
            KernelKind::Voigt {
                inv_scale,
                y: 0.5 * params.gamma_l * inv_scale,
                norm: 1.0 / (params.sigma * (2.0 * PI).sqrt()),
            }
        };
        let mut k = VoigtKernel {
            kind,
            peak: 1.0,
            table: None,
        };
        k.peak = k.exact(0.0);
        Ok(k)
    }

    /// Kernel with a Hermite table out to 60 FWHM, 128 nodes per FWHM; exact beyond.
    pub fn tabulated(params: &VoigtParams) -> Result<Self> {
        let mut k = Self::new(params)?;
        let step = params.fwhm() / 128.0;
        let nodes = 60 * 128 + 2;
        let mut values = Vec::with_capacity(nodes);
        let mut slopes = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let (v, d) = k.exact_with_slope(i as f64 * step);
            values.push(v);
            slopes.push(d);
        }
        k.table = Some(Arc::new(HermiteTable {
            step,
            inv_step: 1.0 / step,
            x_max: (nodes - 2) as f64 * step,
            values,
            slopes,
        }));
        Ok(k)
    }

    #[inline]
    fn exact(&self, x: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian { inv_two_var, norm } => norm * (-x * x * inv_two_var).exp(),
            KernelKind::Lorentzian { hwhm } => hwhm / (PI * (x * x + hwhm * hwhm)),
            KernelKind::Voigt { inv_scale, y, norm } => norm * faddeeva_re(x * inv_scale, y),
        }
    }

    fn exact_with_slope(&self, x: f64) -> (f64, f64) {
        match self.kind {
            KernelKind::Gaussian { inv_two_var, norm } => {
                let v = norm * (-x * x * inv_two_var).exp();
                (v, -2.0 * x * inv_two_var * v)
            }
            KernelKind::Lorentzian { hwhm } => {
                let q = x * x + hwhm * hwhm;
                (hwhm / (PI * q), -2.0 * x * hwhm / (PI * q * q))
            }
            KernelKind::Voigt { inv_scale, y, norm } => {
                // w'(z) = -2 z w(z) + 2i/sqrt(pi)
                let z = Complex::new(x * inv_scale, y);
                let w = faddeeva(z);
                let dw = -2.0 * z * w + Complex::new(0.0, 2.0 / PI.sqrt());
                (norm * w.re, norm * inv_scale * dw.re)
            }
        }
    }

    /// Density at offset `x` (rad/s) from the line centre.
    #[inline]
    pub fn density(&self, x: f64) -> f64 {
        let x = x.abs();
        match &self.table {
            Some(t) if x < t.x_max => t.eval(x),
            _ => self.exact(x),
        }
    }

    /// Density divided by its maximum, so the line peaks at 1.
    #[inline]
    pub fn normalized(&self, x: f64) -> f64 {
        self.density(x) / self.peak
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }
}

/// Area-normalized Voigt density at `omega` for a line at `center`.
pub fn voigt_profile(omega: f64, center: f64, params: &VoigtParams) -> Result<f64> {
    Ok(VoigtKernel::new(params)?.density(omega - center))
}

/// One occupied motional mode: its per-phonon line shift and phonon distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    /// Line shift per phonon (rad/s).
    pub delta_omega: f64,
    pub dist: PhononDistribution,
}

/// Options for enumerating joint Fock states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub tail_mass: f64,
    pub max_terms: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            tail_mass: DEFAULT_TAIL_MASS,
            max_terms: DEFAULT_MAX_TERMS,
        }
    }
}

/// Joint phonon occupations of up to three modes with their probabilities, after pruning.
///
/// Weights do not depend on the line shifts, so one `JointSupport` serves every polarizability
/// an optimizer visits.
#[derive(Debug, Clone)]
pub struct JointSupport {
    n_modes: usize,
    occupations: Vec<[u32; 3]>,
    weights: Vec<f64>,
}

impl JointSupport {
    pub fn new(dists: &[&PhononDistribution], trunc: Truncation) -> Result<Self> {
        if dists.len() > 3 {
            return invalid("at most three motional modes are supported");
        }
        let supports = dists
            .iter()
            .map(|d| d.support(trunc.tail_mass))
            .collect::<Result<Vec<_>>>()?;
        let terms = supports
            .iter()
            .try_fold(1usize, |acc, s| acc.checked_mul(s.probs.len()))
            .unwrap_or(usize::MAX);
        if terms > trunc.max_terms {
            return Err(Error::TruncationOverflow {
                terms,
                limit: trunc.max_terms,
            });
        }
        let threshold = trunc.tail_mass / terms as f64;
        let mut occupations = Vec::new();
        let mut weights = Vec::new();
        let mut stack: Vec<([u32; 3], f64, usize)> = vec![([0; 3], 1.0, 0)];
        // Depth-first over the Cartesian product; a partial weight below threshold can only
        // shrink further, so the whole branch is pruned.
        while let Some((occ, w, depth)) = stack.pop() {
            if depth == supports.len() {
                occupations.push(occ);
                weights.push(w);
                continue;
            }
            for (n, p) in supports[depth].iter().rev() {
                let wn = w * p;
                if wn < threshold {
                    continue;
                }
                let mut next = occ;
                next[depth] = n as u32;
                stack.push((next, wn, depth + 1));
            }
        }
        Ok(JointSupport {
            n_modes: dists.len(),
            occupations,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        self.occupations
            .iter()
            .zip(&self.weights)
            .map(move |(o, &w)| (&o[..self.n_modes], w))
    }

    /// Line offsets `Σ n_i Δω_i` for each joint state, paired with their weights.
    pub fn components(&self, shifts: &[f64]) -> Vec<(f64, f64)> {
        self.occupations
            .iter()
            .zip(&self.weights)
            .map(|(occ, &w)| {
                let s: f64 = (0..self.n_modes).map(|i| occ[i] as f64 * shifts[i]).sum();
                (s, w)
            })
            .collect()
    }
}

/// Evaluates `Σ w_j V(ω − center − s_j) / V(0)` on a grid.
pub fn mixture_shape(
    kernel: &VoigtKernel,
    components: &[(f64, f64)],
    center: f64,
    grid: &[f64],
) -> Vec<f64> {
    grid.iter()
        .map(|&w| {
            let x = w - center;
            components
                .iter()
                .map(|&(s, wt)| wt * kernel.density(x - s))
                .sum::<f64>()
                / kernel.peak()
        })
        .collect()
}

/// Full forward model of one depopulation spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    /// Unperturbed two-photon resonance (rad/s, in detuning coordinates).
    pub center: f64,
    pub modes: Vec<ModeSpec>,
    pub voigt: VoigtParams,
    /// Height of a single unshifted Fock line, in (0, 1].
    pub amplitude: f64,
    /// Probability offset, in [0, 1).
    pub baseline: f64,
    #[serde(default)]
    pub truncation: Truncation,
}

impl SpectrumModel {
    pub fn validate(&self) -> Result<()> {
        self.voigt.validate()?;
        if self.modes.len() > 3 {
            return invalid("at most three motional modes are supported");
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return invalid(format!("amplitude must lie in (0, 1], got {}", self.amplitude));
        }
        if !(self.baseline >= 0.0 && self.baseline < 1.0) {
            return invalid(format!("baseline must lie in [0, 1), got {}", self.baseline));
        }
        if self.baseline + self.amplitude > 1.0 + 1e-12 {
            return invalid("baseline + amplitude exceeds 1");
        }
        if !self.center.is_finite() || self.modes.iter().any(|m| !m.delta_omega.is_finite()) {
            return invalid("line centre and shifts must be finite");
        }
        Ok(())
    }

    pub fn joint_support(&self) -> Result<JointSupport> {
        let dists: Vec<&PhononDistribution> = self.modes.iter().map(|m| &m.dist).collect();
        JointSupport::new(&dists, self.truncation)
    }

    fn shifts(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.delta_omega).collect()
    }

    /// Weighted Fock lines `(offset from center, weight)`.
    pub fn components(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        Ok(self.joint_support()?.components(&self.shifts()))
    }

    /// Depopulation probability at every grid detuning (rad/s).
    pub fn spectrum(&self, grid: &[f64]) -> Result<Vec<f64>> {
        let components = self.components()?;
        let kernel = VoigtKernel::new(&self.voigt)?;
        Ok(mixture_shape(&kernel, &components, self.center, grid)
            .into_iter()
            .map(|v| self.baseline + self.amplitude * v)
            .collect())
    }

    /// First moment of the baseline-subtracted spectrum, taken as the weighted mean of the
    /// symmetric component lines over the retained support.
    ///
    /// The support is enumerated with a tail mass of at most [`CENTROID_TAIL_MASS`], since
    /// the heavy upper tail of a thermal law biases the first moment far more than it
    /// changes the spectrum itself.
    pub fn centroid(&self) -> Result<f64> {
        self.validate()?;
        let dists: Vec<&PhononDistribution> = self.modes.iter().map(|m| &m.dist).collect();
        let trunc = Truncation {
            tail_mass: self.truncation.tail_mass.min(CENTROID_TAIL_MASS),
            max_terms: self.truncation.max_terms,
        };
        let components = JointSupport::new(&dists, trunc)?.components(&self.shifts());
        let total: f64 = components.iter().map(|&(_, w)| w).sum();
        let first: f64 = components.iter().map(|&(s, w)| s * w).sum();
        Ok(self.center + first / total)
    }

    /// Centroid from the distribution means alone: `center + Σ n̄_i Δω_i`.
    pub fn centroid_closed_form(&self) -> f64 {
        self.center
            + self
                .modes
                .iter()
                .map(|m| m.dist.mean() * m.delta_omega)
                .sum::<f64>()
    }

    /// Standard deviation of the line offsets caused by the phonon spread,
    /// `sqrt(Σ Var(n_i) Δω_i²)`.
    pub fn motional_width(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.dist.moments().1 * m.delta_omega * m.delta_omega)
            .sum::<f64>()
            .sqrt()
    }

    /// The `count` heaviest weighted Fock lines, each evaluated on the grid with the same
    /// scaling as [`SpectrumModel::spectrum`] (no baseline).
    pub fn fock_lines(&self, grid: &[f64], count: usize) -> Result<Vec<(Vec<u32>, f64, Vec<f64>)>> {
        self.validate()?;
        let support = self.joint_support()?;
        let kernel = VoigtKernel::new(&self.voigt)?;
        let shifts = self.shifts();
        let mut entries: Vec<(Vec<u32>, f64)> =
            support.iter().map(|(occ, w)| (occ.to_vec(), w)).collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        entries.truncate(count);
        Ok(entries
            .into_iter()
            .map(|(occ, w)| {
                let s: f64 = occ.iter().zip(&shifts).map(|(&n, d)| n as f64 * d).sum();
                let line = grid
                    .iter()
                    .map(|&x| self.amplitude * w * kernel.normalized(x - self.center - s))
                    .collect();
                (occ, w, line)
            })
            .collect())
    }
}

/// Uniform grid of `points` values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (points - 1) as f64;
            (0..points).map(|i| start + step * i as f64).collect()
        }
    }
}

/// Measured (or simulated) depopulation spectrum: detunings (rad/s), fractions, shots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDataset {
    pub detunings: Vec<f64>,
    pub probs: Vec<f64>,
    pub shots: Vec<u32>,
}

impl SpectrumDataset {
    pub fn new(detunings: Vec<f64>, probs: Vec<f64>, shots: Vec<u32>) -> Result<Self> {
        let d = SpectrumDataset {
            detunings,
            probs,
            shots,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.detunings.len() != self.probs.len() || self.detunings.len() != self.shots.len() {
            return invalid("spectrum columns have different lengths");
        }
        if self.detunings.iter().any(|d| !d.is_finite()) {
            return invalid("detunings must be finite");
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
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }
}

/// Draws `Binomial(shots, L'(ω))/shots` at each grid detuning.
pub fn simulate_spectrum<R: rand::Rng + ?Sized>(
    model: &SpectrumModel,
    grid: &[f64],
    shots: u32,
    rng: &mut R,
) -> Result<SpectrumDataset> {
    use rand_distr::{Binomial, Distribution};
    if shots == 0 {
        return invalid("shots must be at least 1");
    }
    let expected = model.spectrum(grid)?;
    let mut probs = Vec::with_capacity(grid.len());
    for p in expected {
        let k = Binomial::new(shots as u64, p.clamp(0.0, 1.0))
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(rng);
        probs.push(k as f64 / shots as f64);
    }
    SpectrumDataset::new(grid.to_vec(), probs, vec![shots; grid.len()])
}

/// The noiseless spectrum on `grid`, recorded with `shots` per point.
pub fn expected_spectrum(model: &SpectrumModel, grid: &[f64], shots: u32) -> Result<SpectrumDataset> {
    let probs = model.spectrum(grid)?.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
    SpectrumDataset::new(grid.to_vec(), probs, vec![shots.max(1); grid.len()])
}
