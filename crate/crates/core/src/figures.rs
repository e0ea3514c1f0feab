//! Tidy plot tables (one row per point, units in the headers).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lineshape::{SpectrumDataset, SpectrumModel};
use crate::trap::{Polarizability, TrapParameters};
use crate::units::rad_s_to_mhz;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureKind {
    LineshapeFockDecomposition,
    SpectrumPair,
    ShiftVsAlpha,
    ShiftVsNbar,
    PolVsAlpha,
}

impl FigureKind {
    pub const ALL: [FigureKind; 5] = [
        FigureKind::LineshapeFockDecomposition,
        FigureKind::SpectrumPair,
        FigureKind::ShiftVsAlpha,
        FigureKind::ShiftVsNbar,
        FigureKind::PolVsAlpha,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FigureKind::LineshapeFockDecomposition => "lineshape-fock-decomposition",
            FigureKind::SpectrumPair => "spectrum-pair",
            FigureKind::ShiftVsAlpha => "shift-vs-alpha",
            FigureKind::ShiftVsNbar => "shift-vs-nbar",
            FigureKind::PolVsAlpha => "pol-vs-alpha",
        }
    }
}

impl fmt::Display for FigureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown figure kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

fn s(v: f64) -> String {
    v.to_string()
}

/// The `count` heaviest Fock lines of a spectrum and their sum, per detuning.
pub fn lineshape_fock_decomposition(model: &SpectrumModel, grid: &[f64], count: usize) -> Result<Table> {
    let mut t = Table::new(&["detuning_MHz", "component", "n_x", "n_y", "n_z", "weight", "probability"]);
    if grid.is_empty() {
        return Ok(t);
    }
    let lines = model.fock_lines(grid, count)?;
    let total = model.spectrum(grid)?;
    let occ = |ns: &[u32], i: usize| ns.get(i).map(|n| n.to_string()).unwrap_or_default();
    for (k, (ns, weight, values)) in lines.iter().enumerate() {
        for (&w, &p) in grid.iter().zip(values) {
            t.push(vec![
                s(rad_s_to_mhz(w)),
                format!("fock{k}"),
                occ(ns, 0),
                occ(ns, 1),
                occ(ns, 2),
                s(*weight),
                s(p),
            ]);
        }
    }
    for (&w, &p) in grid.iter().zip(&total) {
        t.push(vec![s(rad_s_to_mhz(w)), "total".into(), String::new(), String::new(), String::new(), s(1.0), s(p)]);
    }
    Ok(t)
}

/// Measured points and fitted curves of a reference/excited pair.
pub fn spectrum_pair(
    reference: &SpectrumDataset,
    excited: &SpectrumDataset,
    reference_model: &[f64],
    excited_model: &[f64],
) -> Result<Table> {
    if reference_model.len() != reference.len() || excited_model.len() != excited.len() {
        return Err(Error::InvalidParameter("model curves must match the data grids".into()));
    }
    let mut t = Table::new(&["detuning_MHz", "spectrum", "probability", "shots", "model"]);
    for (label, d, m) in [("reference", reference, reference_model), ("excited", excited, excited_model)] {
        for i in 0..d.len() {
            t.push(vec![
                s(rad_s_to_mhz(d.detunings[i])),
                label.into(),
                s(d.probs[i]),
                d.shots[i].to_string(),
                s(m[i]),
            ]);
        }
    }
    Ok(t)
}

/// A line shift (or 𝒫) against |α| with 1σ errors on both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub alpha_err: f64,
    pub value: f64,
    pub err: f64,
}

pub fn shift_vs_alpha(points: &[AlphaPoint]) -> Table {
    let mut t = Table::new(&["alpha", "alpha_err", "shift_MHz", "err_MHz"]);
    for p in points {
        t.push(vec![s(p.alpha), s(p.alpha_err), s(p.value), s(p.err)]);
    }
    t
}

/// Per-point 𝒫 with the weighted mean and its standard error repeated on every row.
pub fn pol_vs_alpha(points: &[AlphaPoint], mean: Option<(f64, f64)>) -> Table {
    let mut t = Table::new(&["alpha", "alpha_err", "pol_e30", "err_e30", "mean_e30", "mean_err_e30"]);
    let (m, me) = mean.map_or((String::new(), String::new()), |(m, e)| (s(m), s(e)));
    for p in points {
        t.push(vec![s(p.alpha), s(p.alpha_err), s(p.value), s(p.err), m.clone(), me.clone()]);
    }
    t
}

/// Model line shift `n̄ · Δν_i` of a thermal x or y mode at 𝒫 ± σ.
pub fn shift_vs_nbar(trap: &TrapParameters, pol_e30: f64, pol_err_e30: f64, nbars: &[f64]) -> Result<Table> {
    let mut t = Table::new(&["mode", "nbar", "shift_MHz", "err_MHz"]);
    let d = trap.line_shift_per_phonon(Polarizability::from_e30(pol_e30))?;
    let d_hi = trap.line_shift_per_phonon(Polarizability::from_e30(pol_e30 + pol_err_e30))?;
    for (mode, per, per_hi) in [("x", d.x, d_hi.x), ("y", d.y, d_hi.y)] {
        for &n in nbars {
            t.push(vec![
                mode.into(),
                s(n),
                s(rad_s_to_mhz(n * per)),
                s(rad_s_to_mhz(n * (per_hi - per)).abs()),
            ]);
        }
    }
    Ok(t)
}
