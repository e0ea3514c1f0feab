//! Forward models and inference for Rydberg-ion spectroscopy in a linear Paul trap.
//!
//! The crate covers the chain from trap gradients to measured spectra:
//!
//! * [`trap`]: ground-state and polarizability-modified secular frequencies, and the per-phonon
//!   line shift of each mode.
//! * [`phonon`]: thermal, coherent, Fock and explicit phonon-number distributions.
//! * [`lineshape`]: Voigt profiles and phonon-weighted mixtures of shifted Fock lines.
//! * [`sideband`]: carrier and sideband Rabi flopping beyond the Lamb–Dicke regime.
//! * [`inference`]: sideband fits for n̄ and |α|, the correlated spectrum-pair fit for the
//!   polarizability, and Monte-Carlo uncertainty propagation.
//! * [`kick`], [`config`], [`pipeline`], [`figures`], [`io`]: the synthetic-experiment harness
//!   behind the `rydion` binary.

pub mod config;
pub mod error;
pub mod figures;
pub mod inference;
pub mod io;
pub mod kick;
pub mod lineshape;
pub mod phonon;
pub mod pipeline;
pub mod sideband;
pub mod special;
pub mod trap;
pub mod units;

pub use error::{Error, Result};
