//! Numerical kernels for first-return-time distributions of random walks
//! on the integer lattice.
//!
//! The library is organized around one pipeline:
//!
//! * [`lattice`] — step distributions on `Z^d`, aperiodicity, walk
//!   classification;
//! * [`occupation`] — the sequence `u_n = P{S_n = 0}`, computed exactly
//!   (convolution or full-resolution grid averaging) or on an aliased grid
//!   with certified error bounds;
//! * [`renewal`] — conversion between `u` and the (defective) first-return
//!   distribution `p_n`, escape-probability estimation, the alternating
//!   convolution series;
//! * [`asymptotics`] — norming plans, limit-density constants, Aitken
//!   extrapolation and the ratio diagnostics for `p_n / u_n -> (1-p)^2`;
//! * [`oracle`] — independent ground truth: exact-rational taboo dynamic
//!   programming, path enumeration, seeded Monte Carlo;
//! * [`report`] — deterministic CSV/JSON serialization of run artifacts.
//!
//! Heavy inner loops (grid sweeps, Monte Carlo batches, convolution powers)
//! are data-parallel via `rayon` when the default `parallel` feature is
//! enabled; the sequential fallback produces bit-identical results.

pub mod asymptotics;
pub mod error;
pub mod lattice;
pub mod occupation;
pub mod oracle;
pub mod parallel;
pub mod rational;
pub mod renewal;
pub mod report;
pub mod special;

pub use error::{Error, Result};
pub use lattice::{StepLaw, WalkClass};
pub use occupation::{Caps, GridSpec, MethodTag, OccupationSeq};
pub use renewal::ReturnDist;

/// Library version, embedded in every report for replayability.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
