//! Phase-field two-phase segmentation with Ambrosio-Tortorelli type energies,
//! plus the numerical experiments that follow their sharp-interface limits.
//!
//! The modules build on each other bottom-up:
//!
//! - [`grid`]: uniform grids, fields and the discrete calculus
//! - [`potential`]: double-well potentials and the well constant `c_W`
//! - [`energy`]: every functional, phase-field and sharp-interface
//! - [`transport`]: TL^p / CL^p distances by exact optimal transport
//! - [`solver`]: alternating minimization and recovery sequences
//! - [`gammalab`]: epsilon / mu sweeps and limit studies
//! - [`io`]: PGM/PPM ingestion, mask output, report CSV

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod gammalab;
pub mod grid;
pub mod io;
pub mod potential;
pub mod solver;
pub mod transport;

pub use energy::{EnergyBreakdown, EnergyParams, Measures, Mu};
pub use error::{Error, Result};
pub use grid::{Grid, IndicatorField, MultiField, ScalarField};
pub use potential::DoubleWell;
pub use solver::{Mode, SegmentationState, SolverConfig};
pub use transport::{Coupling, DiscreteMeasure, PairedSample};
