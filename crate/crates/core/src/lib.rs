//! Support vector data description (SVDD) with Gaussian kernels and automatic
//! bandwidth selection.
//!
//! The bandwidth selector sweeps the kernel width `s`, records the optimal
//! dual objective `V*(s)`, smooths its finite-difference second derivative
//! with a penalized B-spline and returns the first interval where that
//! derivative is statistically indistinguishable from zero.
//!
//! Modules:
//! - [`kernel`]: Gaussian/linear kernels and kernel matrices.
//! - [`solver`]: SMO solver for the dual, thresholds, scoring.
//! - [`smoothing`]: P-spline regression with pointwise confidence bands.
//! - [`tuning`]: objective sweeps and the plateau detector.
//! - [`baselines`]: CV, MD and DFN bandwidth selectors.
//! - [`datagen`]: random polygons, shape generators, labeled grids.
//! - [`eval`]: F1 metrics, grid scoring, polygon and shuttle studies.
//! - [`io`]: CSV datasets, model files and the Statlog shuttle reader.

pub mod baselines;
pub mod data;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod io;
pub mod kernel;
pub mod smoothing;
pub mod solver;
pub mod tuning;

pub use data::DataMatrix;
pub use error::{Result, SvddError};
pub use kernel::{kernel_matrix, kernel_value, KernelKind, KernelMatrix, KernelSpec};
pub use solver::{train, Label, Position, SolverConfig, SvddModel};
