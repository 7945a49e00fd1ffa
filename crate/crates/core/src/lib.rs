//! Self-adjoint gap-tooth patch scheme for heterogeneous lattice diffusion.
//!
//! The microscale model is diffusion on a periodic lattice with periodic,
//! heterogeneous bond diffusivities. The patch scheme computes that model only
//! inside small patches spread across the domain, and couples the patches by
//! interpolating next-to-edge values onto the opposite patch edges. Built this
//! way the assembled operator stays symmetric, so spectra are real and the
//! conservation structure of the microscale model survives.
//!
//! Module map:
//!
//! - [`microscale`]: diffusivity profiles and full-lattice reference operators
//! - [`geometry`]: patch grids in 1D and 2D
//! - [`coupling`]: spectral and Lagrangian interpolation weights
//! - [`ensemble`]: phase-shift ensembles and their member permutations
//! - [`assembly`]: the global patch operator `L = D + C`
//! - [`spectra`]: eigen-decompositions, gap and error reports
//! - [`homogenize`]: Fourier symbol, slow branch, homogenised coefficients
//! - [`timestep`]: exact and RK4 time integration

pub mod assembly;
pub mod coupling;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod homogenize;
pub mod microscale;
pub mod spectra;
pub mod timestep;

pub use assembly::{AssembledOperator, Layout, SymmetryReport};
pub use coupling::{CouplingSpec, InterpolationWeights};
pub use error::{PatchError, Result};
pub use geometry::{Diagnostic, PatchGrid1D, PatchGrid2D, Severity};
pub use microscale::{DiffusivityProfile1D, DiffusivityProfile2D};
pub use spectra::{ComplexSpectrum, ErrorTable, SpectrumReport};
