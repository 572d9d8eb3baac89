//! Simulation and inversion toolkit for variable-pulse-duration Ramsey (VPDR)
//! measurements on nitrogen-vacancy ensembles in diamond.
//!
//! The crate is organised bottom-up:
//!
//! * [`frames`]: crystal geometry, NV axes and field projections.
//! * [`analytic`]: closed-form single-NV response (hard-pulse and finite
//!   Rabi-to-Larmor ratio Fourier expansion).
//! * [`lindblad`]: numerical ensemble simulator (eigenbasis RWA, Markovian
//!   dephasing, recursive propagators).
//! * [`spectral`]: windows and the windowed cosine / exponential inner products.
//! * [`inversion`]: Rabi self-calibration, hyperfine-constrained Ramsey fits,
//!   accuracy and robustness sweeps.
//! * [`mw_optimizer`]: microwave direction search for well separated Rabi labels.
//! * [`sensitivity`]: analytic and Monte-Carlo sensitivity ratios, dead zones.
//! * [`field_recon`]: peak-based projections and linear-in-voltage field fits.
//! * [`io`]: file formats shared with the command-line front end.

pub mod analytic;
pub mod error;
pub mod field_recon;
pub mod frames;
pub mod inversion;
pub mod io;
pub mod lindblad;
pub mod linalg;
pub mod lsq;
pub mod mw_optimizer;
pub mod sensitivity;
pub mod spectral;
pub mod units;

pub use error::{Error, Result};
pub use frames::{NvOrientation, Vector3};
pub use lindblad::{SignalGrid, VpdrConfig};
pub use spectral::{Kernel, SpectralMap, WindowKind};
