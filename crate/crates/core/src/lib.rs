//! Entanglement evolution of OAM-entangled photon qubits in weak Kolmogorov
//! turbulence.
//!
//! The crate is organised bottom-up:
//!
//! - [`lgmode`]: Laguerre-Gaussian radial profiles and the phase correlation
//!   length ξ(l).
//! - [`turbulence`]: Fried parameter, phase structure function and phase
//!   spectrum.
//! - [`quadrature`]: Gauss-Legendre radial integration and DFT-based angular
//!   Fourier coefficients.
//! - [`channel`]: survival and crosstalk amplitudes of the ensemble-averaged
//!   single-photon map.
//! - [`entangle`]: two-qubit state assembly, post-selection and concurrence.
//! - [`screen_mc`]: Monte-Carlo phase screens, an independent estimate of the
//!   channel amplitudes.
//! - [`experiments`]: concurrence sweeps, collapse analysis, stretched
//!   exponential fits and the distance scaling law.
//! - [`cli`]: the `oamturb` command-line front end.

pub mod channel;
pub mod cli;
pub mod entangle;
pub mod error;
pub mod experiments;
pub mod lgmode;
pub mod quadrature;
pub mod screen_mc;
pub mod turbulence;

pub use error::{Error, Result};
