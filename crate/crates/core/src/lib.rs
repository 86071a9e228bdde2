//! Simulation and analysis toolkit for nonclassical twin-beam interference.
//!
//! - [`fock`]: exact beam-splitter scattering on truncated number bases.
//! - [`quadrature`]: linearized bright-beam fluctuations and the
//!   number-difference noise they imply behind a waveplate-polarizer.
//! - [`spectra`]: closed-form twin-beam noise spectra of an above-threshold OPO.
//! - [`fit`]: spectrum-analyzer traces, noise-floor correction and fitting.
//! - [`config`]: the flat, module-namespaced key-value configuration format.

pub mod fock;
pub mod quadrature;
pub mod spectra;
pub mod fit;
pub mod config;
