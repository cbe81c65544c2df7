//! Reconstruction of the dynamical matrix `A` and diffusion matrix `Q` of
//! linear stochastic processes from time-series observations.
//!
//! Two estimators are provided: the classical linear inverse model for
//! white-noise driven processes, and a colored-noise variant that works from
//! the local derivatives of the correlation function when the forcing is an
//! Ornstein-Uhlenbeck noise with known correlation time. An exact analytic
//! oracle and a Monte Carlo benchmark harness round out the toolkit.

pub mod bench;
pub mod clim;
pub mod corr;
pub mod lim;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod sim;

pub use bench::{BenchConfig, BenchRecord};
pub use clim::{ClimOptions, EstimationReport, QMethod};
pub use corr::{CorrSet, CorrSource, Parity};
pub use lim::LimResult;
pub use linalg::{Matrix, SpdMatrix, StableMatrix};
pub use oracle::AugmentedSystem;
pub use sim::{Scheme, SimConfig, SystemParams, TimeSeries};
