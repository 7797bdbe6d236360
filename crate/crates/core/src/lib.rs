//! Lyapunov spectra of the Kuramoto–Sivashinsky equation.
//!
//! KS models on periodic and odd-periodic domains feed a Benettin-style
//! spectrum computation. The `analysis` and `sweep` modules turn many such
//! spectra into dimensions and fits over domain length.

pub mod analysis;
pub mod banded;
pub mod error;
pub mod ks;
pub mod lyapunov;
pub mod ode;
pub mod sweep;
pub mod systems;

pub use analysis::{KaplanYorkeResult, PowerLawFit, WindowedStat};
pub use error::{Error, Result};
pub use ks::{BoundaryCondition, DomainSpec, KsSystem, OddPeriodicFdModel, PeriodicSpectralModel};
pub use lyapunov::{LyapunovConfig, LyapunovResult};
pub use ode::{DynamicalSystem, Integrator, IntegratorConfig, Scheme};
pub use sweep::{RecordFlags, SpectrumRecord, SweepPlan};
