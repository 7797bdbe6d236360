//! Fixtures shared by the benchmarks.

use kslyap_core::ks::sample_initial_condition;
use kslyap_core::{BoundaryCondition, DomainSpec, Integrator, IntegratorConfig, KsSystem};

/// A model at `length` with a state already on its attractor.
pub fn settled(length: f64, bc: BoundaryCondition) -> (KsSystem, Vec<f64>) {
    let spec = DomainSpec::new(length, bc);
    let system = KsSystem::new(spec).expect("valid domain");
    let u0 = sample_initial_condition(spec, 1).expect("valid domain");
    let u = Integrator::new(&system, IntegratorConfig::new(0.05, bc.default_scheme()))
        .and_then(|i| i.integrate(&u0, 0.0, 200.0))
        .expect("transient");
    (system, u)
}
