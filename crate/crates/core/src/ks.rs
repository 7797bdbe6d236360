//! Kuramoto–Sivashinsky models, `u_t + u_xxxx + u_xx + u·u_x = 0` on
//! `0 ≤ x ≤ L`.
//!
//! * Periodic domains use a Fourier pseudospectral discretisation with the
//!   quadratic term dealiased by the 2/3 rule. The mean mode is evolved.
//! * Odd-periodic domains (`u = u_xx = 0` at both ends) use second-order
//!   central differences with odd-reflection ghost points.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;
use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::ode::{DynamicalSystem, Scheme};

/// Resolved wavenumber targeted by default.
pub const DEFAULT_K_MAX: f64 = 9.0;

/// Fewest Fourier modes a periodic model may retain.
pub const MIN_PERIODIC_MODES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCondition {
    Periodic,
    OddPeriodic,
}

impl BoundaryCondition {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryCondition::Periodic => "periodic",
            BoundaryCondition::OddPeriodic => "odd",
        }
    }

    /// Scheme used for this boundary condition unless overridden.
    pub fn default_scheme(self) -> Scheme {
        match self {
            BoundaryCondition::Periodic => Scheme::Etdrk4,
            BoundaryCondition::OddPeriodic => Scheme::ImexCnab2,
        }
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "periodic" => Ok(BoundaryCondition::Periodic),
            "odd" | "odd-periodic" | "oddperiodic" | "odd_periodic" => {
                Ok(BoundaryCondition::OddPeriodic)
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown boundary condition `{other}` (expected periodic or odd)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub length: f64,
    pub bc: BoundaryCondition,
    pub k_max_target: f64,
}

impl DomainSpec {
    pub fn new(length: f64, bc: BoundaryCondition) -> Self {
        Self {
            length,
            bc,
            k_max_target: DEFAULT_K_MAX,
        }
    }

    pub fn with_k_max(mut self, k_max: f64) -> Self {
        self.k_max_target = k_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "domain length must be positive, got {}",
                self.length
            )));
        }
        let lowest = match self.bc {
            BoundaryCondition::Periodic => 2.0 * PI / self.length,
            BoundaryCondition::OddPeriodic => PI / self.length,
        };
        if !(self.k_max_target >= lowest) {
            return Err(Error::ResolutionTooCoarse(format!(
                "k_max {} below the lowest wavenumber {lowest} of a domain of length {}",
                self.k_max_target, self.length
            )));
        }
        Ok(())
    }
}

fn is_five_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5] {
        while n.is_multiple_of(p) {
            n /= p;
        }
    }
    n == 1
}

/// Smallest even transform length `≥ min` with no prime factor above 5.
fn fft_len_at_least(min: usize) -> usize {
    (min.max(2)..)
        .find(|&n| n % 2 == 0 && is_five_smooth(n))
        .expect("unbounded search")
}

/// Fourier–Galerkin model on a periodic domain.
///
/// State layout (length `2·n_modes + 1`): `[c0, Re c1..Re cn, Im c1..Im cn]`
/// where `u(x) = c0 + 2·Σ Re(c_j·exp(i·k_j·x))`, `k_j = 2πj/L`.
#[derive(Clone)]
pub struct PeriodicSpectralModel {
    spec: DomainSpec,
    n_modes: usize,
    grid: usize,
    wavenumbers: Vec<f64>,
    linear: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl fmt::Debug for PeriodicSpectralModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicSpectralModel")
            .field("spec", &self.spec)
            .field("n_modes", &self.n_modes)
            .field("grid", &self.grid)
            .finish()
    }
}

impl PeriodicSpectralModel {
    /// Picks the fewest modes reaching `k_max_target`, then fills the 2/3 of
    /// the nearest efficient transform length.
    pub fn new(spec: DomainSpec) -> Result<Self> {
        spec.validate()?;
        if spec.bc != BoundaryCondition::Periodic {
            return Err(Error::InvalidConfig("periodic model needs bc = periodic".into()));
        }
        let needed = (spec.k_max_target * spec.length / (2.0 * PI) - 1e-9).ceil().max(1.0) as usize;
        let grid = fft_len_at_least(3 * needed + 1);
        Self::with_grid(spec, (grid - 1) / 3, grid)
    }

    /// Model with an explicit mode count, on the smallest efficient grid that
    /// dealiases it exactly.
    pub fn with_modes(spec: DomainSpec, n_modes: usize) -> Result<Self> {
        spec.validate()?;
        Self::with_grid(spec, n_modes, fft_len_at_least(3 * n_modes + 1))
    }

    fn with_grid(spec: DomainSpec, n_modes: usize, grid: usize) -> Result<Self> {
        if n_modes < MIN_PERIODIC_MODES {
            return Err(Error::ResolutionTooCoarse(format!(
                "{n_modes} Fourier modes retained, at least {MIN_PERIODIC_MODES} required"
            )));
        }
        let top = 2.0 * PI * n_modes as f64 / spec.length;
        if top < spec.k_max_target * (1.0 - 1e-12) {
            return Err(Error::ResolutionTooCoarse(format!(
                "highest wavenumber {top} below target {}",
                spec.k_max_target
            )));
        }
        let wavenumbers: Vec<f64> = (0..=n_modes)
            .map(|j| 2.0 * PI * j as f64 / spec.length)
            .collect();
        let mut linear = vec![0.0; 2 * n_modes + 1];
        for j in 1..=n_modes {
            let k2 = wavenumbers[j] * wavenumbers[j];
            linear[j] = k2 - k2 * k2;
            linear[n_modes + j] = k2 - k2 * k2;
        }
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            spec,
            n_modes,
            grid,
            wavenumbers,
            linear,
            forward: planner.plan_fft_forward(grid),
            inverse: planner.plan_fft_inverse(grid),
        })
    }

    pub fn spec(&self) -> DomainSpec {
        self.spec
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Collocation grid length used for the quadratic term.
    pub fn grid_len(&self) -> usize {
        self.grid
    }

    /// Highest retained mode index; everything above is truncated (2/3 rule).
    pub fn dealias_cut(&self) -> usize {
        self.n_modes
    }

    pub fn wavenumber(&self, j: usize) -> f64 {
        self.wavenumbers[j]
    }

    pub fn state_dim(&self) -> usize {
        2 * self.n_modes + 1
    }

    /// Spatial mean of the represented field.
    pub fn field_mean(&self, state: &[f64]) -> f64 {
        state[0]
    }

    /// Grid points `x_l = l·L/M`, `l = 0..M`.
    pub fn grid_points(&self) -> Vec<f64> {
        (0..self.grid)
            .map(|l| l as f64 * self.spec.length / self.grid as f64)
            .collect()
    }

    /// Field values on [`grid_points`](Self::grid_points).
    pub fn to_physical(&self, state: &[f64]) -> Vec<f64> {
        let mut spectrum = self.load_spectrum(state);
        let mut out = vec![0.0; self.grid];
        self.inverse
            .process(&mut spectrum, &mut out)
            .expect("transform lengths are fixed at construction");
        out
    }

    /// Projects grid values onto the retained modes.
    pub fn from_physical(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.grid {
            return Err(Error::DimensionMismatch {
                expected: self.grid,
                got: values.len(),
            });
        }
        let mut input = values.to_vec();
        let mut spectrum = self.forward.make_output_vec();
        self.forward
            .process(&mut input, &mut spectrum)
            .expect("transform lengths are fixed at construction");
        let n = self.n_modes;
        let scale = 1.0 / self.grid as f64;
        let mut state = vec![0.0; self.state_dim()];
        state[0] = spectrum[0].re * scale;
        for j in 1..=n {
            state[j] = spectrum[j].re * scale;
            state[n + j] = spectrum[j].im * scale;
        }
        Ok(state)
    }

    fn load_spectrum(&self, state: &[f64]) -> Vec<Complex64> {
        let n = self.n_modes;
        let mut spectrum = vec![Complex64::new(0.0, 0.0); self.grid / 2 + 1];
        spectrum[0] = Complex64::new(state[0], 0.0);
        for j in 1..=n {
            spectrum[j] = Complex64::new(state[j], state[n + j]);
        }
        spectrum
    }

    /// Nonlinear term `-(u²/2)_x` in the state parametrisation.
    fn advection(&self, state: &[f64], out: &mut [f64]) {
        let n = self.n_modes;
        let mut spectrum = self.load_spectrum(state);
        let mut field = vec![0.0; self.grid];
        let mut scratch = vec![
            Complex64::new(0.0, 0.0);
            self.inverse
                .get_scratch_len()
                .max(self.forward.get_scratch_len())
        ];
        self.inverse
            .process_with_scratch(&mut spectrum, &mut field, &mut scratch)
            .expect("transform lengths are fixed at construction");
        for v in &mut field {
            *v *= *v;
        }
        self.forward
            .process_with_scratch(&mut field, &mut spectrum, &mut scratch)
            .expect("transform lengths are fixed at construction");
        let scale = 0.5 / self.grid as f64;
        out[0] = 0.0;
        for j in 1..=n {
            let half_k = self.wavenumbers[j] * scale;
            // -(i k / 2)·FT(u²)
            out[j] = half_k * spectrum[j].im;
            out[n + j] = -half_k * spectrum[j].re;
        }
    }
}

impl DynamicalSystem for PeriodicSpectralModel {
    fn dim(&self) -> usize {
        self.state_dim()
    }

    fn rhs(&self, _t: f64, u: &[f64], du: &mut [f64]) {
        self.advection(u, du);
        for ((d, l), x) in du.iter_mut().zip(&self.linear).zip(u) {
            *d += l * x;
        }
    }

    fn stiff_linear_part(&self) -> Option<&[f64]> {
        Some(&self.linear)
    }

    fn nonlinear(&self, _t: f64, u: &[f64], out: &mut [f64]) {
        self.advection(u, out);
    }

    fn label(&self) -> String {
        format!(
            "ks-periodic(L={}, modes={}, grid={})",
            self.spec.length, self.n_modes, self.grid
        )
    }
}

/// Finite-difference model on an odd-periodic domain.
///
/// State: values at the interior points `x_i = i·h`, `i = 1..=n`, with
/// `h = L/(n+1)`. Ghost values `u_0 = u_{n+1} = 0`, `u_{-1} = -u_1`,
/// `u_{n+2} = -u_n` impose `u = u_xx = 0` at both ends.
#[derive(Clone, Debug)]
pub struct OddPeriodicFdModel {
    spec: DomainSpec,
    n_interior: usize,
    h: f64,
    operator: BandedMatrix,
    diagonal: Vec<f64>,
}

impl OddPeriodicFdModel {
    /// Fewest interior points with `π/h ≥ k_max_target`.
    pub fn new(spec: DomainSpec) -> Result<Self> {
        spec.validate()?;
        let intervals = (spec.length * spec.k_max_target / PI - 1e-9).ceil().max(2.0) as usize;
        Self::with_points(spec, intervals - 1)
    }

    pub fn with_points(spec: DomainSpec, n_interior: usize) -> Result<Self> {
        spec.validate()?;
        if spec.bc != BoundaryCondition::OddPeriodic {
            return Err(Error::InvalidConfig(
                "odd-periodic model needs bc = odd".into(),
            ));
        }
        if n_interior == 0 {
            return Err(Error::ResolutionTooCoarse("no interior grid points".into()));
        }
        let h = spec.length / (n_interior + 1) as f64;
        if h > PI / spec.k_max_target * (1.0 + 1e-12) {
            return Err(Error::ResolutionTooCoarse(format!(
                "grid spacing {h} exceeds π/k_max = {}",
                PI / spec.k_max_target
            )));
        }
        let operator = linear_operator(n_interior, h);
        let diagonal = operator.diagonal();
        Ok(Self {
            spec,
            n_interior,
            h,
            operator,
            diagonal,
        })
    }

    pub fn spec(&self) -> DomainSpec {
        self.spec
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Grid points including both boundaries.
    pub fn grid_points(&self) -> Vec<f64> {
        (0..=self.n_interior + 1).map(|i| i as f64 * self.h).collect()
    }

    /// Full field including the zero boundary values.
    pub fn to_physical(&self, state: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_interior + 2);
        out.push(0.0);
        out.extend_from_slice(state);
        out.push(0.0);
        out
    }

    fn advection(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n_interior;
        let c = -0.25 / self.h;
        for i in 0..n {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < n { u[i + 1] } else { 0.0 };
            out[i] = c * (right * right - left * left);
        }
    }
}

/// `-(D2² + D2)`, with `D2` the Dirichlet second difference. The odd ghost
/// reflection makes the fourth difference exactly `D2²`.
fn linear_operator(n: usize, h: f64) -> BandedMatrix {
    let mut d2 = BandedMatrix::zeros(n, 1, 1);
    let inv_h2 = 1.0 / (h * h);
    for i in 0..n {
        d2.set(i, i, -2.0 * inv_h2);
        if i + 1 < n {
            d2.set(i, i + 1, inv_h2);
            d2.set(i + 1, i, inv_h2);
        }
    }
    let mut op = BandedMatrix::zeros(n, 2, 2);
    for i in 0..n {
        for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
            let mut d4 = 0.0;
            for k in i.saturating_sub(1)..=(i + 1).min(n - 1) {
                d4 += d2.get(i, k) * d2.get(k, j);
            }
            op.set(i, j, -(d4 + d2.get(i, j)));
        }
    }
    op
}

impl DynamicalSystem for OddPeriodicFdModel {
    fn dim(&self) -> usize {
        self.n_interior
    }

    fn rhs(&self, _t: f64, u: &[f64], du: &mut [f64]) {
        self.operator.mul_vec(u, du);
        let mut adv = vec![0.0; u.len()];
        self.advection(u, &mut adv);
        for (d, a) in du.iter_mut().zip(&adv) {
            *d += a;
        }
    }

    fn stiff_linear_part(&self) -> Option<&[f64]> {
        Some(&self.diagonal)
    }

    fn linear_operator(&self) -> Option<&BandedMatrix> {
        Some(&self.operator)
    }

    fn nonlinear(&self, _t: f64, u: &[f64], out: &mut [f64]) {
        self.advection(u, out);
    }

    fn label(&self) -> String {
        format!(
            "ks-odd(L={}, interior={}, h={:.6})",
            self.spec.length, self.n_interior, self.h
        )
    }
}

/// A KS model for either boundary condition.
#[derive(Clone, Debug)]
pub enum KsSystem {
    Periodic(PeriodicSpectralModel),
    OddPeriodic(OddPeriodicFdModel),
}

impl KsSystem {
    pub fn new(spec: DomainSpec) -> Result<Self> {
        match spec.bc {
            BoundaryCondition::Periodic => make_periodic_ks(spec).map(KsSystem::Periodic),
            BoundaryCondition::OddPeriodic => make_oddperiodic_ks(spec).map(KsSystem::OddPeriodic),
        }
    }

    pub fn spec(&self) -> DomainSpec {
        match self {
            KsSystem::Periodic(m) => m.spec(),
            KsSystem::OddPeriodic(m) => m.spec(),
        }
    }

    pub fn grid_points(&self) -> Vec<f64> {
        match self {
            KsSystem::Periodic(m) => m.grid_points(),
            KsSystem::OddPeriodic(m) => m.grid_points(),
        }
    }

    pub fn to_physical(&self, state: &[f64]) -> Vec<f64> {
        match self {
            KsSystem::Periodic(m) => m.to_physical(state),
            KsSystem::OddPeriodic(m) => m.to_physical(state),
        }
    }

    fn inner(&self) -> &dyn DynamicalSystem {
        match self {
            KsSystem::Periodic(m) => m,
            KsSystem::OddPeriodic(m) => m,
        }
    }
}

impl DynamicalSystem for KsSystem {
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn rhs(&self, t: f64, u: &[f64], du: &mut [f64]) {
        self.inner().rhs(t, u, du)
    }
    fn stiff_linear_part(&self) -> Option<&[f64]> {
        self.inner().stiff_linear_part()
    }
    fn linear_operator(&self) -> Option<&BandedMatrix> {
        self.inner().linear_operator()
    }
    fn nonlinear(&self, t: f64, u: &[f64], out: &mut [f64]) {
        self.inner().nonlinear(t, u, out)
    }
    fn label(&self) -> String {
        self.inner().label()
    }
}

pub fn make_periodic_ks(spec: DomainSpec) -> Result<PeriodicSpectralModel> {
    if spec.bc != BoundaryCondition::Periodic {
        return Err(Error::InvalidConfig("make_periodic_ks needs bc = periodic".into()));
    }
    PeriodicSpectralModel::new(spec)
}

pub fn make_oddperiodic_ks(spec: DomainSpec) -> Result<OddPeriodicFdModel> {
    if spec.bc != BoundaryCondition::OddPeriodic {
        return Err(Error::InvalidConfig("make_oddperiodic_ks needs bc = odd".into()));
    }
    OddPeriodicFdModel::new(spec)
}

/// `n` i.i.d. standard normal draws from PCG64 (XSL-RR 128/64) seeded with
/// `seed`.
pub fn standard_normal_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Pcg64::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Random initial state for the model `spec` describes.
pub fn sample_initial_condition(spec: DomainSpec, seed: u64) -> Result<Vec<f64>> {
    let dim = KsSystem::new(spec)?.dim();
    Ok(standard_normal_vector(dim, seed))
}

pub fn field_mean(state: &[f64], model: &PeriodicSpectralModel) -> f64 {
    model.field_mean(state)
}
