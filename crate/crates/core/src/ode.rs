//! Autonomous dynamical systems and fixed-step time integration.
//!
//! A system exposes its right-hand side and, optionally, a stiff linear part
//! so that `du/dt = A·u + N(u)`. Exponential and IMEX schemes treat `A`
//! exactly (ETDRK4, diagonal `A`) or implicitly (CNAB2, banded `A`); RK4
//! ignores the split.

use std::fmt;
use std::str::FromStr;

use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::banded::{BandedLu, BandedMatrix};
use crate::error::{Error, Result};

/// Right-hand side of an autonomous ODE `du/dt = f(t, u)`.
pub trait DynamicalSystem: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `f(t, u)` into `du`. Both slices have length [`dim`](Self::dim).
    fn rhs(&self, t: f64, u: &[f64], du: &mut [f64]);

    /// Diagonal of the stiff linear part `A`, if the system provides a split.
    fn stiff_linear_part(&self) -> Option<&[f64]> {
        None
    }

    /// The full linear part when it is banded rather than diagonal. Its
    /// diagonal must agree with [`stiff_linear_part`](Self::stiff_linear_part).
    fn linear_operator(&self) -> Option<&BandedMatrix> {
        None
    }

    /// `N(u) = f(t, u) - A·u`. Systems with a cheaper direct evaluation
    /// should override this.
    fn nonlinear(&self, t: f64, u: &[f64], out: &mut [f64]) {
        self.rhs(t, u, out);
        if let Some(op) = self.linear_operator() {
            let mut au = vec![0.0; u.len()];
            op.mul_vec(u, &mut au);
            for (o, a) in out.iter_mut().zip(&au) {
                *o -= a;
            }
        } else if let Some(diag) = self.stiff_linear_part() {
            for ((o, d), x) in out.iter_mut().zip(diag).zip(u) {
                *o -= d * x;
            }
        }
    }

    fn label(&self) -> String;
}

impl<S: DynamicalSystem + ?Sized> DynamicalSystem for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn rhs(&self, t: f64, u: &[f64], du: &mut [f64]) {
        (**self).rhs(t, u, du)
    }
    fn stiff_linear_part(&self) -> Option<&[f64]> {
        (**self).stiff_linear_part()
    }
    fn linear_operator(&self) -> Option<&BandedMatrix> {
        (**self).linear_operator()
    }
    fn nonlinear(&self, t: f64, u: &[f64], out: &mut [f64]) {
        (**self).nonlinear(t, u, out)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Fourth-order exponential time differencing (Cox–Matthews).
    Etdrk4,
    /// Crank–Nicolson on the linear part, second-order Adams–Bashforth on
    /// the rest.
    ImexCnab2,
    /// Classic fourth-order Runge–Kutta.
    Rk4,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Etdrk4 => "etdrk4",
            Scheme::ImexCnab2 => "imex-cnab2",
            Scheme::Rk4 => "rk4",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "etdrk4" => Ok(Scheme::Etdrk4),
            "imex-cnab2" | "imex_cnab2" | "cnab2" => Ok(Scheme::ImexCnab2),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(Error::InvalidConfig(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
}

impl IntegratorConfig {
    pub fn new(dt: f64, scheme: Scheme) -> Self {
        Self { dt, scheme }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Number of points on the contour used to evaluate the ETDRK4 φ-functions.
const CONTOUR_POINTS: usize = 32;

/// ETDRK4 coefficients for one step size.
#[derive(Clone, Debug)]
struct EtdCoefficients {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl EtdCoefficients {
    fn new(diag: &[f64], h: f64) -> Self {
        let n = diag.len();
        let mut c = Self {
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
            .map(|j| {
                let theta =
                    2.0 * std::f64::consts::PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64;
                Complex64::new(theta.cos(), theta.sin())
            })
            .collect();
        for &lambda in diag {
            let lh = lambda * h;
            c.e.push(lh.exp());
            c.e2.push((lh / 2.0).exp());
            let (mut q, mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0, 0.0);
            for r in &roots {
                let z = r + lh;
                let ez = z.exp();
                let z2 = z * z;
                let z3 = z2 * z;
                q += (((z / 2.0).exp() - 1.0) / z).re;
                f1 += ((-4.0 - z + ez * (4.0 - 3.0 * z + z2)) / z3).re;
                f2 += ((2.0 + z + ez * (z - 2.0)) / z3).re;
                f3 += ((-4.0 - 3.0 * z - z2 + ez * (4.0 - z)) / z3).re;
            }
            let scale = h / CONTOUR_POINTS as f64;
            c.q.push(q * scale);
            c.f1.push(f1 * scale);
            c.f2.push(f2 * scale);
            c.f3.push(f3 * scale);
        }
        c
    }
}

/// Crank–Nicolson operators for one step size.
#[derive(Clone, Debug)]
struct CnOperators {
    h: f64,
    // I - h/2·A, factored
    implicit: BandedLu,
    // I + h/2·A
    explicit: BandedMatrix,
}

impl CnOperators {
    fn new(a: &BandedMatrix, h: f64) -> Result<Self> {
        let implicit = BandedLu::factor(&a.shifted_identity(-0.5 * h)).ok_or_else(|| {
            Error::InvalidConfig(format!("I - dt/2·A is singular for dt = {h}"))
        })?;
        Ok(Self {
            h,
            implicit,
            explicit: a.shifted_identity(0.5 * h),
        })
    }
}

#[derive(Clone, Debug)]
enum Stepper {
    Rk4,
    Etdrk4 { diag: Vec<f64>, coeffs: EtdCoefficients },
    Cnab2 { op: BandedMatrix, cn: CnOperators },
}

/// A fixed-step integrator bound to one system and step size. Coefficients
/// are computed once, so one integrator should be reused across many
/// integrations of the same system.
#[derive(Clone, Debug)]
pub struct Integrator<S> {
    system: S,
    cfg: IntegratorConfig,
    stepper: Stepper,
    blowup_limit: f64,
}

/// Step count for a span, snapping to the nearest integer when the ratio is
/// integral up to rounding noise. Returns `(full_steps, remainder)`.
fn step_plan(span: f64, dt: f64) -> (usize, f64) {
    let ratio = span / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        (nearest as usize, 0.0)
    } else {
        let full = ratio.floor();
        (full as usize, span - full * dt)
    }
}

impl<S: DynamicalSystem> Integrator<S> {
    pub fn new(system: S, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let stepper = match cfg.scheme {
            Scheme::Rk4 => Stepper::Rk4,
            Scheme::Etdrk4 => {
                let diag = system
                    .stiff_linear_part()
                    .ok_or(Error::MissingLinearPart { scheme: "etdrk4" })?
                    .to_vec();
                if system.linear_operator().is_some() {
                    return Err(Error::InvalidConfig(
                        "etdrk4 needs a diagonal linear part; this system's is banded".into(),
                    ));
                }
                let coeffs = EtdCoefficients::new(&diag, cfg.dt);
                Stepper::Etdrk4 { diag, coeffs }
            }
            Scheme::ImexCnab2 => {
                let op = match (system.linear_operator(), system.stiff_linear_part()) {
                    (Some(op), _) => op.clone(),
                    (None, Some(diag)) => BandedMatrix::from_diagonal(diag),
                    (None, None) => {
                        return Err(Error::MissingLinearPart {
                            scheme: "imex-cnab2",
                        })
                    }
                };
                let cn = CnOperators::new(&op, cfg.dt)?;
                Stepper::Cnab2 { op, cn }
            }
        };
        Ok(Self {
            system,
            cfg,
            stepper,
            blowup_limit: f64::INFINITY,
        })
    }

    /// Aborts with [`Error::IntegrationBlowUp`] once any component exceeds
    /// `limit` in magnitude. Non-finite values always abort.
    pub fn with_blowup_limit(mut self, limit: f64) -> Self {
        self.blowup_limit = limit;
        self
    }

    pub fn system(&self) -> &S {
        &self.system
    }

    pub fn config(&self) -> IntegratorConfig {
        self.cfg
    }

    /// Integrates from `t0` to `t1`, taking a shorter final step when the
    /// span is not a whole number of steps.
    pub fn integrate(&self, u0: &[f64], t0: f64, t1: f64) -> Result<Vec<f64>> {
        self.integrate_observed(u0, t0, t1, |_, _, _| {})
    }

    /// Like [`integrate`](Self::integrate), calling `observe(step, t, u)`
    /// on the initial state (step 0) and after every full step.
    pub fn integrate_observed<F>(&self, u0: &[f64], t0: f64, t1: f64, mut observe: F) -> Result<Vec<f64>>
    where
        F: FnMut(usize, f64, &[f64]),
    {
        let n = self.system.dim();
        if u0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u0.len(),
            });
        }
        if !(t1 >= t0) {
            return Err(Error::InvalidConfig(format!(
                "integration must run forwards (t0 = {t0}, t1 = {t1})"
            )));
        }
        let (steps, remainder) = step_plan(t1 - t0, self.cfg.dt);
        let mut u = u0.to_vec();
        observe(0, t0, &u);
        self.advance(&mut u, t0, steps, &mut observe)?;
        if remainder > 0.0 {
            let t = t0 + steps as f64 * self.cfg.dt;
            self.partial_step(&mut u, t, remainder)?;
            self.check(&u, t1)?;
        }
        Ok(u)
    }

    fn check(&self, u: &[f64], t: f64) -> Result<()> {
        let limit = self.blowup_limit;
        if u.iter().all(|x| x.abs() <= limit) {
            Ok(())
        } else {
            // NaN fails the comparison above as well
            Err(Error::IntegrationBlowUp { time: t })
        }
    }

    fn advance(
        &self,
        u: &mut [f64],
        t0: f64,
        steps: usize,
        observe: &mut dyn FnMut(usize, f64, &[f64]),
    ) -> Result<()> {
        let n = u.len();
        let dt = self.cfg.dt;
        match &self.stepper {
            Stepper::Rk4 => {
                let mut work = Rk4Work::new(n);
                for k in 0..steps {
                    let t = t0 + k as f64 * dt;
                    rk4_step(&self.system, u, t, dt, &mut work);
                    let t_next = t0 + (k + 1) as f64 * dt;
                    self.check(u, t_next)?;
                    observe(k + 1, t_next, u);
                }
            }
            Stepper::Etdrk4 { coeffs, .. } => {
                let mut work = EtdWork::new(n);
                for k in 0..steps {
                    let t = t0 + k as f64 * dt;
                    etdrk4_step(&self.system, coeffs, u, t, dt, &mut work);
                    let t_next = t0 + (k + 1) as f64 * dt;
                    self.check(u, t_next)?;
                    observe(k + 1, t_next, u);
                }
            }
            Stepper::Cnab2 { op, cn } => {
                let mut work = CnabWork::new(n);
                for k in 0..steps {
                    let t = t0 + k as f64 * dt;
                    if k == 0 {
                        cn_heun_step(&self.system, op, cn, u, t, &mut work);
                    } else {
                        cnab2_step(&self.system, cn, u, t, &mut work);
                    }
                    let t_next = t0 + (k + 1) as f64 * dt;
                    self.check(u, t_next)?;
                    observe(k + 1, t_next, u);
                }
            }
        }
        Ok(())
    }

    fn partial_step(&self, u: &mut [f64], t: f64, h: f64) -> Result<()> {
        let n = u.len();
        match &self.stepper {
            Stepper::Rk4 => rk4_step(&self.system, u, t, h, &mut Rk4Work::new(n)),
            Stepper::Etdrk4 { diag, .. } => {
                let coeffs = EtdCoefficients::new(diag, h);
                etdrk4_step(&self.system, &coeffs, u, t, h, &mut EtdWork::new(n));
            }
            Stepper::Cnab2 { op, .. } => {
                let cn = CnOperators::new(op, h)?;
                cn_heun_step(&self.system, op, &cn, u, t, &mut CnabWork::new(n));
            }
        }
        Ok(())
    }
}

struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

fn rk4_step<S: DynamicalSystem + ?Sized>(sys: &S, u: &mut [f64], t: f64, h: f64, w: &mut Rk4Work) {
    sys.rhs(t, u, &mut w.k1);
    for i in 0..u.len() {
        w.tmp[i] = u[i] + 0.5 * h * w.k1[i];
    }
    sys.rhs(t + 0.5 * h, &w.tmp, &mut w.k2);
    for i in 0..u.len() {
        w.tmp[i] = u[i] + 0.5 * h * w.k2[i];
    }
    sys.rhs(t + 0.5 * h, &w.tmp, &mut w.k3);
    for i in 0..u.len() {
        w.tmp[i] = u[i] + h * w.k3[i];
    }
    sys.rhs(t + h, &w.tmp, &mut w.k4);
    for i in 0..u.len() {
        u[i] += h / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
    }
}

struct EtdWork {
    nv: Vec<f64>,
    a: Vec<f64>,
    na: Vec<f64>,
    b: Vec<f64>,
    nb: Vec<f64>,
    c: Vec<f64>,
    nc: Vec<f64>,
}

impl EtdWork {
    fn new(n: usize) -> Self {
        Self {
            nv: vec![0.0; n],
            a: vec![0.0; n],
            na: vec![0.0; n],
            b: vec![0.0; n],
            nb: vec![0.0; n],
            c: vec![0.0; n],
            nc: vec![0.0; n],
        }
    }
}

fn etdrk4_step<S: DynamicalSystem + ?Sized>(
    sys: &S,
    co: &EtdCoefficients,
    v: &mut [f64],
    t: f64,
    h: f64,
    w: &mut EtdWork,
) {
    let n = v.len();
    sys.nonlinear(t, v, &mut w.nv);
    for i in 0..n {
        w.a[i] = co.e2[i] * v[i] + co.q[i] * w.nv[i];
    }
    sys.nonlinear(t + 0.5 * h, &w.a, &mut w.na);
    for i in 0..n {
        w.b[i] = co.e2[i] * v[i] + co.q[i] * w.na[i];
    }
    sys.nonlinear(t + 0.5 * h, &w.b, &mut w.nb);
    for i in 0..n {
        w.c[i] = co.e2[i] * w.a[i] + co.q[i] * (2.0 * w.nb[i] - w.nv[i]);
    }
    sys.nonlinear(t + h, &w.c, &mut w.nc);
    for i in 0..n {
        v[i] = co.e[i] * v[i]
            + co.f1[i] * w.nv[i]
            + 2.0 * co.f2[i] * (w.na[i] + w.nb[i])
            + co.f3[i] * w.nc[i];
    }
}

struct CnabWork {
    n_prev: Vec<f64>,
    n_cur: Vec<f64>,
    rhs: Vec<f64>,
    pred: Vec<f64>,
}

impl CnabWork {
    fn new(n: usize) -> Self {
        Self {
            n_prev: vec![0.0; n],
            n_cur: vec![0.0; n],
            rhs: vec![0.0; n],
            pred: vec![0.0; n],
        }
    }
}

/// Self-starting second-order IMEX step: Crank–Nicolson on `A`, Heun
/// (explicit trapezoid) on `N`. Leaves `N(u_start)` in `w.n_prev`.
fn cn_heun_step<S: DynamicalSystem + ?Sized>(
    sys: &S,
    _op: &BandedMatrix,
    cn: &CnOperators,
    u: &mut [f64],
    t: f64,
    w: &mut CnabWork,
) {
    let h = cn.h;
    let n = u.len();
    sys.nonlinear(t, u, &mut w.n_prev);
    cn.explicit.mul_vec(u, &mut w.rhs);
    for i in 0..n {
        w.pred[i] = w.rhs[i] + h * w.n_prev[i];
    }
    cn.implicit.solve(&mut w.pred);
    sys.nonlinear(t + h, &w.pred, &mut w.n_cur);
    for i in 0..n {
        u[i] = w.rhs[i] + 0.5 * h * (w.n_prev[i] + w.n_cur[i]);
    }
    cn.implicit.solve(u);
}

fn cnab2_step<S: DynamicalSystem + ?Sized>(
    sys: &S,
    cn: &CnOperators,
    u: &mut [f64],
    t: f64,
    w: &mut CnabWork,
) {
    let h = cn.h;
    let n = u.len();
    sys.nonlinear(t, u, &mut w.n_cur);
    cn.explicit.mul_vec(u, &mut w.rhs);
    for i in 0..n {
        u[i] = w.rhs[i] + h * (1.5 * w.n_cur[i] - 0.5 * w.n_prev[i]);
    }
    cn.implicit.solve(u);
    std::mem::swap(&mut w.n_prev, &mut w.n_cur);
}

/// Integrates `system` from `t0` to `t1`.
pub fn integrate<S: DynamicalSystem>(
    system: S,
    u0: &[f64],
    t0: f64,
    t1: f64,
    cfg: IntegratorConfig,
) -> Result<Vec<f64>> {
    Integrator::new(system, cfg)?.integrate(u0, t0, t1)
}

/// Finite-difference step for [`jacobian_trace`].
pub const TRACE_FD_STEP: f64 = 1e-6;

/// Trace of the Jacobian of `f` at `u` by central differences.
pub fn jacobian_trace<S: DynamicalSystem + ?Sized>(system: &S, t: f64, u: &[f64]) -> f64 {
    let n = u.len();
    let mut plus = u.to_vec();
    let mut minus = u.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    let mut trace = 0.0;
    for i in 0..n {
        plus[i] = u[i] + TRACE_FD_STEP;
        minus[i] = u[i] - TRACE_FD_STEP;
        system.rhs(t, &plus, &mut fp);
        system.rhs(t, &minus, &mut fm);
        trace += (fp[i] - fm[i]) / (plus[i] - minus[i]);
        plus[i] = u[i];
        minus[i] = u[i];
    }
    trace
}

/// Time average of the flow divergence `tr(∂f/∂u)` along the trajectory from
/// `u0` over `horizon`, sampled at every integrator step (trapezoidal
/// weights). Equals the sum of all Lyapunov exponents for long horizons.
pub fn jacobian_trace_average<S: DynamicalSystem>(
    system: S,
    u0: &[f64],
    horizon: f64,
    cfg: IntegratorConfig,
) -> Result<f64> {
    let integrator = Integrator::new(system, cfg)?;
    if horizon <= 0.0 {
        return Ok(jacobian_trace(integrator.system(), 0.0, u0));
    }
    let mut samples = Vec::new();
    integrator.integrate_observed(u0, 0.0, horizon, |_, t, u| {
        samples.push(jacobian_trace(integrator.system(), t, u));
    })?;
    if samples.len() == 1 {
        return Ok(samples[0]);
    }
    let interior: f64 = samples[1..samples.len() - 1].iter().sum();
    let ends = 0.5 * (samples[0] + samples[samples.len() - 1]);
    Ok((interior + ends) / (samples.len() - 1) as f64)
}
