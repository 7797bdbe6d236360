//! Leading Lyapunov exponents by repeated QR reorthonormalisation.
//!
//! After a transient of length `tau`, a base trajectory and `m` trajectories
//! started `epsilon` away along orthonormal directions are integrated over
//! intervals of length `T`. Differences of the perturbed and base endpoints,
//! divided by `epsilon`, approximate the action of the flow map on the frame.
//! A QR factorisation re-orthonormalises the frame, and the logarithms of the
//! diagonal of `R`, summed over `N` intervals and divided by `N·T`, give the
//! exponents.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ks::BoundaryCondition;
use crate::ode::{DynamicalSystem, Integrator, IntegratorConfig, Scheme};

/// Any state component above this magnitude aborts a spectrum computation.
pub const BLOWUP_LIMIT: f64 = 1e6;

/// Tolerance on `QᵀQ = I` accepted for an incoming frame.
pub const FRAME_ORTHONORMALITY_TOL: f64 = 1e-8;

/// Diagonal entries of `R` at or below this magnitude mean the frame has
/// collapsed.
pub const RANK_FLOOR: f64 = 1e-300;

/// Perturbations larger than this are suspicious for a linearisation.
pub const EPSILON_WARN: f64 = 1e-2;

/// Default KS time step.
pub const DEFAULT_DT: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    /// Number of exponents.
    pub m: usize,
    /// Transient discarded before accumulation.
    pub tau: f64,
    /// Time between reorthonormalisations.
    pub interval: f64,
    /// Number of reorthonormalisations.
    pub intervals: usize,
    pub epsilon: f64,
    /// Seed for the random initial condition, where the caller draws one.
    pub seed: u64,
    pub integrator: IntegratorConfig,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            m: 24,
            tau: 2000.0,
            interval: 2.0,
            intervals: 1000,
            epsilon: 1e-6,
            seed: 0,
            integrator: IntegratorConfig::new(DEFAULT_DT, Scheme::Etdrk4),
        }
    }
}

impl LyapunovConfig {
    /// Defaults with the integrator suited to `bc`.
    pub fn for_bc(bc: BoundaryCondition) -> Self {
        Self {
            integrator: IntegratorConfig::new(DEFAULT_DT, bc.default_scheme()),
            ..Self::default()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.integrator.validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.m > dim {
            return bad(format!("m = {} exceeds the system dimension {dim}", self.m));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be nonnegative, got {}", self.tau));
        }
        if !(self.interval > 0.0 && self.interval.is_finite()) {
            return bad(format!("T must be positive, got {}", self.interval));
        }
        if self.intervals == 0 {
            return bad("N must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.epsilon > EPSILON_WARN {
            log::warn!(
                "epsilon = {} is large; finite differences may leave the linear regime",
                self.epsilon
            );
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovResult {
    /// Exponents, non-increasing.
    pub exponents: Vec<f64>,
    /// `log R_ii` per interval (`N` rows of `m`), in QR column order.
    pub log_r_history: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
    pub config: LyapunovConfig,
    /// Seconds; excluded from any reproducibility comparison.
    pub wall_time: f64,
}

impl LyapunovResult {
    /// Exponents rebuilt from the history, sorted non-increasing.
    pub fn recompute_exponents(&self) -> Vec<f64> {
        exponents_from_history(&self.log_r_history, self.config.interval)
    }
}

fn exponents_from_history(history: &[Vec<f64>], interval: f64) -> Vec<f64> {
    let m = history.first().map_or(0, Vec::len);
    let total_time = history.len() as f64 * interval;
    let mut sums = vec![0.0; m];
    for row in history {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut exps: Vec<f64> = sums.into_iter().map(|s| s / total_time).collect();
    sort_descending(&mut exps);
    exps
}

/// Sorts non-increasing, NaN last.
pub fn sort_descending(values: &mut [f64]) {
    values.sort_by(|a, b| match (a.is_nan(), b.is_nan()) {
        (false, false) => b.total_cmp(a),
        (x, y) => x.cmp(&y),
    });
}

/// `u(tau)` from `u(0) = u0`.
pub fn burn_in<S: DynamicalSystem>(
    system: S,
    u0: &[f64],
    tau: f64,
    integrator: IntegratorConfig,
) -> Result<Vec<f64>> {
    let integ = Integrator::new(system, integrator)?.with_blowup_limit(BLOWUP_LIMIT);
    run_transient(&integ, u0, tau)
}

fn run_transient<S: DynamicalSystem>(integ: &Integrator<S>, u0: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be nonnegative, got {tau}")));
    }
    if tau == 0.0 {
        if u0.len() != integ.system().dim() {
            return Err(Error::DimensionMismatch {
                expected: integ.system().dim(),
                got: u0.len(),
            });
        }
        return Ok(u0.to_vec());
    }
    integ.integrate(u0, 0.0, tau)
}

fn max_orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let gram = q.transpose() * q;
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Advances the base state and the frame `q_prev` over one interval.
///
/// Returns `u(T)` and the `n×m` matrix whose column `i` is
/// `(flow(u_prev + ε·q_i) − flow(u_prev)) / ε`. The `m + 1` integrations run
/// in parallel and are collected in index order.
pub fn propagate_frame<S: DynamicalSystem>(
    integ: &Integrator<S>,
    u_prev: &[f64],
    q_prev: &DMatrix<f64>,
    interval: f64,
    epsilon: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = u_prev.len();
    let m = q_prev.ncols();
    if q_prev.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q_prev.nrows(),
        });
    }
    let defect = max_orthonormality_defect(q_prev);
    if !(defect <= FRAME_ORTHONORMALITY_TOL) {
        return Err(Error::NotOrthonormal { deviation: defect });
    }
    let ends: Vec<Vec<f64>> = (0..=m)
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                integ.integrate(u_prev, 0.0, interval)
            } else {
                let start: Vec<f64> = u_prev
                    .iter()
                    .zip(q_prev.column(i - 1).iter())
                    .map(|(u, q)| u + epsilon * q)
                    .collect();
                integ.integrate(&start, 0.0, interval)
            }
        })
        .collect::<Result<_>>()?;
    let base = &ends[0];
    let mut v = DMatrix::<f64>::zeros(n, m);
    for (i, w) in ends[1..].iter().enumerate() {
        for r in 0..n {
            let x = (w[r] - base[r]) / epsilon;
            if !x.is_finite() {
                return Err(Error::NonFiniteColumn { column: i });
            }
            v[(r, i)] = x;
        }
    }
    let mut ends = ends;
    Ok((ends.swap_remove(0), v))
}

/// Reduced QR factorisation `V = Q·R` with `R_ii > 0`. Returns `Q` and the
/// diagonal of `R`.
pub fn reorthonormalize(v: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (n, m) = v.shape();
    if m > n {
        return Err(Error::InvalidConfig(format!(
            "cannot orthonormalise {m} columns in dimension {n}"
        )));
    }
    let qr = v.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    let mut diag = Vec::with_capacity(m);
    for i in 0..m {
        let rii = r[(i, i)];
        if !(rii.abs() > RANK_FLOOR) {
            return Err(Error::RankDeficient {
                column: i,
                value: rii.abs(),
            });
        }
        if rii < 0.0 {
            q.column_mut(i).neg_mut();
        }
        diag.push(rii.abs());
    }
    Ok((q, diag))
}

/// The first `m` columns of the `n×n` identity.
pub fn initial_frame(n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// The `m` most positive Lyapunov exponents of `system` from `u0`.
pub fn compute_spectrum<S: DynamicalSystem>(
    system: S,
    u0: &[f64],
    cfg: &LyapunovConfig,
) -> Result<LyapunovResult> {
    let started = Instant::now();
    cfg.validate(system.dim())?;
    let integ = Integrator::new(system, cfg.integrator)?.with_blowup_limit(BLOWUP_LIMIT);
    let u = run_transient(&integ, u0, cfg.tau)?;
    let mut result = accumulate(&integ, u, cfg)?;
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}

fn accumulate<S: DynamicalSystem>(
    integ: &Integrator<S>,
    mut u: Vec<f64>,
    cfg: &LyapunovConfig,
) -> Result<LyapunovResult> {
    let started = Instant::now();
    let mut q = initial_frame(u.len(), cfg.m);
    let mut history = Vec::with_capacity(cfg.intervals);
    for j in 1..=cfg.intervals {
        let (u_next, v) = propagate_frame(integ, &u, &q, cfg.interval, cfg.epsilon)
            .map_err(|e| e.at_interval(j))?;
        let (q_next, r_diag) = reorthonormalize(&v).map_err(|e| e.at_interval(j))?;
        history.push(r_diag.iter().map(|r| r.ln()).collect());
        u = u_next;
        q = q_next;
    }
    let exponents = exponents_from_history(&history, cfg.interval);
    Ok(LyapunovResult {
        exponents,
        log_r_history: history,
        final_state: u,
        config: *cfg,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntervalScanRow {
    pub interval: f64,
    /// `None` when the run failed; see `error`.
    pub exponents: Option<Vec<f64>>,
    pub error: Option<String>,
}

/// Exponents for each reorthonormalisation interval in `intervals`, every
/// other setting held fixed. The transient is integrated once and shared.
/// Failures are recorded per row.
pub fn scan_reorthonormalization_interval<S: DynamicalSystem>(
    system: S,
    u0: &[f64],
    cfg: &LyapunovConfig,
    intervals: &[f64],
) -> Result<Vec<IntervalScanRow>> {
    if intervals.is_empty() {
        return Err(Error::InvalidConfig("no reorthonormalisation intervals to scan".into()));
    }
    if intervals.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("T values must be strictly ascending".into()));
    }
    cfg.validate(system.dim())?;
    let integ = Integrator::new(system, cfg.integrator)?.with_blowup_limit(BLOWUP_LIMIT);
    let start = run_transient(&integ, u0, cfg.tau)?;
    intervals
        .iter()
        .map(|&t| {
            let row_cfg = LyapunovConfig { interval: t, ..*cfg };
            row_cfg.validate(integ.system().dim())?;
            Ok(match accumulate(&integ, start.clone(), &row_cfg) {
                Ok(res) => IntervalScanRow {
                    interval: t,
                    exponents: Some(res.exponents),
                    error: None,
                },
                Err(e) => {
                    log::warn!("T = {t}: {e}");
                    IntervalScanRow {
                        interval: t,
                        exponents: None,
                        error: Some(e.to_string()),
                    }
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{DiagonalLinear, Lorenz};

    fn rk4(dt: f64) -> IntegratorConfig {
        IntegratorConfig::new(dt, Scheme::Rk4)
    }

    /// Classical Gram–Schmidt with a second orthogonalisation pass.
    fn gram_schmidt_r_diag(v: &DMatrix<f64>) -> Vec<f64> {
        let (n, m) = v.shape();
        let mut q: Vec<Vec<f64>> = Vec::new();
        let mut diag = Vec::new();
        for j in 0..m {
            let mut w: Vec<f64> = v.column(j).iter().copied().collect();
            for _ in 0..2 {
                for qk in &q {
                    let dot: f64 = qk.iter().zip(&w).map(|(a, b)| a * b).sum();
                    for r in 0..n {
                        w[r] -= dot * qk[r];
                    }
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            diag.push(norm);
            q.push(w.iter().map(|x| x / norm).collect());
        }
        diag
    }

    #[test]
    fn orthonormal_input_is_unchanged() {
        let v = initial_frame(5, 3);
        let (q, r) = reorthonormalize(&v).unwrap();
        assert_eq!(q, v);
        assert_eq!(r, vec![1.0; 3]);
    }

    #[test]
    fn diagonal_input_gives_axes() {
        let v = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        let (q, r) = reorthonormalize(&v).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-15 && (r[1] - 3.0).abs() < 1e-15);
        let want = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((q - want).abs().max() < 1e-15);
    }

    #[test]
    fn qr_matches_gram_schmidt() {
        let data = crate::ks::standard_normal_vector(24, 11);
        let v = DMatrix::from_column_slice(6, 4, &data);
        let (q, r) = reorthonormalize(&v).unwrap();
        let oracle = gram_schmidt_r_diag(&v);
        for (a, b) in r.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!(max_orthonormality_defect(&q) < 1e-12);
        // Q·R reconstructs V, with R = Qᵀ V upper triangular
        let rfull = q.transpose() * &v;
        for i in 0..4 {
            assert!((rfull[(i, i)] - r[i]).abs() < 1e-12);
            for j in 0..i {
                assert!(rfull[(i, j)].abs() < 1e-12);
            }
        }
        let recon = &q * rfull;
        assert!((recon - &v).abs().max() < 1e-10 * v.abs().max());
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(reorthonormalize(&v), Err(Error::RankDeficient { column: 1, .. })));
    }

    #[test]
    fn identity_flow_returns_frame() {
        let sys = DiagonalLinear::new(vec![0.0; 4]);
        let integ = Integrator::new(&sys, rk4(0.1)).unwrap();
        let q = initial_frame(4, 2);
        let (u, v) = propagate_frame(&integ, &[1.0, 2.0, 3.0, 4.0], &q, 1.0, 1e-6).unwrap();
        assert_eq!(u, vec![1.0, 2.0, 3.0, 4.0]);
        assert!((v - q).abs().max() < 1e-9);
    }

    #[test]
    fn linear_flow_map_action() {
        let sys = DiagonalLinear::new(vec![1.0, -1.0]);
        let integ = Integrator::new(&sys, IntegratorConfig::new(0.1, Scheme::Etdrk4)).unwrap();
        let (_, v) = propagate_frame(&integ, &[0.3, -0.2], &initial_frame(2, 2), 1.0, 1e-6).unwrap();
        let e = std::f64::consts::E;
        assert!((v[(0, 0)] - e).abs() < 1e-5 * e);
        assert!((v[(1, 1)] - 1.0 / e).abs() < 1e-5 / e);
        assert!(v[(1, 0)].abs() < 1e-9 && v[(0, 1)].abs() < 1e-9);
    }

    #[test]
    fn scalar_decay_flow_map() {
        let sys = DiagonalLinear::new(vec![-1.0]);
        let integ = Integrator::new(&sys, rk4(0.01)).unwrap();
        let (_, v) = propagate_frame(&integ, &[1.0], &initial_frame(1, 1), 2.0, 1e-6).unwrap();
        assert!((v[(0, 0)] - (-2.0f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn non_orthonormal_frame_is_rejected() {
        let sys = DiagonalLinear::new(vec![0.0; 2]);
        let integ = Integrator::new(&sys, rk4(0.1)).unwrap();
        let q = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(
            propagate_frame(&integ, &[0.0, 0.0], &q, 1.0, 1e-6),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn burn_in_cases() {
        let sys = DiagonalLinear::new(vec![-1.0]);
        assert_eq!(burn_in(&sys, &[0.4], 0.0, rk4(0.01)).unwrap(), vec![0.4]);
        let u = burn_in(&sys, &[1.0], 5.0, rk4(0.01)).unwrap();
        assert!((u[0] - (-5.0f64).exp()).abs() < 1e-7);
    }

    fn diag_cfg(m: usize) -> LyapunovConfig {
        LyapunovConfig {
            m,
            tau: 0.0,
            interval: 1.0,
            intervals: 50,
            epsilon: 1e-6,
            seed: 0,
            integrator: IntegratorConfig::new(0.1, Scheme::Etdrk4),
        }
    }

    #[test]
    fn diagonal_spectrum_is_exact() {
        let rates = vec![0.3, -0.1, -2.0];
        let res = compute_spectrum(DiagonalLinear::new(rates.clone()), &[0.0; 3], &diag_cfg(3)).unwrap();
        for (got, want) in res.exponents.iter().zip(&rates) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        let again = res.recompute_exponents();
        for (a, b) in again.iter().zip(&res.exponents) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(res.log_r_history.len(), 50);
    }

    #[test]
    fn spectrum_is_deterministic() {
        let cfg = LyapunovConfig {
            m: 3,
            tau: 5.0,
            interval: 0.5,
            intervals: 40,
            integrator: rk4(0.01),
            ..LyapunovConfig::default()
        };
        let a = compute_spectrum(Lorenz::default(), &[1.0, 1.0, 1.0], &cfg).unwrap();
        let b = compute_spectrum(Lorenz::default(), &[1.0, 1.0, 1.0], &cfg).unwrap();
        assert_eq!(a.exponents, b.exponents);
        assert_eq!(a.log_r_history, b.log_r_history);
    }

    #[test]
    fn lorenz_spectrum() {
        let cfg = LyapunovConfig {
            m: 3,
            tau: 100.0,
            interval: 0.5,
            intervals: 2000,
            integrator: rk4(0.01),
            ..LyapunovConfig::default()
        };
        let res = compute_spectrum(Lorenz::default(), &[1.0, 1.0, 1.0], &cfg).unwrap();
        let sum: f64 = res.exponents.iter().sum();
        assert!((sum + 13.6667).abs() < 0.15, "{:?}", res.exponents);
        assert!(res.exponents[1].abs() < 0.02, "{:?}", res.exponents);
        assert!(res.exponents[0] > 0.8 && res.exponents[0] < 1.0);
    }

    #[test]
    fn config_validation() {
        let sys = DiagonalLinear::new(vec![0.1, 0.2]);
        let err = compute_spectrum(&sys, &[0.0, 0.0], &diag_cfg(3)).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let bad_t = LyapunovConfig { interval: 0.0, ..diag_cfg(1) };
        assert!(compute_spectrum(&sys, &[0.0, 0.0], &bad_t).is_err());
    }

    #[test]
    fn blowup_carries_interval() {
        let sys = DiagonalLinear::new(vec![5.0]);
        let cfg = LyapunovConfig { intervals: 10, ..diag_cfg(1) };
        match compute_spectrum(&sys, &[1.0], &cfg) {
            Err(Error::AtInterval { interval, cause }) => {
                assert_eq!(interval, 3);
                assert!(matches!(*cause, Error::IntegrationBlowUp { .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn interval_scan_on_linear_flow() {
        let sys = DiagonalLinear::new(vec![0.3, -0.1]);
        let cfg = LyapunovConfig { m: 2, intervals: 20, ..diag_cfg(2) };
        let rows = scan_reorthonormalization_interval(&sys, &[0.0, 0.0], &cfg, &[0.5, 1.0, 2.0, 4.0]).unwrap();
        for row in &rows {
            let e = row.exponents.as_ref().unwrap();
            assert!((e[0] - 0.3).abs() < 1e-3 && (e[1] + 0.1).abs() < 1e-3, "{row:?}");
        }
        assert!(scan_reorthonormalization_interval(&sys, &[0.0, 0.0], &cfg, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn interval_scan_records_failures() {
        let sys = DiagonalLinear::new(vec![0.3, -0.1]);
        let cfg = LyapunovConfig { m: 2, intervals: 20, ..diag_cfg(2) };
        // large T blows the base trajectory past the limit
        let rows = scan_reorthonormalization_interval(&sys, &[1.0, 0.0], &cfg, &[1.0, 4.0]).unwrap();
        assert!(rows[0].exponents.is_some());
        assert!(rows[1].exponents.is_none() && rows[1].error.is_some());
    }
}
