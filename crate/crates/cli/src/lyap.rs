use anyhow::{bail, Result};
use kslyap_core::ks::{standard_normal_vector, DEFAULT_K_MAX};
use kslyap_core::lyapunov::{compute_spectrum, scan_reorthonormalization_interval, IntervalScanRow};
use kslyap_core::sweep::{csv_header, csv_row};
use kslyap_core::systems::{DiagonalLinear, Lorenz};
use kslyap_core::{
    BoundaryCondition, DomainSpec, DynamicalSystem, IntegratorConfig, KsSystem, LyapunovConfig, Scheme,
    SpectrumRecord,
};

use crate::config::{ConfigFile, RealList, Resolver};
use crate::output::{real, write_with_header};
use crate::{LyapArgs, SpectrumArgs};

/// Fills a configuration from flags, the config file and `defaults`.
pub fn resolve_spectrum(r: &Resolver, a: &SpectrumArgs, defaults: LyapunovConfig) -> Result<LyapunovConfig> {
    Ok(LyapunovConfig {
        m: r.value("m", a.m, defaults.m)?,
        tau: r.value("tau", a.tau, defaults.tau)?,
        interval: r.value("T", a.interval, defaults.interval)?,
        intervals: r.value("N", a.intervals, defaults.intervals)?,
        epsilon: r.value("epsilon", a.epsilon, defaults.epsilon)?,
        seed: r.value("seed", a.seed, defaults.seed)?,
        integrator: IntegratorConfig::new(
            r.value("dt", a.dt, defaults.integrator.dt)?,
            r.value("scheme", a.scheme, defaults.integrator.scheme)?,
        ),
    })
}

enum Target {
    Ks(KsSystem),
    Lorenz(Lorenz),
    Diagonal(DiagonalLinear),
}

pub fn run(a: &LyapArgs, file: Option<&ConfigFile>) -> Result<()> {
    let r = Resolver::new(file);
    let system = r.value("system", a.system.clone(), "ks".to_string())?;
    let (target, cfg) = match system.as_str() {
        "ks" => {
            let bc = r.value("bc", a.domain.bc, BoundaryCondition::Periodic)?;
            let length = r.required("L", a.domain.length)?;
            let kmax = r.value("kmax", a.domain.kmax, DEFAULT_K_MAX)?;
            let cfg = resolve_spectrum(&r, &a.spectrum, LyapunovConfig::for_bc(bc))?;
            let sys = KsSystem::new(DomainSpec::new(length, bc).with_k_max(kmax))?;
            (Target::Ks(sys), cfg)
        }
        "lorenz" | "diaglin" => {
            if a.domain.bc.is_some() || a.domain.length.is_some() || a.domain.kmax.is_some() {
                bail!("--bc, --L and --kmax only apply to --system ks");
            }
            if system == "lorenz" {
                let defaults = LyapunovConfig {
                    m: 3,
                    integrator: IntegratorConfig::new(0.01, Scheme::Rk4),
                    ..LyapunovConfig::default()
                };
                (Target::Lorenz(Lorenz::default()), resolve_spectrum(&r, &a.spectrum, defaults)?)
            } else {
                let rates: RealList = r.required("rates", a.rates.clone())?;
                let defaults = LyapunovConfig {
                    m: rates.0.len(),
                    ..LyapunovConfig::default()
                };
                let cfg = resolve_spectrum(&r, &a.spectrum, defaults)?;
                (Target::Diagonal(DiagonalLinear::new(rates.0)), cfg)
            }
        }
        other => bail!("unknown system `{other}`; expected ks, lorenz or diaglin"),
    };
    let scan = r.optional("scan-T", a.scan_t.clone())?;
    let out = r.optional("out", a.out.clone())?;
    r.finish()?;
    let header = r.header("lyap");

    if let Some(scan) = scan {
        let rows = match &target {
            Target::Ks(s) => scan_rows(s, &start_state(&target, cfg.seed), &cfg, &scan.0)?,
            Target::Lorenz(s) => scan_rows(s, &start_state(&target, cfg.seed), &cfg, &scan.0)?,
            Target::Diagonal(s) => scan_rows(s, &start_state(&target, cfg.seed), &cfg, &scan.0)?,
        };
        for row in &rows {
            match (&row.exponents, &row.error) {
                (Some(e), _) => println!("T = {}: lambda_1 = {:.6}", row.interval, e[0]),
                (None, err) => println!("T = {}: failed: {}", row.interval, err.as_deref().unwrap_or("")),
            }
        }
        return write_with_header(out.as_deref(), &header, |w| {
            let cols: Vec<String> = (1..=cfg.m).map(|i| format!("lambda_{i}")).collect();
            writeln!(w, "T,status,{}", cols.join(","))?;
            for row in &rows {
                let (status, vals) = match &row.exponents {
                    Some(e) => ("ok", e.clone()),
                    None => ("failed", vec![f64::NAN; cfg.m]),
                };
                let vals: Vec<String> = vals.iter().map(|&x| real(x)).collect();
                writeln!(w, "{},{status},{}", real(row.interval), vals.join(","))?;
            }
            Ok(())
        });
    }

    let (exponents, record) = match &target {
        Target::Ks(sys) => {
            let dim = sys.dim();
            let run_cfg = LyapunovConfig {
                m: cfg.m.min(dim),
                ..cfg
            };
            if run_cfg.m < cfg.m {
                log::warn!("model has {dim} degrees of freedom; computing {dim} exponents");
            }
            let u0 = start_state(&target, cfg.seed);
            let mut exps = compute_spectrum(sys, &u0, &run_cfg)?.exponents;
            exps.resize(cfg.m, f64::NAN);
            let spec = sys.spec();
            let rec = SpectrumRecord::from_exponents(spec.length, spec.bc, cfg.seed, exps.clone());
            (exps, rec)
        }
        Target::Lorenz(sys) => {
            let exps = compute_spectrum(sys, &start_state(&target, cfg.seed), &cfg)?.exponents;
            let rec = SpectrumRecord::from_exponents(f64::NAN, BoundaryCondition::Periodic, cfg.seed, exps.clone());
            (exps, rec)
        }
        Target::Diagonal(sys) => {
            let exps = compute_spectrum(sys, &start_state(&target, cfg.seed), &cfg)?.exponents;
            let rec = SpectrumRecord::from_exponents(f64::NAN, BoundaryCondition::Periodic, cfg.seed, exps.clone());
            (exps, rec)
        }
    };

    for (i, x) in exponents.iter().enumerate() {
        println!("lambda_{} = {x:.6}", i + 1);
    }
    println!("sum = {:.6}", record.finite_exponents().iter().sum::<f64>());
    println!("D_KY = {:.6} (j = {}, flag {})", record.dky, record.j, record.flags.to_field());

    write_with_header(out.as_deref(), &header, |w| {
        if matches!(target, Target::Ks(_)) {
            writeln!(w, "{}", csv_header(cfg.m))?;
            writeln!(w, "{}", csv_row(&record))
        } else {
            let cols: Vec<String> = (1..=cfg.m).map(|i| format!("lambda_{i}")).collect();
            writeln!(w, "system,flag,dky,j,{}", cols.join(","))?;
            let vals: Vec<String> = exponents.iter().map(|&x| real(x)).collect();
            writeln!(
                w,
                "{system},{},{},{},{}",
                record.flags.to_field(),
                real(record.dky),
                record.j,
                vals.join(",")
            )
        }
    })
}

/// Random normal start for nonlinear systems. The linear system starts at
/// the origin: its tangent dynamics do not depend on the state, and a random
/// start would grow without bound through the transient.
fn start_state(target: &Target, seed: u64) -> Vec<f64> {
    match target {
        Target::Ks(s) => standard_normal_vector(s.dim(), seed),
        Target::Lorenz(s) => standard_normal_vector(s.dim(), seed),
        Target::Diagonal(s) => vec![0.0; s.dim()],
    }
}

fn scan_rows<S: DynamicalSystem>(
    system: &S,
    u0: &[f64],
    cfg: &LyapunovConfig,
    intervals: &[f64],
) -> Result<Vec<IntervalScanRow>> {
    Ok(scan_reorthonormalization_interval(system, u0, cfg, intervals)?)
}
