use anyhow::{ensure, Result};
use kslyap_core::ks::{sample_initial_condition, DEFAULT_K_MAX};
use kslyap_core::lyapunov::{BLOWUP_LIMIT, DEFAULT_DT};
use kslyap_core::{BoundaryCondition, DomainSpec, Integrator, IntegratorConfig, KsSystem};

use crate::config::{ConfigFile, Resolver};
use crate::output::{real, write_with_header};
use crate::SimulateArgs;

const DEFAULT_T_END: f64 = 500.0;
const DEFAULT_DT_OUT: f64 = 0.5;

/// Output times `0, Δ, 2Δ, …` up to `t_end`, with `t_end` itself appended
/// when it is not on the grid.
fn sample_times(t_end: f64, dt_out: f64) -> Vec<f64> {
    let n = (t_end / dt_out + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * dt_out).collect();
    if t_end - times[n] > 1e-9 * dt_out {
        times.push(t_end);
    }
    times
}

pub fn run(a: &SimulateArgs, file: Option<&ConfigFile>) -> Result<()> {
    let r = Resolver::new(file);
    let bc = r.value("bc", a.domain.bc, BoundaryCondition::Periodic)?;
    let length = r.required("L", a.domain.length)?;
    let kmax = r.value("kmax", a.domain.kmax, DEFAULT_K_MAX)?;
    let seed = r.value("seed", a.seed, 0u64)?;
    let dt = r.value("dt", a.dt, DEFAULT_DT)?;
    let scheme = r.value("scheme", a.scheme, bc.default_scheme())?;
    let t_end = r.value("t-end", a.t_end, DEFAULT_T_END)?;
    let dt_out = r.value("dt-out", a.dt_out, DEFAULT_DT_OUT)?;
    let out = r.optional("out", a.out.clone())?;
    r.finish()?;
    ensure!(t_end >= 0.0 && t_end.is_finite(), "t-end must be nonnegative, got {t_end}");
    ensure!(dt_out > 0.0 && dt_out.is_finite(), "dt-out must be positive, got {dt_out}");

    let spec = DomainSpec::new(length, bc).with_k_max(kmax);
    let system = KsSystem::new(spec)?;
    let integ = Integrator::new(&system, IntegratorConfig::new(dt, scheme))?.with_blowup_limit(BLOWUP_LIMIT);
    let times = sample_times(t_end, dt_out);

    let mut u = sample_initial_condition(spec, seed)?;
    let mut fields = vec![system.to_physical(&u)];
    for w in times.windows(2) {
        u = integ.integrate(&u, w[0], w[1])?;
        fields.push(system.to_physical(&u));
    }

    let mut header = r.header("simulate");
    header.push("columns: t, then u at each grid point x given in the header row".into());
    write_with_header(out.as_deref(), &header, |w| {
        let xs: Vec<String> = system.grid_points().iter().map(|&x| real(x)).collect();
        writeln!(w, "t,{}", xs.join(","))?;
        for (t, field) in times.iter().zip(&fields) {
            let vals: Vec<String> = field.iter().map(|&v| real(v)).collect();
            writeln!(w, "{},{}", real(*t), vals.join(","))?;
        }
        Ok(())
    })
}
