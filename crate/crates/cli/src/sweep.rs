use std::path::PathBuf;

use anyhow::{bail, Result};
use kslyap_core::ks::DEFAULT_K_MAX;
use kslyap_core::sweep::{meta_path, run_sweep, DEFAULT_DL};
use kslyap_core::{BoundaryCondition, LyapunovConfig, SweepPlan};

use crate::config::{ConfigFile, Resolver};
use crate::lyap::resolve_spectrum;
use crate::output::real;
use crate::SweepArgs;

pub fn run(a: &SweepArgs, file: Option<&ConfigFile>) -> Result<()> {
    let r = Resolver::new(file);
    let bc = r.value("bc", a.bc, BoundaryCondition::Periodic)?;
    let l_start = r.required("L-start", a.l_start)?;
    let l_end = r.required("L-end", a.l_end)?;
    let dl = r.value("dL", a.dl, DEFAULT_DL)?;
    let kmax = r.value("kmax", a.kmax, DEFAULT_K_MAX)?;
    let lyap = resolve_spectrum(&r, &a.spectrum, LyapunovConfig::for_bc(bc))?;
    let workers = r.value(
        "workers",
        a.workers,
        std::thread::available_parallelism().map_or(1, |n| n.get()),
    )?;
    let out: String = r.required("out", a.out.clone())?;
    let resume = r.switch("resume", a.resume)?;
    r.finish()?;

    let output = PathBuf::from(&out);
    let plan = SweepPlan {
        l_start,
        l_end,
        dl,
        bc,
        k_max: kmax,
        lyap,
        output: output.clone(),
        workers,
        comments: r.header("sweep"),
    };
    plan.validate()?;
    let meta = meta_path(&output);
    if resume {
        if output.exists() && !meta.exists() {
            bail!("{out} has no sidecar {}; cannot resume", meta.display());
        }
    } else {
        for p in [&output, &meta] {
            if p.exists() {
                std::fs::remove_file(p)?;
            }
        }
    }

    let records = run_sweep(&plan)?;
    let failed = records.iter().filter(|r| r.flags.failed).count();
    println!("{} records written to {out} ({failed} failed)", records.len());
    for rec in &records {
        println!(
            "L = {}  {}  D_KY = {}  lambda_1 = {}",
            real(rec.length),
            rec.flags.to_field(),
            real(rec.dky),
            rec.exponents.first().map_or("NaN".into(), |&x| real(x))
        );
    }
    Ok(())
}
