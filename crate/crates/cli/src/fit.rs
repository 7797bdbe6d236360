//! The `fit` and `dky` subcommands.

use anyhow::{bail, Result};
use kslyap_core::analysis::{
    fit_dky_linear, fit_power_law, kaplan_yorke, scan_exponent_p, windowed_table, PowerLawFit,
    DEFAULT_DKY_L_MIN, DEFAULT_HALFWIDTH,
};
use kslyap_core::sweep::by_boundary;
use kslyap_core::Error as CoreError;

use crate::config::{ConfigFile, RangeSpec, RealList, Resolver};
use crate::output::{load_inputs, real, write_with_header};
use crate::{DkyArgs, FitArgs};

/// Window centres used when none are given.
const DEFAULT_CENTERS: [f64; 5] = [55.0, 65.0, 75.0, 85.0, 95.0];

fn fit_row(label: &str, f: &PowerLawFit) -> String {
    let (big_a, big_b, i0) = f.shifted_form();
    [
        label.to_string(),
        real(f.p),
        real(f.a),
        real(f.b),
        real(f.c),
        real(big_a),
        real(big_b),
        real(i0),
        real(f.rms_residual),
        real(f.mad_residual),
        f.n_points.to_string(),
    ]
    .join(",")
}

pub fn run_fit(a: &FitArgs, file: Option<&ConfigFile>) -> Result<()> {
    let r = Resolver::new(file);
    r.positional(&a.inputs);
    let bc = r.optional("bc", a.bc)?;
    let centers = r.value("centers", a.centers.clone(), RealList(DEFAULT_CENTERS.to_vec()))?;
    let halfwidth = r.value("halfwidth", a.halfwidth, DEFAULT_HALFWIDTH)?;
    let p_grid = r.value(
        "p-grid",
        a.p_grid,
        RangeSpec {
            start: 0.02,
            step: 0.02,
            end: 2.0,
        },
    )?;
    let out = r.optional::<String>("out", a.out.clone())?;
    r.finish()?;

    let records = load_inputs(&a.inputs, bc)?;
    let groups = by_boundary(&records);
    if groups.len() > 1 {
        bail!("inputs mix boundary conditions; choose one with --bc");
    }
    let stats = windowed_table(&records, &centers.0, halfwidth)?;
    let scan = scan_exponent_p(&stats, &p_grid.values())?;
    let best = scan.best();
    let at_one = fit_power_law(&stats, 1.0)?;

    let (big_a, big_b, i0) = at_one.shifted_form();
    println!("best p = {:.2} (rms {:.3e})", best.p, best.rms_residual);
    println!(
        "p = 1: a = {:.6}, b = {:.6}, c = {:.6}  =>  lambda_i(L) ~ {big_a:.4} - {big_b:.4} (i - {i0:.4}) / L",
        at_one.a, at_one.b, at_one.c
    );

    let Some(base) = out else {
        return Ok(());
    };
    let header = r.header("fit");
    let summary_cols = "fit,p,a,b,c,A,B,i0,rms,mad,n_points";
    write_with_header(Some(&base), &header, |w| {
        writeln!(w, "{summary_cols}")?;
        writeln!(w, "{}", fit_row("best", best))?;
        writeln!(w, "{}", fit_row("p1", &at_one))
    })?;
    write_with_header(Some(&format!("{base}.windows.csv")), &header, |w| {
        writeln!(w, "center,index,median,mad,count")?;
        for s in &stats {
            writeln!(w, "{},{},{},{},{}", real(s.center), s.index, real(s.median), real(s.mad), s.count)?;
        }
        Ok(())
    })?;
    write_with_header(Some(&format!("{base}.pscan.csv")), &header, |w| {
        writeln!(w, "{summary_cols}")?;
        for f in &scan.fits {
            writeln!(w, "{}", fit_row("scan", f))?;
        }
        Ok(())
    })
}

pub fn run_dky(a: &DkyArgs, file: Option<&ConfigFile>) -> Result<()> {
    let r = Resolver::new(file);
    r.positional(&a.inputs);
    let bc = r.optional("bc", a.bc)?;
    let l_min = r.value("Lmin-fit", a.l_min_fit, DEFAULT_DKY_L_MIN)?;
    let out = r.optional::<String>("out", a.out.clone())?;
    r.finish()?;

    let mut records = load_inputs(&a.inputs, bc)?;
    // Dimensions are rebuilt from the stored exponents.
    for rec in records.iter_mut().filter(|r| !r.flags.failed) {
        rec.dky = kaplan_yorke(rec.finite_exponents())?.dimension;
    }

    let mut fits = Vec::new();
    for (name, group) in by_boundary(&records) {
        let owned: Vec<_> = group.into_iter().cloned().collect();
        match fit_dky_linear(&owned, l_min) {
            Ok(fit) => {
                println!(
                    "{name}: D_KY ~ {:.4} L + {:.4} over L >= {l_min} ({} points, rms {:.3e})",
                    fit.slope, fit.intercept, fit.n_points, fit.rms
                );
                fits.push((name, fit));
            }
            Err(CoreError::InsufficientData(msg)) => log::warn!("{name}: no linear fit: {msg}"),
            Err(e) => return Err(e.into()),
        }
    }

    let header = r.header("dky");
    write_with_header(out.as_deref(), &header, |w| {
        writeln!(w, "L,bc,dky,j,flag")?;
        for rec in &records {
            writeln!(
                w,
                "{},{},{},{},{}",
                real(rec.length),
                rec.bc.name(),
                real(rec.dky),
                rec.j,
                rec.flags.to_field()
            )?;
        }
        Ok(())
    })?;
    if let Some(base) = out {
        write_with_header(Some(&format!("{base}.fit.csv")), &header, |w| {
            writeln!(w, "bc,L_min,slope,intercept,rms,n_points")?;
            for (name, fit) in &fits {
                writeln!(
                    w,
                    "{name},{},{},{},{},{}",
                    real(l_min),
                    real(fit.slope),
                    real(fit.intercept),
                    real(fit.rms),
                    fit.n_points
                )?;
            }
            Ok(())
        })?;
    }
    Ok(())
}
