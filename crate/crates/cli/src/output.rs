//! Shared output helpers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use kslyap_core::sweep::read_records;
use kslyap_core::{BoundaryCondition, SpectrumRecord};

/// Reals in output files: 17 significant digits, `NaN` for missing values.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "NaN".into()
    }
}

/// Writes `# ` comment lines followed by whatever `body` produces, to
/// `path` or to standard output.
pub fn write_with_header(
    path: Option<&str>,
    header: &[String],
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    let mut sink: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {p}"))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    for line in header {
        writeln!(sink, "# {line}")?;
    }
    body(&mut sink)?;
    sink.flush()?;
    Ok(())
}

/// Records from every input file, optionally restricted to one boundary
/// condition, sorted by boundary condition then `L`.
pub fn load_inputs(inputs: &[String], bc: Option<BoundaryCondition>) -> Result<Vec<SpectrumRecord>> {
    anyhow::ensure!(!inputs.is_empty(), "no results files given");
    let mut records = Vec::new();
    for input in inputs {
        records.extend(read_records(Path::new(input))?);
    }
    if let Some(bc) = bc {
        records.retain(|r| r.bc == bc);
    }
    records.sort_by(|a, b| {
        a.bc.name()
            .cmp(b.bc.name())
            .then(a.length.total_cmp(&b.length))
    });
    Ok(records)
}
