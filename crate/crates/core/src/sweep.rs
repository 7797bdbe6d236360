//! Resumable sweeps of the Lyapunov spectrum over domain length.
//!
//! Results live in a CSV file with one row per grid point and a JSON
//! sidecar (`<output>.meta.json`) holding the configuration fingerprint.
//! Rows are appended as runs finish, so an interrupted sweep can be resumed;
//! the final file is rewritten sorted by `L`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{is_nonchaotic, kaplan_yorke};
use crate::error::{Error, Result};
use crate::ks::{standard_normal_vector, BoundaryCondition, DomainSpec, KsSystem, DEFAULT_K_MAX};
use crate::lyapunov::{compute_spectrum, LyapunovConfig};
use crate::ode::DynamicalSystem;

pub const DEFAULT_DL: f64 = 0.1;

/// Bumped whenever the meaning of stored records changes.
const FORMAT_VERSION: u32 = 1;

/// Tolerance on stored `D_KY` against the value rebuilt from the exponents.
pub const DKY_RELOAD_TOL: f64 = 1e-9;

const FIXED_COLUMNS: [&str; 6] = ["L", "bc", "seed", "flag", "dky", "j"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFlags {
    pub nonchaotic: bool,
    pub unsaturated: bool,
    pub failed: bool,
}

impl RecordFlags {
    /// `ok`, or the set flags joined with `|`.
    pub fn to_field(self) -> String {
        let names: Vec<&str> = [
            (self.nonchaotic, "nonchaotic"),
            (self.unsaturated, "unsaturated"),
            (self.failed, "failed"),
        ]
        .iter()
        .filter(|(set, _)| *set)
        .map(|(_, name)| *name)
        .collect();
        if names.is_empty() {
            "ok".into()
        } else {
            names.join("|")
        }
    }

    pub fn parse_field(field: &str) -> Option<Self> {
        let mut flags = Self::default();
        if field == "ok" {
            return Some(flags);
        }
        for part in field.split('|') {
            match part {
                "nonchaotic" => flags.nonchaotic = true,
                "unsaturated" => flags.unsaturated = true,
                "failed" => flags.failed = true,
                _ => return None,
            }
        }
        Some(flags)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub length: f64,
    pub bc: BoundaryCondition,
    pub seed: u64,
    pub flags: RecordFlags,
    pub dky: f64,
    pub j: usize,
    /// Non-increasing; padded with NaN when the model has fewer than `m`
    /// degrees of freedom, all NaN for failed runs.
    pub exponents: Vec<f64>,
    /// Configuration fingerprint; empty when the file carried no sidecar.
    pub fingerprint: String,
}

impl SpectrumRecord {
    /// Builds a record, deriving dimension and flags from `exponents`.
    pub fn from_exponents(length: f64, bc: BoundaryCondition, seed: u64, mut exponents: Vec<f64>) -> Self {
        crate::lyapunov::sort_descending(&mut exponents);
        let mut rec = Self {
            length,
            bc,
            seed,
            flags: RecordFlags::default(),
            dky: f64::NAN,
            j: 0,
            exponents,
            fingerprint: String::new(),
        };
        match kaplan_yorke(rec.finite_exponents()) {
            Ok(ky) => {
                rec.dky = ky.dimension;
                rec.j = ky.j;
                rec.flags.unsaturated = ky.unsaturated;
                rec.flags.nonchaotic = is_nonchaotic(&rec.exponents);
            }
            Err(_) => rec.flags.failed = true,
        }
        rec
    }

    pub fn failed(length: f64, bc: BoundaryCondition, seed: u64, m: usize) -> Self {
        Self {
            length,
            bc,
            seed,
            flags: RecordFlags {
                failed: true,
                ..RecordFlags::default()
            },
            dky: f64::NAN,
            j: 0,
            exponents: vec![f64::NAN; m],
            fingerprint: String::new(),
        }
    }

    /// The leading run of finite exponents.
    pub fn finite_exponents(&self) -> &[f64] {
        let n = self.exponents.iter().take_while(|x| x.is_finite()).count();
        &self.exponents[..n]
    }

    /// Checks ordering and that `dky`, `j` follow from the exponents.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        if self.flags.failed {
            return Ok(());
        }
        let exps = self.finite_exponents();
        if exps.windows(2).any(|w| w[0] < w[1]) {
            return Err("exponents are not sorted descending".into());
        }
        let ky = kaplan_yorke(exps).map_err(|e| e.to_string())?;
        let scale = self.dky.abs().max(1.0);
        if !((ky.dimension - self.dky).abs() <= DKY_RELOAD_TOL * scale) || ky.j != self.j {
            return Err(format!(
                "stored dky = {} (j = {}) but the exponents give {} (j = {})",
                self.dky, self.j, ky.dimension, ky.j
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub l_start: f64,
    pub l_end: f64,
    pub dl: f64,
    pub bc: BoundaryCondition,
    pub k_max: f64,
    /// Template for every run; `seed` is the base seed of the sweep.
    pub lyap: LyapunovConfig,
    pub output: PathBuf,
    pub workers: usize,
    /// Extra `#` lines written above the CSV header.
    #[serde(default)]
    pub comments: Vec<String>,
}

impl SweepPlan {
    pub fn new(l_start: f64, l_end: f64, bc: BoundaryCondition, output: impl Into<PathBuf>) -> Self {
        Self {
            l_start,
            l_end,
            dl: DEFAULT_DL,
            bc,
            k_max: DEFAULT_K_MAX,
            lyap: LyapunovConfig::for_bc(bc),
            output: output.into(),
            workers: 1,
            comments: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.l_start > 0.0 && self.l_start.is_finite()) {
            return bad(format!("L_start must be positive, got {}", self.l_start));
        }
        if !self.l_end.is_finite() || self.l_start > self.l_end {
            return bad(format!(
                "empty grid: L_start = {} exceeds L_end = {}",
                self.l_start, self.l_end
            ));
        }
        if !(self.dl > 0.0 && self.dl.is_finite()) {
            return bad(format!("dL must be positive, got {}", self.dl));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.k_max > 0.0 && self.k_max.is_finite()) {
            return bad(format!("kmax must be positive, got {}", self.k_max));
        }
        // Dimension is checked per run; m > dim is clamped there.
        self.lyap.validate(usize::MAX)
    }

    /// `L_start + k·dL` for `k = 0, 1, …` while the value stays within
    /// `L_end + dL/2`.
    pub fn grid(&self) -> Vec<f64> {
        let limit = self.l_end + 0.5 * self.dl;
        (0..)
            .map(|k| self.l_start + k as f64 * self.dl)
            .take_while(|&l| l <= limit)
            .collect()
    }

    pub fn run_seed(&self, index: usize) -> u64 {
        run_seed(self.lyap.seed, self.bc, index)
    }

    /// SHA-256 over every setting that changes a record's content. The
    /// upper grid bound, worker count and output location are excluded so a
    /// sweep may be extended or moved.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Fields<'a> {
            version: u32,
            bc: BoundaryCondition,
            l_start: f64,
            dl: f64,
            k_max: f64,
            lyap: &'a LyapunovConfig,
        }
        let canonical = serde_json::to_string(&Fields {
            version: FORMAT_VERSION,
            bc: self.bc,
            l_start: self.l_start,
            dl: self.dl,
            k_max: self.k_max,
            lyap: &self.lyap,
        })
        .expect("plain data serialises");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    /// Lines echoing the plan, written above the CSV header.
    pub fn header_comments(&self) -> Vec<String> {
        let l = &self.lyap;
        let mut lines = vec![
            format!(
                "bc = {}, L_start = {}, L_end = {}, dL = {}, kmax = {}",
                self.bc, self.l_start, self.l_end, self.dl, self.k_max
            ),
            format!(
                "m = {}, tau = {}, T = {}, N = {}, epsilon = {:e}, seed = {}, dt = {}, scheme = {}",
                l.m, l.tau, l.interval, l.intervals, l.epsilon, l.seed, l.integrator.dt, l.integrator.scheme
            ),
            format!("fingerprint = {}", self.fingerprint()),
        ];
        lines.extend(self.comments.iter().cloned());
        lines
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of grid point `index`, mixed from the base seed and the boundary
/// condition.
pub fn run_seed(base: u64, bc: BoundaryCondition, index: usize) -> u64 {
    let tag = match bc {
        BoundaryCondition::Periodic => 1,
        BoundaryCondition::OddPeriodic => 2,
    };
    splitmix64(base ^ splitmix64(tag ^ splitmix64(index as u64)))
}

/// Sidecar path: `<output>.meta.json`.
pub fn meta_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepMeta {
    pub format: u32,
    pub fingerprint: String,
    pub plan: SweepPlan,
}

pub fn read_meta(output: &Path) -> Result<Option<SweepMeta>> {
    let path = meta_path(output);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_reader(BufReader::new(File::open(path)?))?))
}

fn write_meta(plan: &SweepPlan) -> Result<()> {
    let meta = SweepMeta {
        format: FORMAT_VERSION,
        fingerprint: plan.fingerprint(),
        plan: plan.clone(),
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(meta_path(&plan.output), text)?;
    Ok(())
}

fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "NaN".into()
    }
}

pub fn csv_header(m: usize) -> String {
    let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|c| c.to_string()).collect();
    cols.extend((1..=m).map(|i| format!("lambda_{i}")));
    cols.join(",")
}

pub fn csv_row(rec: &SpectrumRecord) -> String {
    let mut fields = vec![
        fmt_real(rec.length),
        rec.bc.name().to_string(),
        rec.seed.to_string(),
        rec.flags.to_field(),
        fmt_real(rec.dky),
        rec.j.to_string(),
    ];
    fields.extend(rec.exponents.iter().map(|&x| fmt_real(x)));
    fields.join(",")
}

/// Writes comments, header and rows; rows keep their given order.
pub fn write_records(path: &Path, comments: &[String], records: &[SpectrumRecord], m: usize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{}", csv_header(m))?;
    for rec in records {
        writeln!(out, "{}", csv_row(rec))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a results file, attaching the sidecar fingerprint if present and
/// checking every record's dimension against its exponents.
pub fn read_records(path: &Path) -> Result<Vec<SpectrumRecord>> {
    let fingerprint = read_meta(path)?.map(|m| m.fingerprint).unwrap_or_default();
    let schema = |line: usize, message: String| Error::Schema {
        path: path.to_path_buf(),
        line,
        message,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut m = None;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let Some(m) = m else {
            if fields.len() < FIXED_COLUMNS.len() || fields[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
                return Err(schema(lineno, format!("unexpected header `{trimmed}`")));
            }
            for (k, name) in fields[FIXED_COLUMNS.len()..].iter().enumerate() {
                if *name != format!("lambda_{}", k + 1) {
                    return Err(schema(lineno, format!("unexpected column `{name}`")));
                }
            }
            m = Some(fields.len() - FIXED_COLUMNS.len());
            continue;
        };
        if fields.len() != FIXED_COLUMNS.len() + m {
            return Err(schema(
                lineno,
                format!("expected {} fields, found {}", FIXED_COLUMNS.len() + m, fields.len()),
            ));
        }
        let real = |k: usize| {
            fields[k]
                .parse::<f64>()
                .map_err(|_| schema(lineno, format!("bad number `{}` in column {}", fields[k], k + 1)))
        };
        let rec = SpectrumRecord {
            length: real(0)?,
            bc: fields[1]
                .parse()
                .map_err(|_| schema(lineno, format!("bad boundary condition `{}`", fields[1])))?,
            seed: fields[2]
                .parse()
                .map_err(|_| schema(lineno, format!("bad seed `{}`", fields[2])))?,
            flags: RecordFlags::parse_field(fields[3])
                .ok_or_else(|| schema(lineno, format!("bad flag `{}`", fields[3])))?,
            dky: real(4)?,
            j: fields[5]
                .parse()
                .map_err(|_| schema(lineno, format!("bad j `{}`", fields[5])))?,
            exponents: (FIXED_COLUMNS.len()..fields.len()).map(real).collect::<Result<_>>()?,
            fingerprint: fingerprint.clone(),
        };
        rec.check_consistency().map_err(|msg| schema(lineno, msg))?;
        records.push(rec);
    }
    if m.is_none() {
        return Err(schema(0, "missing header row".into()));
    }
    Ok(records)
}

/// One grid point. Errors become a `failed` record.
pub fn run_point(plan: &SweepPlan, index: usize, length: f64) -> SpectrumRecord {
    let seed = plan.run_seed(index);
    let m = plan.lyap.m;
    let attempt = || -> Result<Vec<f64>> {
        let spec = DomainSpec::new(length, plan.bc).with_k_max(plan.k_max);
        let system = KsSystem::new(spec)?;
        let dim = system.dim();
        let u0 = standard_normal_vector(dim, seed);
        let cfg = LyapunovConfig {
            m: m.min(dim),
            seed,
            ..plan.lyap
        };
        let mut exps = compute_spectrum(&system, &u0, &cfg)?.exponents;
        exps.resize(m, f64::NAN);
        Ok(exps)
    };
    match attempt() {
        Ok(exps) => SpectrumRecord::from_exponents(length, plan.bc, seed, exps),
        Err(e) => {
            log::warn!("L = {length} ({}): run failed: {e}", plan.bc);
            SpectrumRecord::failed(length, plan.bc, seed, m)
        }
    }
}

fn same_length(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Runs the sweep, resuming from `plan.output` when it already holds
/// results with a sidecar.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SpectrumRecord>> {
    plan.validate()?;
    if plan.output.exists() && meta_path(&plan.output).exists() {
        return resume_sweep(plan, &plan.output);
    }
    execute(plan, Vec::new())
}

/// Computes the grid points missing from `existing` and writes the merged
/// set, sorted by `L`, to `plan.output`.
pub fn resume_sweep(plan: &SweepPlan, existing: &Path) -> Result<Vec<SpectrumRecord>> {
    plan.validate()?;
    let expected = plan.fingerprint();
    let stored = read_meta(existing)?.map(|m| m.fingerprint).unwrap_or_default();
    if stored != expected {
        return Err(Error::FingerprintMismatch { stored, expected });
    }
    let records = read_records(existing)?;
    if let Some(r) = records.iter().find(|r| r.exponents.len() != plan.lyap.m || r.bc != plan.bc) {
        return Err(Error::Schema {
            path: existing.to_path_buf(),
            line: 0,
            message: format!("record at L = {} does not match the plan", r.length),
        });
    }
    execute(plan, records)
}

fn execute(plan: &SweepPlan, existing: Vec<SpectrumRecord>) -> Result<Vec<SpectrumRecord>> {
    let fingerprint = plan.fingerprint();
    let todo: Vec<(usize, f64)> = plan
        .grid()
        .into_iter()
        .enumerate()
        .filter(|(_, l)| !existing.iter().any(|r| same_length(r.length, *l)))
        .collect();
    log::info!(
        "sweep {}: {} grid points, {} already present",
        plan.output.display(),
        todo.len() + existing.len(),
        existing.len()
    );

    let m = plan.lyap.m;
    write_meta(plan)?;
    // Partial file: existing rows plus each new row as it completes.
    write_records(&plan.output, &plan.header_comments(), &existing, m)?;
    let sink = Mutex::new(BufWriter::new(OpenOptions::new().append(true).open(&plan.output)?));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let fresh: Vec<SpectrumRecord> = pool.install(|| {
        todo.par_iter()
            .map(|&(index, length)| -> Result<SpectrumRecord> {
                let mut rec = run_point(plan, index, length);
                rec.fingerprint = fingerprint.clone();
                log::info!("L = {length}: flag {}, D_KY = {}", rec.flags.to_field(), rec.dky);
                let mut out = sink.lock().expect("sink poisoned");
                writeln!(out, "{}", csv_row(&rec))?;
                out.flush()?;
                Ok(rec)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    drop(sink);

    let mut merged = existing;
    merged.extend(fresh);
    merged.sort_by(|a, b| a.length.total_cmp(&b.length));
    for r in &mut merged {
        r.fingerprint.clone_from(&fingerprint);
    }
    write_records(&plan.output, &plan.header_comments(), &merged, m)?;
    Ok(merged)
}

/// Records grouped by boundary condition, each group sorted by `L`.
pub fn by_boundary(records: &[SpectrumRecord]) -> BTreeMap<&'static str, Vec<&SpectrumRecord>> {
    let mut map: BTreeMap<&'static str, Vec<&SpectrumRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.bc.name()).or_default().push(r);
    }
    for v in map.values_mut() {
        v.sort_by(|a, b| a.length.total_cmp(&b.length));
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_plan(dir: &Path, l_start: f64, l_end: f64) -> SweepPlan {
        let mut plan = SweepPlan::new(l_start, l_end, BoundaryCondition::Periodic, dir.join("out.csv"));
        plan.dl = 1.0;
        plan.lyap.m = 4;
        plan.lyap.tau = 5.0;
        plan.lyap.intervals = 5;
        plan.lyap.interval = 0.5;
        plan
    }

    #[test]
    fn grid_arithmetic() {
        let mut plan = SweepPlan::new(10.0, 12.0, BoundaryCondition::Periodic, "x.csv");
        plan.dl = 1.0;
        assert_eq!(plan.grid(), vec![10.0, 11.0, 12.0]);
        plan.dl = 0.1;
        plan.l_start = 54.0;
        plan.l_end = 56.0;
        assert_eq!(plan.grid().len(), 21);
        plan.l_start = 22.0;
        plan.l_end = 22.0;
        assert_eq!(plan.grid(), vec![22.0]);
    }

    #[test]
    fn empty_grid_rejected() {
        let plan = SweepPlan::new(12.0, 10.0, BoundaryCondition::Periodic, "x.csv");
        assert!(matches!(plan.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn seeds_differ_by_bc_and_index() {
        let a = run_seed(7, BoundaryCondition::Periodic, 3);
        assert_eq!(a, run_seed(7, BoundaryCondition::Periodic, 3));
        assert_ne!(a, run_seed(7, BoundaryCondition::OddPeriodic, 3));
        assert_ne!(a, run_seed(7, BoundaryCondition::Periodic, 4));
        assert_ne!(a, run_seed(8, BoundaryCondition::Periodic, 3));
    }

    #[test]
    fn fingerprint_tracks_content_settings_only() {
        let plan = SweepPlan::new(10.0, 12.0, BoundaryCondition::Periodic, "a.csv");
        let mut other = plan.clone();
        other.l_end = 50.0;
        other.workers = 8;
        other.output = "b.csv".into();
        assert_eq!(plan.fingerprint(), other.fingerprint());
        other.lyap.epsilon = 1e-7;
        assert_ne!(plan.fingerprint(), other.fingerprint());
        assert_eq!(plan.fingerprint().len(), 64);
    }

    #[test]
    fn flags_round_trip() {
        for flags in [
            RecordFlags::default(),
            RecordFlags { nonchaotic: true, ..Default::default() },
            RecordFlags { nonchaotic: true, unsaturated: true, failed: false },
            RecordFlags { failed: true, ..Default::default() },
        ] {
            assert_eq!(RecordFlags::parse_field(&flags.to_field()), Some(flags));
        }
        assert_eq!(RecordFlags::parse_field("bogus"), None);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let recs = vec![
            SpectrumRecord::from_exponents(22.0, BoundaryCondition::Periodic, 1, vec![0.1 / 3.0, 0.003, -1.0 / 7.0, -2.0]),
            SpectrumRecord::from_exponents(2.0, BoundaryCondition::Periodic, 2, vec![-0.5, -1.5, f64::NAN, f64::NAN]),
            SpectrumRecord::failed(3.0, BoundaryCondition::Periodic, 3, 4),
        ];
        write_records(&path, &["a comment".into()], &recs, 4).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(csv_row(a), csv_row(b));
            assert_eq!(a.length.to_bits(), b.length.to_bits());
            for (x, y) in a.exponents.iter().zip(&b.exponents) {
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
        assert!(back[1].flags.nonchaotic);
        assert_eq!(back[1].dky, 0.0);
    }

    #[test]
    fn load_rejects_inconsistent_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut rec = SpectrumRecord::from_exponents(22.0, BoundaryCondition::Periodic, 1, vec![0.5, -1.0]);
        rec.dky = 1.6;
        write_records(&path, &[], &[rec], 2).unwrap();
        assert!(matches!(read_records(&path), Err(Error::Schema { line: 2, .. })));
    }

    #[test]
    fn load_rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        fs::write(&path, "L,bc,seed,flag,dky,j,lambda_2\n").unwrap();
        assert!(matches!(read_records(&path), Err(Error::Schema { line: 1, .. })));
    }

    #[test]
    fn sweep_is_deterministic_resumable_and_worker_independent() {
        let dir = tempfile::tempdir().unwrap();
        let plan = tiny_plan(dir.path(), 10.0, 12.0);
        let first = run_sweep(&plan).unwrap();
        assert_eq!(first.len(), 3);
        let bytes = fs::read(&plan.output).unwrap();

        // Rerun over complete output: nothing computed, identical bytes.
        let again = run_sweep(&plan).unwrap();
        assert_eq!(first, again);
        assert_eq!(bytes, fs::read(&plan.output).unwrap());

        // Fresh sweep with more workers into another file.
        let mut parallel = plan.clone();
        parallel.workers = 3;
        parallel.output = dir.path().join("par.csv");
        let par = run_sweep(&parallel).unwrap();
        assert_eq!(bytes, fs::read(&parallel.output).unwrap());
        assert_eq!(first, par);
    }

    #[test]
    fn resume_computes_only_the_complement() {
        let dir = tempfile::tempdir().unwrap();
        let full = tiny_plan(dir.path(), 10.0, 13.0);
        let reference = run_sweep(&full).unwrap();

        let mut half = tiny_plan(dir.path(), 10.0, 11.0);
        half.output = dir.path().join("half.csv");
        run_sweep(&half).unwrap();
        let existing = read_records(&half.output).unwrap();
        assert_eq!(existing.len(), 2);

        let mut extended = full.clone();
        extended.output = half.output.clone();
        let merged = run_sweep(&extended).unwrap();
        assert_eq!(merged, reference);
        // Existing rows are untouched.
        assert_eq!(&merged[..2], &existing[..]);
        assert_eq!(fs::read(&full.output).unwrap(), fs::read(&half.output).unwrap());
    }

    #[test]
    fn resume_refuses_changed_epsilon() {
        let dir = tempfile::tempdir().unwrap();
        let plan = tiny_plan(dir.path(), 10.0, 10.0);
        run_sweep(&plan).unwrap();
        let mut changed = plan.clone();
        changed.lyap.epsilon = 1e-7;
        assert!(matches!(
            resume_sweep(&changed, &plan.output),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn unusable_point_becomes_failed_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut plan = tiny_plan(dir.path(), 1.0, 2.0);
        plan.l_start = 1.0;
        let recs = run_sweep(&plan).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].flags.failed);
        assert!(recs[0].exponents.iter().all(|x| x.is_nan()));
        assert_eq!(read_records(&plan.output).unwrap().len(), 2);
    }

    #[test]
    fn unwritable_output_is_fatal() {
        let plan = tiny_plan(Path::new("/nonexistent/dir"), 10.0, 10.0);
        assert!(matches!(run_sweep(&plan), Err(Error::Io(_))));
    }
}
