use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kslyap_core::sweep::write_records;
use kslyap_core::{BoundaryCondition, SpectrumRecord};

fn kslyap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kslyap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = kslyap(args);
    assert!(
        out.status.success(),
        "kslyap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Header row and data rows, comments dropped.
fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], row: &[String], name: &str) -> f64 {
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    row[k].parse().unwrap()
}

fn lambdas(header: &[String], row: &[String]) -> Vec<f64> {
    header
        .iter()
        .zip(row)
        .filter(|(h, _)| h.starts_with("lambda_"))
        .map(|(_, v)| v.parse().unwrap())
        .collect()
}

/// Reruns the `command = …` line recorded in an output file's text.
fn rerun_recorded_command(text: &str) {
    let cmd = text
        .lines()
        .find_map(|l| l.strip_prefix("# command = "))
        .expect("command echoed");
    let args: Vec<&str> = cmd.split_whitespace().skip(1).collect();
    ok(&args);
}

#[test]
fn empty_sweep_grid_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let res = kslyap(&["sweep", "--L-start", "12", "--L-end", "10", "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("empty grid"));
}

#[test]
fn simulate_zero_time_writes_only_the_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.csv");
    ok(&["simulate", "--L", "22", "--t-end", "0", "--out", out.to_str().unwrap()]);
    let (header, rows) = table(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(header.len(), rows[0].len());
}

#[test]
fn simulate_output_reproduces_from_its_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.csv");
    ok(&["simulate", "--bc", "odd", "--L", "18.2", "--t-end", "5", "--out", out.to_str().unwrap()]);
    let first = fs::read(&out).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    for key in ["bc = odd", "L = 18.2", "kmax = 9", "seed = 0", "dt = 0.05", "scheme = imex-cnab2", "t-end = 5", "dt-out = 0.5"] {
        assert!(text.contains(&format!("# {key}\n")), "missing `{key}`");
    }
    fs::remove_file(&out).unwrap();
    rerun_recorded_command(&text);
    assert_eq!(first, fs::read(&out).unwrap());
    let (_, rows) = table(&out);
    assert_eq!(rows.len(), 11);
    // Odd fields vanish at both ends.
    for row in rows {
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row.last().unwrap().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# test\nL = 22\nt_end = 1\nseed = 4\n").unwrap();
    let out = dir.path().join("u.csv");
    ok(&["simulate", "--config", conf.to_str().unwrap(), "--t-end", "2", "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("# L = 22\n") && text.contains("# t-end = 2\n") && text.contains("# seed = 4\n"));
    assert_eq!(table(&out).1.len(), 5);

    fs::write(&conf, "L = 22\ncolour = blue\n").unwrap();
    let res = kslyap(&["simulate", "--config", conf.to_str().unwrap(), "--t-end", "0"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("colour"));
}

#[test]
fn lyap_diagonal_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l.csv");
    ok(&[
        "lyap", "--system", "diaglin", "--rates=0.3,-0.1,-2", "--tau", "0", "--N", "20", "--T", "1", "--out",
        out.to_str().unwrap(),
    ]);
    let (header, rows) = table(&out);
    let e = lambdas(&header, &rows[0]);
    for (got, want) in e.iter().zip([0.3, -0.1, -2.0]) {
        assert!((got - want).abs() < 1e-3, "{e:?}");
    }
    // Partial sums 0.3, 0.2, -1.8 give j = 2 and D = 2 + 0.2/2.
    assert!((column(&header, &rows[0], "dky") - 2.1).abs() < 1e-6);
}

#[test]
fn lyap_lorenz_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l.csv");
    ok(&["lyap", "--system", "lorenz", "--N", "2000", "--T", "0.5", "--tau", "50", "--out", out.to_str().unwrap()]);
    let (header, rows) = table(&out);
    let e = lambdas(&header, &rows[0]);
    assert!(e[1].abs() <= 0.02, "{e:?}");
    assert!((e.iter().sum::<f64>() + 13.6667).abs() <= 0.15, "{e:?}");
}

#[test]
fn lyap_rejects_domain_flags_for_oracles() {
    assert!(!kslyap(&["lyap", "--system", "lorenz", "--L", "22"]).status.success());
    assert!(!kslyap(&["lyap", "--system", "pendulum"]).status.success());
}

#[test]
fn lyap_scan_t_writes_one_row_per_interval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan.csv");
    ok(&[
        "lyap", "--system", "diaglin", "--rates=0.1,-0.5", "--tau", "0", "--N", "10", "--scan-T", "1,2,4",
        "--out", out.to_str().unwrap(),
    ]);
    let (header, rows) = table(&out);
    assert_eq!(header[..2], ["T".to_string(), "status".to_string()]);
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(row[1], "ok");
        assert!((row[2].parse::<f64>().unwrap() - 0.1).abs() < 1e-9);
    }
}

#[test]
fn lyap_periodic_l22_matches_published_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l22.csv");
    ok(&["lyap", "--bc", "periodic", "--L", "22", "--out", out.to_str().unwrap()]);
    let (header, rows) = table(&out);
    assert_eq!(header[..6], ["L", "bc", "seed", "flag", "dky", "j"].map(String::from));
    let e = lambdas(&header, &rows[0]);
    assert_eq!(e.len(), 24);
    for (got, want) in e.iter().zip([0.043, 0.003, 0.002, -0.004]) {
        assert!((got - want).abs() <= 0.01, "{:?}", &e[..6]);
    }
}

#[test]
fn lyap_odd_l41_matches_published_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l41.csv");
    ok(&["lyap", "--bc", "odd", "--L", "41", "--out", out.to_str().unwrap()]);
    let (header, rows) = table(&out);
    let e = lambdas(&header, &rows[0]);
    assert!((e[0] - 0.067).abs() <= 0.01, "{:?}", &e[..4]);
    let dky = column(&header, &rows[0], "dky");
    assert!((dky - 7.06).abs() <= 0.5, "D_KY = {dky}");
}

/// Moduli of the spatial Fourier modes 1..=k of one sampled field.
fn mode_moduli(field: &[f64], k: usize) -> Vec<f64> {
    let n = field.len();
    (1..=k)
        .map(|j| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in field.iter().enumerate() {
                let ph = 2.0 * std::f64::consts::PI * (i * j) as f64 / n as f64;
                re += v * ph.cos();
                im -= v * ph.sin();
            }
            re.hypot(im)
        })
        .collect()
}

#[test]
fn periodic_l12_settles_on_a_travelling_wave() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u12.csv");
    ok(&["simulate", "--L", "12", "--t-end", "500", "--out", out.to_str().unwrap()]);
    let (_, rows) = table(&out);
    assert_eq!(rows.len(), 1001);
    // A travelling wave keeps its profile, so the mode moduli stay fixed
    // while the field itself keeps moving.
    let fields: Vec<Vec<f64>> = rows[500..]
        .iter()
        .map(|r| r[1..].iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    let reference = mode_moduli(&fields[0], 3);
    assert!(reference[0] > 1.0, "no pattern: {reference:?}");
    for f in &fields {
        for (a, b) in mode_moduli(f, 3).iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-6 * b, "profile changed: {a} vs {b}");
        }
    }
    let shift = fields[0].iter().zip(&fields[1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(shift > 1e-3, "field is stationary, not travelling");

    let spec = dir.path().join("l12.csv");
    ok(&["lyap", "--L", "12", "--m", "12", "--out", spec.to_str().unwrap()]);
    let (header, rows) = table(&spec);
    let e = lambdas(&header, &rows[0]);
    assert!((e[0] - 0.003).abs() <= 0.01, "{:?}", &e[..3]);

    // Past about 17 directions the stiff modes underflow over one interval.
    let res = kslyap(&["lyap", "--L", "12"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("rank deficient"));
}

#[test]
fn odd_l17_5_oscillates_without_chaos() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.csv");
    ok(&["simulate", "--bc", "odd", "--L", "17.5", "--t-end", "500", "--out", out.to_str().unwrap()]);
    let (_, rows) = table(&out);
    let late: Vec<Vec<f64>> = rows[500..]
        .iter()
        .map(|r| r[1..].iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    let amp = late.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(amp.is_finite() && amp < 10.0 && amp > 0.1, "amplitude {amp}");

    let spec = dir.path().join("l.csv");
    ok(&["lyap", "--bc", "odd", "--L", "17.5", "--out", spec.to_str().unwrap()]);
    let (header, rows) = table(&spec);
    assert_eq!(column(&header, &rows[0], "dky"), 0.0);
    assert!(lambdas(&header, &rows[0])[0] <= 0.005);
}

#[test]
fn sweep_reproduces_and_resumes_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = out.to_str().unwrap();
    let common = ["--L-start", "10", "--dL", "1", "--m", "4", "--tau", "5", "--N", "5", "--T", "0.5", "--workers", "1"];
    let with = |end: &str, extra: &[&'static str]| {
        let mut v: Vec<&str> = vec!["sweep"];
        v.extend_from_slice(&common);
        v.extend_from_slice(&["--L-end", end, "--out", o]);
        v.extend_from_slice(extra);
        v.into_iter().map(String::from).collect::<Vec<_>>()
    };
    let args = with("12", &[]);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let first = fs::read(&out).unwrap();
    let (header, rows) = table(&out);
    assert_eq!(rows.len(), 3);
    assert_eq!(header.len(), 6 + 4);
    assert!(dir.path().join("s.csv.meta.json").exists());

    rerun_recorded_command(&String::from_utf8(first.clone()).unwrap());
    assert_eq!(first, fs::read(&out).unwrap());

    // Extending the grid with --resume keeps the first three rows.
    let args = with("13", &["--resume"]);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let (_, extended) = table(&out);
    assert_eq!(extended.len(), 4);
    assert_eq!(extended[..3], rows[..]);

    // A changed epsilon must not be mixed into the same file.
    let args = with("13", &["--resume", "--epsilon", "1e-7"]);
    let res = kslyap(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("fingerprint"));
}

fn write_synthetic_sweep(path: &Path) {
    let mut records = Vec::new();
    for c in [55.0, 65.0, 75.0, 85.0, 95.0] {
        for k in 0..=20 {
            let l = c - 1.0 + 0.1 * k as f64;
            let e: Vec<f64> = (1..=24).map(|i| 0.093 - 0.94 * (i as f64 - 0.39) / l).collect();
            records.push(SpectrumRecord::from_exponents(l, BoundaryCondition::Periodic, k, e));
        }
    }
    write_records(path, &[], &records, 24).unwrap();
}

#[test]
fn fit_recovers_the_synthetic_law() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("synthetic.csv");
    write_synthetic_sweep(&input);
    let base = dir.path().join("fit.csv");
    ok(&["fit", input.to_str().unwrap(), "--out", base.to_str().unwrap()]);
    let (header, rows) = table(&base);
    let best = rows.iter().find(|r| r[0] == "best").unwrap();
    let p1 = rows.iter().find(|r| r[0] == "p1").unwrap();
    assert!((column(&header, best, "p") - 1.0).abs() <= 0.02);
    assert!((column(&header, p1, "a") - 0.093).abs() <= 1e-6);
    assert!((column(&header, p1, "B") - 0.94).abs() <= 1e-6);
    assert!((column(&header, p1, "i0") - 0.39).abs() <= 1e-6);
    let (_, scan) = table(&dir.path().join("fit.csv.pscan.csv"));
    assert_eq!(scan.len(), 100);
    let (wh, windows) = table(&dir.path().join("fit.csv.windows.csv"));
    assert!(windows.iter().all(|r| column(&wh, r, "count") == 21.0));
}

#[test]
fn dky_from_published_columns() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("table.csv");
    let mut l60 = vec![0.089, 0.067, 0.055, 0.041, 0.030, 0.005, 0.003, 0.000, -0.004, -0.009, -0.029, -0.066];
    l60.extend([-0.1, -0.082 / 0.56]);
    let mut l100 = vec![0.088, 0.082, 0.070, 0.061, 0.048, 0.041, 0.033, 0.028, 0.018, 0.012, 0.005, 0.003];
    l100.extend((13..=22).map(|k| 0.003 - 0.008 * (k - 12) as f64));
    l100.extend([-0.079 / 0.44, -0.2]);
    let columns: Vec<(f64, Vec<f64>)> = vec![
        (12.0, vec![0.003, -0.005, -0.088, -0.089, -0.186, -3.524, -3.525, -9.835, -9.849, -9.959, -10.01, -10.12]),
        (13.5, vec![0.059, 0.004, -0.004, -0.227, -0.730, -1.467, -1.529, -6.956, -6.963, -7.977, -7.993, -9.199]),
        (22.0, vec![0.043, 0.003, 0.002, -0.004, -0.008, -0.185, -0.253, -0.296, -0.309, -1.965, -1.967, -5.599]),
        (36.0, vec![0.080, 0.056, 0.014, 0.003, -0.003, -0.004, -0.021, -0.088, -0.160, -0.224, -0.309, -0.373]),
        (60.0, l60),
        (100.0, l100),
    ];
    let records: Vec<SpectrumRecord> = columns
        .into_iter()
        .map(|(l, mut e)| {
            e.resize(24, f64::NAN);
            SpectrumRecord::from_exponents(l, BoundaryCondition::Periodic, 0, e)
        })
        .collect();
    write_records(&input, &[], &records, 24).unwrap();

    let out = dir.path().join("dky.csv");
    ok(&["dky", input.to_str().unwrap(), "--Lmin-fit", "0", "--out", out.to_str().unwrap()]);
    let (header, rows) = table(&out);
    let d = |l: f64| {
        let row = rows.iter().find(|r| r[0].parse::<f64>().unwrap() == l).unwrap();
        column(&header, row, "dky")
    };
    assert!((d(100.0) - 22.44).abs() <= 0.05);
    assert!((d(60.0) - 13.56).abs() <= 0.05);
    assert!((d(22.0) - 5.198).abs() <= 0.02);
    assert!((d(36.0) - 8.229).abs() <= 0.02);
    assert!((d(13.5) - 3.259).abs() <= 0.02);
    // Rounding of the tabulated exponents limits this one.
    assert!((d(12.0) - 1.663).abs() <= 0.1);

    let (fh, fits) = table(&dir.path().join("dky.csv.fit.csv"));
    assert_eq!(fits.len(), 1);
    assert!(column(&fh, &fits[0], "slope") > 0.0);
}

#[test]
fn malformed_results_file_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "# c\nL,bc,seed,flag,dky,j,lambda_1\n22,periodic,0,ok,zero,0,0.1\n").unwrap();
    let res = kslyap(&["dky", input.to_str().unwrap()]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains(":3"), "{err}");
}
