//! `key = value` config files and flag > file > default resolution.
//!
//! Every resolved value is recorded so outputs can echo the complete
//! effective configuration, both as `#` comment lines and as an equivalent
//! command line.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Keys are compared lower-cased with `_` read as `-`, so `L_start`,
/// `l-start` and `L-start` name the same setting.
fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

#[derive(Debug, Default)]
pub struct ConfigFile {
    path: PathBuf,
    values: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{lineno}: expected `key = value`, found `{line}`", path.display());
            };
            let key = normalize(key);
            if key.is_empty() {
                bail!("{}:{lineno}: empty key", path.display());
            }
            if let Some((first, _)) = values.get(&key) {
                bail!("{}:{lineno}: `{key}` already set on line {first}", path.display());
            }
            values.insert(key, (lineno, value.trim().to_string()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            values,
        })
    }
}

/// Resolves settings and remembers what was chosen.
pub struct Resolver<'a> {
    file: Option<&'a ConfigFile>,
    used: RefCell<Vec<String>>,
    echo: RefCell<Vec<(String, String)>>,
    positional: RefCell<Vec<String>>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: Option<&'a ConfigFile>) -> Self {
        Self {
            file,
            used: RefCell::new(Vec::new()),
            echo: RefCell::new(Vec::new()),
            positional: RefCell::new(Vec::new()),
        }
    }

    /// The flag if given, else the file entry. Either way the key counts as
    /// used, so a file entry shadowed by a flag is not reported as unknown.
    fn lookup<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let norm = normalize(key);
        self.used.borrow_mut().push(norm.clone());
        if flag.is_some() {
            return Ok(flag);
        }
        let Some(file) = self.file else {
            return Ok(None);
        };
        match file.values.get(&norm) {
            None => Ok(None),
            Some((line, raw)) => raw.parse().map(Some).map_err(|e| {
                anyhow!("{}:{line}: bad value `{raw}` for `{key}`: {e}", file.path.display())
            }),
        }
    }

    /// Flag if given, else the config file, else `default`.
    pub fn value<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    /// Like [`Resolver::value`] but with no default; missing values are an
    /// error.
    pub fn required<T>(&self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self
            .lookup(key, flag)?
            .ok_or_else(|| anyhow!("missing required setting --{key}"))?;
        self.record(key, &v);
        Ok(v)
    }

    /// An optional setting; recorded only when present.
    pub fn optional<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?;
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    /// A switch: set by the flag or by `key = true` in the file.
    pub fn switch(&self, key: &str, flag: bool) -> Result<bool> {
        let v = self.lookup(key, flag.then_some(true))?.unwrap_or(false);
        if v {
            self.echo.borrow_mut().push((key.to_string(), String::new()));
        }
        Ok(v)
    }

    /// Positional arguments, echoed as `input = …` and appended to the
    /// reproducing command.
    pub fn positional(&self, values: &[String]) {
        for v in values {
            self.echo.borrow_mut().push(("input".into(), v.clone()));
        }
        self.positional.borrow_mut().extend(values.iter().cloned());
    }

    pub fn record(&self, key: &str, value: &impl Display) {
        self.echo.borrow_mut().push((key.to_string(), value.to_string()));
    }

    /// Errors on config-file keys this subcommand never asked for.
    pub fn finish(&self) -> Result<()> {
        if let Some(file) = self.file {
            let used = self.used.borrow();
            let unknown: Vec<&str> = file
                .values
                .keys()
                .filter(|k| !used.contains(k))
                .map(String::as_str)
                .collect();
            if !unknown.is_empty() {
                bail!(
                    "{}: unknown setting(s) for this subcommand: {}",
                    file.path.display(),
                    unknown.join(", ")
                );
            }
        }
        Ok(())
    }

    /// `# key = value` lines for every resolved setting, then the command
    /// that reproduces them.
    pub fn header(&self, subcommand: &str) -> Vec<String> {
        let echo = self.echo.borrow();
        let mut lines: Vec<String> = echo
            .iter()
            .map(|(k, v)| if v.is_empty() { format!("{k} = true") } else { format!("{k} = {v}") })
            .collect();
        lines.push(format!("command = {}", self.command(subcommand)));
        lines
    }

    pub fn command(&self, subcommand: &str) -> String {
        let mut cmd = format!("kslyap {subcommand}");
        for (k, v) in self.echo.borrow().iter() {
            if k == "input" {
                continue;
            }
            cmd.push_str(&format!(" --{k}"));
            if !v.is_empty() {
                cmd.push(' ');
                cmd.push_str(v);
            }
        }
        for p in self.positional.borrow().iter() {
            cmd.push(' ');
            cmd.push_str(p);
        }
        cmd
    }
}

/// Comma-separated reals, e.g. `2,5,10`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealList(pub Vec<f64>);

impl FromStr for RealList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .and_then(|v| if v.is_empty() { Err("empty list".into()) } else { Ok(Self(v)) })
    }
}

impl Display for RealList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// `start:step:end`, inclusive of `end` up to rounding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeSpec {
    pub start: f64,
    pub step: f64,
    pub end: f64,
}

impl RangeSpec {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl FromStr for RangeSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err(format!("expected start:step:end, found `{s}`"));
        };
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number"));
        let r = Self {
            start: num(a)?,
            step: num(b)?,
            end: num(c)?,
        };
        if !(r.step > 0.0) || r.end < r.start {
            return Err(format!("`{s}` describes an empty range"));
        }
        Ok(r)
    }
}

impl Display for RangeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.step, self.end)
    }
}
