use std::path::{Path, PathBuf};
use std::str::FromStr;

use phaseless::bench::KvConfig;
use phaseless::Error;

use crate::Common;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Dispatch,
    Solver,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Dispatch => 3,
            Kind::Solver => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: Kind::Config, message: message.into() }
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Self { kind: Kind::Solver, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::InvalidInput(_) | Error::Config(_) | Error::Parse(_) | Error::Io(_) | Error::Json(_) => Kind::Config,
            Error::ModelMismatch(_) | Error::DimensionMismatch { .. } => Kind::Dispatch,
            _ => Kind::Solver,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Config file, then `--set` overrides, then `--seed` / `--jobs`.
pub struct Settings {
    kv: KvConfig,
    pub out: PathBuf,
}

impl Settings {
    pub fn load(c: &Common, allowed: &[&str]) -> CliResult<Self> {
        let mut kv = match &c.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
                KvConfig::parse(&text)?
            }
            None => KvConfig::default(),
        };
        for s in &c.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got `{s}`")))?;
            kv.set(k.trim(), v.trim());
        }
        if let Some(seed) = c.seed {
            kv.set("seed", seed.to_string());
        }
        if let Some(j) = c.jobs {
            kv.set("jobs", j.to_string());
        }
        kv.check_keys(allowed)?;
        let out = match &c.out {
            Some(p) => p.clone(),
            None => kv.get("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
        };
        Ok(Self { kv, out })
    }

    pub fn kv(&self) -> &KvConfig {
        &self.kv
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.kv.get(key)
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.kv.get(key).unwrap_or(default)
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        Ok(self.kv.parsed(key)?)
    }

    pub fn or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.kv.parsed(key)?.unwrap_or(default))
    }

    pub fn flag(&self, key: &str, default: bool) -> CliResult<bool> {
        Ok(self.kv.flag(key)?.unwrap_or(default))
    }

    /// Comma list, or a half-open range `a..b`.
    pub fn indices(&self, key: &str) -> CliResult<Option<Vec<usize>>> {
        let Some(v) = self.kv.get(key) else { return Ok(None) };
        if let Some((a, b)) = v.split_once("..") {
            let parse = |s: &str| {
                s.trim().parse::<usize>().map_err(|_| CliError::config(format!("bad range for `{key}`: `{v}`")))
            };
            return Ok(Some((parse(a)?..parse(b)?).collect()));
        }
        Ok(self.kv.list(key)?)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.kv.get(key).map(PathBuf::from)
    }

    pub fn create_out(&self) -> CliResult<&Path> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(&self.out)
    }
}

pub fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| CliError::config(format!("cannot write {}: {e}", p.display())))
}

pub fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}
