use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use lapfield::io::{Config, Provenance, SCHEMA_VERSION};

/// Exit code for malformed input (files, schemas, arguments).
pub const EXIT_INPUT: i32 = 2;
/// Exit code for numerical failures.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Lib(lapfield::error::Error),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Lib(e) if e.is_schema() => EXIT_INPUT,
            CliError::Lib(_) => EXIT_NUMERIC,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<lapfield::error::Error> for CliError {
    fn from(e: lapfield::error::Error) -> Self {
        CliError::Lib(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}

/// Reads a file and tags schema errors with its path.
pub fn parse_file<T>(path: &Path, parse: impl FnOnce(&str) -> lapfield::error::Result<T>) -> CliResult<T> {
    let text = read_file(path)?;
    parse(&text).map_err(|e| match e {
        lapfield::error::Error::Schema { line, message } => lapfield::error::Error::Schema {
            line,
            message: format!("{}: {message}", path.display()),
        }
        .into(),
        other => other.into(),
    })
}

pub fn provenance(command: &str, config: &Config) -> Provenance {
    let value = serde_json::to_value(config).expect("config serialises");
    let canonical = serde_json::to_string(&value).expect("config serialises");
    Provenance {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config_sha256: format!("{:x}", Sha256::digest(canonical.as_bytes())),
        config: value,
    }
}

/// Comment lines heading every CSV output; the library CSV readers skip
/// them.
pub fn csv_preamble(p: &Provenance) -> String {
    format!(
        "# lapfield {} schema_version={SCHEMA_VERSION}\n# command={} seed={} config_sha256={}\n# config={}\n",
        p.tool_version, p.command, p.seed, p.config_sha256, p.config
    )
}

/// Writes to `path`, or stdout when `None`.
pub fn emit(path: Option<&Path>, body: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
            }
            fs::write(p, body).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display())))?;
            log::info!("wrote {}", p.display());
            Ok(())
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::input(format!("cannot write to stdout: {e}")))
        }
    }
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serialises");
    s.push('\n');
    s
}

/// Shortest representation that round-trips.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

pub fn required<'a>(v: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    v.as_deref()
        .ok_or_else(|| CliError::input(format!("{key} is not set (config file or flag)")))
}

/// Rewrites relative paths of a file configuration against `base`.
pub fn resolve_paths(c: &mut Config, base: &Path) {
    let fix = |p: &mut Option<PathBuf>| {
        if let Some(v) = p {
            if v.is_relative() {
                *v = base.join(&*v);
            }
        }
    };
    fix(&mut c.data.sites);
    fix(&mut c.data.observations);
    fix(&mut c.data.output_dir);
    fix(&mut c.margins.output);
    fix(&mut c.dependence.margins);
    fix(&mut c.dependence.output);
    fix(&mut c.dependence.table);
    fix(&mut c.diagnostics.model);
    fix(&mut c.diagnostics.output_dir);
    fix(&mut c.simulate.model);
    fix(&mut c.simulate.margins);
    fix(&mut c.simulate.output);
    fix(&mut c.simulate.conditioning);
    fix(&mut c.risk.model);
    fix(&mut c.risk.margins);
    fix(&mut c.risk.grid);
    fix(&mut c.risk.output);
}
