//! File formats: site and observation CSVs, conditioning values, model and
//! margin JSON documents, and the pipeline configuration.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::covariance::{CorrelationSpec, Family, SiteSet};
use crate::dist::WeibullTail;
use crate::error::{Error, Result};
use crate::field::{DepType, LaplaceFieldModel};
use crate::inference::{Dataset, FitResult};
use crate::tail::ExceedanceKind;

/// Version stamped into every JSON and CSV output.
pub const SCHEMA_VERSION: u32 = 1;

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    Error::schema(line, e.to_string())
}

fn parse_num(field: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::schema(Some(line), format!("{what}: {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::schema(Some(line), format!("{what}: {field:?} is not finite")));
    }
    Ok(v)
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::schema(Some(1), format!("missing column {name:?}")))
}

/// Sites CSV with columns `id,x,y,dist_sea_km` (any order).
pub fn parse_sites_csv(text: &str) -> Result<SiteSet> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let (ci, cx, cy, cc) = (
        header_index(&headers, "id")?,
        header_index(&headers, "x")?,
        header_index(&headers, "y")?,
        header_index(&headers, "dist_sea_km")?,
    );
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    let mut cov = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[ci].to_string();
        if id.is_empty() {
            return Err(Error::schema(Some(line), "empty site id"));
        }
        ids.push(id);
        coords.push([parse_num(&rec[cx], line, "x")?, parse_num(&rec[cy], line, "y")?]);
        cov.push(parse_num(&rec[cc], line, "dist_sea_km")?);
    }
    if ids.is_empty() {
        return Err(Error::schema(None, "no sites"));
    }
    SiteSet::new(ids, coords, cov).map_err(|e| Error::schema(None, e.to_string()))
}

/// Wide observations CSV `date,<site ids…>`; `NA` or empty cells mark
/// missing values and their rows are dropped.
pub fn parse_dataset_csv(text: &str) -> Result<Dataset> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.len() < 2 || !headers[0].eq_ignore_ascii_case("date") {
        return Err(Error::schema(Some(1), "expected header date,<site ids>"));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for id in &ids {
        if id.is_empty() || !seen.insert(id.as_str()) {
            return Err(Error::schema(Some(1), format!("empty or duplicate site id {id:?}")));
        }
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        times.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|f| {
                if f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") {
                    Ok(None)
                } else {
                    parse_num(f, line, "observation").map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let data = Dataset::from_rows(ids, times, rows)?;
    if data.dropped() > 0 {
        log::info!("dropped {} rows with missing values", data.dropped());
    }
    Ok(data)
}

/// Conditioning CSV `id,value`.
pub fn parse_conditioning_csv(text: &str) -> Result<Vec<(String, f64)>> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let (ci, cv) = (header_index(&headers, "id")?, header_index(&headers, "value")?);
    let mut out: Vec<(String, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[ci].to_string();
        if out.iter().any(|(o, _)| *o == id) {
            return Err(Error::schema(Some(line), format!("duplicate conditioning site {id:?}")));
        }
        out.push((id, parse_num(&rec[cv], line, "value")?));
    }
    Ok(out)
}

/// How an output was produced: command, seed and the resolved
/// configuration with its SHA-256.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
}

/// Fitted dependence model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub dep_type: DepType,
    pub spec: CorrelationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    /// Block-bootstrap standard errors of the fitted parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ModelFile {
    pub fn from_fit(fit: &FitResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dep_type: fit.dep_type,
            spec: fit.spec,
            fit: Some(fit.clone()),
            se: None,
            provenance: None,
        }
    }

    pub fn model(&self, sites: SiteSet) -> Result<LaplaceFieldModel> {
        LaplaceFieldModel::new(sites, self.spec, self.dep_type)
    }
}

/// Weibull margins as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginsFile {
    pub schema_version: u32,
    pub tail: WeibullTail,
    #[serde(default)]
    pub loglik: Option<f64>,
    #[serde(default)]
    pub exceedances: Option<usize>,
    /// Bootstrap standard errors of `gamma`, `delta0`, `delta1`.
    #[serde(default)]
    pub se: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub bootstrap_failures: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn check_version(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::schema(None, format!("unsupported schema_version {v}")));
    }
    Ok(())
}

fn json_error(e: serde_json::Error) -> Error {
    Error::schema(Some(e.line() as u64), e.to_string())
}

pub fn parse_model_json(text: &str) -> Result<ModelFile> {
    let m: ModelFile = serde_json::from_str(text).map_err(json_error)?;
    check_version(m.schema_version)?;
    m.spec
        .validate()
        .map_err(|e| Error::schema(None, e.to_string()))?;
    Ok(m)
}

pub fn parse_margins_json(text: &str) -> Result<MarginsFile> {
    let m: MarginsFile = serde_json::from_str(text).map_err(json_error)?;
    check_version(m.schema_version)?;
    let t = m.tail;
    WeibullTail::new(t.gamma, t.delta0, t.delta1, t.threshold_u)
        .map_err(|e| Error::schema(None, e.to_string()))?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub data: DataSection,
    pub margins: MarginsSection,
    pub dependence: DependenceSection,
    pub diagnostics: DiagnosticsSection,
    pub simulate: SimulateSection,
    pub risk: RiskSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 20_240_101,
            data: DataSection::default(),
            margins: MarginsSection::default(),
            dependence: DependenceSection::default(),
            diagnostics: DiagnosticsSection::default(),
            simulate: SimulateSection::default(),
            risk: RiskSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub sites: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarginsSection {
    /// Threshold in data units; overrides `threshold_prob`.
    pub threshold: Option<f64>,
    /// Pooled empirical quantile level used when no threshold is given.
    pub threshold_prob: f64,
    pub fit_delta1: bool,
    pub bootstrap_reps: usize,
    pub block: usize,
    pub output: Option<PathBuf>,
}

impl Default for MarginsSection {
    fn default() -> Self {
        Self {
            threshold: None,
            threshold_prob: 0.975,
            fit_delta1: true,
            bootstrap_reps: 100,
            block: 30,
            output: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PitMode {
    /// Empirical ranks.
    Rank,
    /// Fitted Weibull margins above the threshold, ranks below.
    Margins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DependenceSection {
    pub families: Vec<Family>,
    pub types: Vec<DepType>,
    pub anisotropy: Vec<bool>,
    pub prob_u: f64,
    pub kind: ExceedanceKind,
    pub nu_grid: Vec<f64>,
    pub restarts: usize,
    pub max_evals: usize,
    pub pit: PitMode,
    pub margins: Option<PathBuf>,
    pub bootstrap_reps: usize,
    pub block: usize,
    pub output: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

impl Default for DependenceSection {
    fn default() -> Self {
        Self {
            families: vec![Family::Exponential],
            types: vec![DepType::Laplace, DepType::Gaussian],
            anisotropy: vec![false],
            prob_u: 0.975,
            kind: ExceedanceKind::Max,
            nu_grid: crate::inference::MATERN_NU_GRID.to_vec(),
            restarts: 3,
            max_evals: 800,
            pit: PitMode::Rank,
            margins: None,
            bootstrap_reps: 0,
            block: 30,
            output: None,
            table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub thresholds: Vec<f64>,
    pub k: usize,
    pub model: Option<PathBuf>,
    /// Plotting-position level above which QQ points are emitted.
    pub qq_threshold: f64,
    pub output_dir: Option<PathBuf>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            thresholds: vec![0.9, 0.95, 0.98, 0.99, 0.995],
            k: 40,
            model: None,
            qq_threshold: 0.9,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub model: Option<PathBuf>,
    /// Back-transform to data units with these margins when set.
    pub margins: Option<PathBuf>,
    pub n: usize,
    pub output: Option<PathBuf>,
    pub conditioning: Option<PathBuf>,
    /// Single-site conditioning: site id and level in data units.
    pub site: Option<String>,
    pub level: Option<f64>,
    /// Single-site conditioning by return period instead of level.
    pub period_years: Option<f64>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            model: None,
            margins: None,
            n: 1000,
            output: None,
            conditioning: None,
            site: None,
            level: None,
            period_years: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskSection {
    pub model: Option<PathBuf>,
    pub margins: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub periods: Vec<f64>,
    pub levels: Vec<f64>,
    pub output: Option<PathBuf>,
}

pub fn parse_config_toml(text: &str) -> Result<Config> {
    let c: Config = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
        Error::schema(line, e.message().to_string())
    })?;
    c.validate()?;
    Ok(c)
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::schema(None, m));
        let p = |x: f64| x > 0.0 && x < 1.0;
        if !p(self.margins.threshold_prob) {
            return bad(format!("margins.threshold_prob {} outside (0,1)", self.margins.threshold_prob));
        }
        if !p(self.dependence.prob_u) {
            return bad(format!("dependence.prob_u {} outside (0,1)", self.dependence.prob_u));
        }
        if let Some(t) = self.margins.threshold {
            if !(t > 0.0) || !t.is_finite() {
                return bad(format!("margins.threshold {t} must be > 0"));
            }
        }
        if self.diagnostics.thresholds.iter().any(|&u| !p(u)) {
            return bad("diagnostics.thresholds must lie in (0,1)".into());
        }
        if !p(self.diagnostics.qq_threshold) && self.diagnostics.qq_threshold != 0.0 {
            return bad("diagnostics.qq_threshold must lie in [0,1)".into());
        }
        if self.margins.block == 0 || self.dependence.block == 0 {
            return bad("bootstrap block length must be >= 1".into());
        }
        if self.dependence.nu_grid.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return bad("dependence.nu_grid values must be > 0".into());
        }
        if self.risk.periods.iter().chain(&self.risk.levels).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return bad("risk periods and levels must be > 0".into());
        }
        Ok(())
    }
}
