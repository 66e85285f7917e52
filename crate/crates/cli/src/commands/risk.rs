use serde::Serialize;

use lapfield::io::{self, Config, Provenance, SCHEMA_VERSION};
use lapfield::risk::{MarginalModel, RiskEngine, RiskOptions, RiskReport, RETURN_PERIOD_CAP};

use crate::output::{emit, json, parse_file, required, CliResult};

/// Periods used when neither periods nor levels are requested.
const DEFAULT_PERIODS: [f64; 5] = [1.0, 10.0, 100.0, 1000.0, 10000.0];

#[derive(Serialize)]
struct Report<'a> {
    schema_version: u32,
    grid_size: usize,
    period_cap_years: f64,
    /// Level attaining each requested period.
    return_levels: Vec<RiskReport>,
    /// Period of each requested level.
    return_periods: Vec<RiskReport>,
    provenance: &'a Provenance,
}

pub fn run(config: &Config, prov: &Provenance) -> CliResult<()> {
    let r = &config.risk;
    let grid = parse_file(required(&r.grid, "risk.grid")?, io::parse_sites_csv)?;
    let model = parse_file(required(&r.model, "risk.model")?, io::parse_model_json)?.model(grid.clone())?;
    let margins = MarginalModel::new(parse_file(required(&r.margins, "risk.margins")?, io::parse_margins_json)?.tail);
    let engine = RiskEngine::new(&model, margins, grid, RiskOptions::default())?;

    let periods: Vec<f64> = if r.periods.is_empty() && r.levels.is_empty() {
        DEFAULT_PERIODS.to_vec()
    } else {
        r.periods.clone()
    };
    let mut return_levels = Vec::new();
    for &t in &periods {
        log::info!("return level for {t} years on {} sites", engine.grid_size());
        return_levels.push(engine.return_level(t)?);
    }
    let mut return_periods = Vec::new();
    for &x in &r.levels {
        return_periods.push(engine.return_period(x)?);
    }
    let report = Report {
        schema_version: SCHEMA_VERSION,
        grid_size: engine.grid_size(),
        period_cap_years: RETURN_PERIOD_CAP,
        return_levels,
        return_periods,
        provenance: prov,
    };
    emit(r.output.as_deref(), &json(&report))
}
