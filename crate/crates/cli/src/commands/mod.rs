mod dependence;
mod diagnose;
mod margins;
mod risk;
mod simulate;

use lapfield::covariance::SiteSet;
use lapfield::inference::Dataset;
use lapfield::io::{self, Config, Provenance};

use crate::args::Command;
use crate::output::{parse_file, required, CliError, CliResult};

pub fn run(command: &Command, config: &Config, prov: &Provenance) -> CliResult<()> {
    match command {
        Command::FitMargins(_) => margins::run(config, prov),
        Command::FitDependence(_) => dependence::run(config, prov),
        Command::Diagnose(_) => diagnose::run(config, prov),
        Command::Simulate(_) => simulate::run(config, prov, false),
        Command::Condsim(_) => simulate::run(config, prov, true),
        Command::Return(_) => risk::run(config, prov),
    }
}

fn load_sites(config: &Config) -> CliResult<SiteSet> {
    parse_file(required(&config.data.sites, "data.sites")?, io::parse_sites_csv)
}

/// Observations together with their sites, in column order.
fn load_data(config: &Config) -> CliResult<(Dataset, SiteSet)> {
    let sites = load_sites(config)?;
    let data = parse_file(required(&config.data.observations, "data.observations")?, io::parse_dataset_csv)?;
    let idx = data
        .site_ids()
        .iter()
        .map(|id| {
            sites
                .index_of(id)
                .ok_or_else(|| CliError::input(format!("observation column {id:?} is not in the sites file")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let sites = sites.subset(&idx)?;
    if data.n_times() == 0 {
        return Err(CliError::input("no complete observation rows"));
    }
    Ok((data, sites))
}
