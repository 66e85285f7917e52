use std::collections::BTreeMap;
use std::fmt::Write;

use lapfield::covariance::{Family, SiteSet};
use lapfield::field::DepType;
use lapfield::inference::{
    block_bootstrap, empirical_pit, fit_dependence, weibull_pit, DependenceOptions, FitResult,
};
use lapfield::io::{self, Config, ModelFile, PitMode, Provenance};

use super::load_data;
use crate::output::{csv_preamble, emit, json, num, parse_file, required, CliError, CliResult};

struct Row {
    family: Family,
    dep_type: DepType,
    anisotropic: bool,
    fit: Result<FitResult, String>,
}

pub fn run(config: &Config, prov: &Provenance) -> CliResult<()> {
    let (data, sites) = load_data(config)?;
    let d = &config.dependence;
    if d.families.is_empty() || d.types.is_empty() || d.anisotropy.is_empty() {
        return Err(CliError::input("dependence.families, types and anisotropy must be non-empty"));
    }
    let uniform = match d.pit {
        PitMode::Rank => empirical_pit(&data)?,
        PitMode::Margins => {
            let m = parse_file(required(&d.margins, "dependence.margins")?, io::parse_margins_json)?;
            weibull_pit(&data, &m.tail, sites.covariate())?
        }
    };

    let options = |family, dep_type, anisotropic| DependenceOptions {
        family,
        dep_type,
        anisotropic,
        prob_u: d.prob_u,
        kind: d.kind,
        nu_grid: d.nu_grid.clone(),
        restarts: d.restarts,
        max_evals: d.max_evals,
        seed: config.seed,
        ..DependenceOptions::default()
    };
    let mut rows = Vec::new();
    for &family in &d.families {
        for &anisotropic in &d.anisotropy {
            for &dep_type in &d.types {
                log::info!("fitting {family} {dep_type} anisotropic={anisotropic}");
                let fit = fit_dependence(&uniform, &sites, &options(family, dep_type, anisotropic));
                if let Err(e) = &fit {
                    log::warn!("{family} {dep_type} anisotropic={anisotropic}: {e}");
                }
                rows.push(Row {
                    family,
                    dep_type,
                    anisotropic,
                    fit: fit.map_err(|e| e.to_string()),
                });
            }
        }
    }
    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.fit.as_ref().ok().map(|f| (i, f.aic)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    let Some(best) = best else {
        let msg = rows
            .iter()
            .filter_map(|r| r.fit.as_ref().err().cloned())
            .next()
            .unwrap_or_default();
        return Err(lapfield::error::Error::Numeric(format!("every dependence fit failed; first error: {msg}")).into());
    };

    if let Some(path) = &d.table {
        emit(Some(path), &table(&rows, best, prov))?;
    }

    let fit = rows[best].fit.as_ref().expect("best row succeeded");
    let mut file = ModelFile::from_fit(fit);
    if d.bootstrap_reps >= 2 {
        file.se = Some(bootstrap(&uniform, &sites, fit, &options(fit.family, fit.dep_type, fit.anisotropic), config)?);
    }
    file.provenance = Some(prov.clone());
    emit(d.output.as_deref(), &json(&file))
}

fn bootstrap(
    uniform: &[Vec<f64>],
    sites: &SiteSet,
    fit: &FitResult,
    opts: &DependenceOptions,
    config: &Config,
) -> CliResult<BTreeMap<String, f64>> {
    let d = &config.dependence;
    let n = uniform.len();
    let opts = DependenceOptions {
        nu_grid: fit.nu.map_or_else(|| opts.nu_grid.clone(), |nu| vec![nu]),
        ..opts.clone()
    };
    let boot = block_bootstrap(n, d.block.min(n), d.bootstrap_reps, config.seed, |idx| {
        let sample: Vec<Vec<f64>> = idx.iter().map(|&i| uniform[i].clone()).collect();
        fit_dependence(&sample, sites, &opts).map(|f| f.params.values().copied().collect())
    })?;
    Ok(fit.params.keys().cloned().zip(boot.se).collect())
}

fn table(rows: &[Row], best: usize, prov: &Provenance) -> String {
    let mut out = csv_preamble(prov);
    out.push_str("family,type,anisotropic,scale,shape,theta,b,loglik,aic,dim,exceedances,n,best,error\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = write!(out, "{},{},{},", r.family, r.dep_type, r.anisotropic);
        match &r.fit {
            Ok(f) => {
                let s = &f.spec;
                let shape = if f.family == Family::Exponential { f64::NAN } else { s.shape };
                let (theta, b) = if f.anisotropic { (s.theta, s.b) } else { (f64::NAN, f64::NAN) };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},",
                    num(s.scale),
                    num(shape),
                    num(theta),
                    num(b),
                    num(f.loglik),
                    num(f.aic),
                    f.dim,
                    f.exceedances,
                    f.n,
                    i == best
                );
            }
            Err(e) => {
                let _ = writeln!(out, "NA,NA,NA,NA,NA,NA,NA,NA,NA,false,\"{}\"", e.replace('"', "'"));
            }
        }
    }
    out
}
