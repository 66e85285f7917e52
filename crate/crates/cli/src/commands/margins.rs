use std::collections::BTreeMap;

use lapfield::inference::{block_bootstrap, fit_weibull_margins, Dataset, MarginOptions};
use lapfield::io::{Config, MarginsFile, Provenance, SCHEMA_VERSION};

use super::load_data;
use crate::output::{emit, json, CliResult};

pub fn run(config: &Config, prov: &Provenance) -> CliResult<()> {
    let (data, sites) = load_data(config)?;
    let m = &config.margins;
    let u = match m.threshold {
        Some(u) => u,
        None => pooled_quantile(&data, m.threshold_prob),
    };
    log::info!("threshold {u} over {} rows at {} sites", data.n_times(), data.n_sites());
    let opts = MarginOptions {
        fit_delta1: m.fit_delta1,
        ..MarginOptions::default()
    };
    let covariate = sites.covariate();
    let fit = fit_weibull_margins(&data, u, covariate, &opts)?;

    let (se, failures) = if m.bootstrap_reps >= 2 {
        let n = data.n_times();
        let boot = block_bootstrap(n, m.block.min(n), m.bootstrap_reps, config.seed, |idx| {
            fit_weibull_margins(&data.select_rows(idx), u, covariate, &opts)
                .map(|f| vec![f.tail.gamma, f.tail.delta0, f.tail.delta1])
        })?;
        let names = ["gamma", "delta0", "delta1"];
        let se: BTreeMap<String, f64> = names.iter().map(|s| s.to_string()).zip(boot.se).collect();
        (Some(se), Some(boot.failures))
    } else {
        (None, None)
    };

    let file = MarginsFile {
        schema_version: SCHEMA_VERSION,
        tail: fit.tail,
        loglik: Some(fit.loglik),
        exceedances: Some(fit.exceedances),
        se,
        bootstrap_failures: failures,
        provenance: Some(prov.clone()),
    };
    emit(m.output.as_deref(), &json(&file))
}

/// Type-7 empirical quantile of all observations pooled over sites.
fn pooled_quantile(data: &Dataset, p: f64) -> f64 {
    let mut v: Vec<f64> = data.rows().iter().flatten().copied().collect();
    v.sort_by(f64::total_cmp);
    let h = p * (v.len() - 1) as f64;
    let (i, f) = (h.floor() as usize, h.fract());
    if i + 1 < v.len() {
        v[i] + f * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}
