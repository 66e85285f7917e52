use std::fmt::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lapfield::covariance::SiteSet;
use lapfield::field::{simulate_conditional, LaplaceFieldModel};
use lapfield::io::{self, Config, Provenance, SimulateSection};
use lapfield::risk::MarginalModel;

use super::load_sites;
use crate::output::{csv_preamble, emit, num, parse_file, required, CliError, CliResult};

pub fn run(config: &Config, prov: &Provenance, conditional: bool) -> CliResult<()> {
    let s = &config.simulate;
    let sites = load_sites(config)?;
    let model = parse_file(required(&s.model, "simulate.model")?, io::parse_model_json)?.model(sites.clone())?;
    let margins = match &s.margins {
        Some(p) => Some(MarginalModel::new(parse_file(p, io::parse_margins_json)?.tail)),
        None => None,
    };
    if s.n == 0 {
        return Err(CliError::input("simulate.n must be >= 1"));
    }
    let rows = if conditional {
        conditional_rows(&model, &sites, margins.as_ref(), s, config.seed)?
    } else {
        let z = model.simulate_seeded(config.seed, s.n);
        match &margins {
            Some(m) => to_data_units(&z, m, &model, &[])?,
            None => z,
        }
    };

    let mut out = csv_preamble(prov);
    out.push_str("draw");
    for id in sites.ids() {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        let _ = write!(out, "{}", i + 1);
        for v in r {
            let _ = write!(out, ",{}", num(*v));
        }
        out.push('\n');
    }
    emit(s.output.as_deref(), &out)
}

/// Back-transforms standard-margin draws, leaving the columns in `keep`
/// untouched.
fn to_data_units(
    z: &[Vec<f64>],
    m: &MarginalModel,
    model: &LaplaceFieldModel,
    keep: &[usize],
) -> CliResult<Vec<Vec<f64>>> {
    let cov = model.sites().covariate();
    let dep = model.dep_type();
    z.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    if keep.contains(&j) {
                        Ok(v)
                    } else {
                        Ok(m.from_standard(v, cov[j], dep)?)
                    }
                })
                .collect()
        })
        .collect()
}

/// Conditioning values in the units of the output: m/s with margins,
/// the standard margin otherwise.
fn conditioning(
    s: &SimulateSection,
    sites: &SiteSet,
    margins: Option<&MarginalModel>,
) -> CliResult<Vec<(usize, f64)>> {
    let given: Vec<(String, f64)> = if let Some(p) = &s.conditioning {
        parse_file(p, io::parse_conditioning_csv)?
    } else if let Some(id) = &s.site {
        let j = site_index(sites, id)?;
        let v = match (s.level, s.period_years) {
            (Some(v), _) => v,
            (None, Some(t)) => {
                let m = margins.ok_or_else(|| CliError::input("simulate.period_years needs simulate.margins"))?;
                if !(t > 0.0) {
                    return Err(CliError::input(format!("period_years must be > 0, got {t}")));
                }
                m.tail.inverse_survival(1.0 / (365.25 * t), sites.covariate()[j])?
            }
            (None, None) => return Err(CliError::input("simulate.site needs simulate.level or simulate.period_years")),
        };
        vec![(id.clone(), v)]
    } else {
        return Err(CliError::input("condsim needs simulate.conditioning or simulate.site"));
    };
    if given.is_empty() {
        return Err(CliError::input("conditioning file lists no sites"));
    }
    given
        .into_iter()
        .map(|(id, v)| Ok((site_index(sites, &id)?, v)))
        .collect()
}

fn site_index(sites: &SiteSet, id: &str) -> CliResult<usize> {
    sites
        .index_of(id)
        .ok_or_else(|| CliError::input(format!("conditioning site {id:?} is not in the site set")))
}

fn conditional_rows(
    model: &LaplaceFieldModel,
    sites: &SiteSet,
    margins: Option<&MarginalModel>,
    s: &SimulateSection,
    seed: u64,
) -> CliResult<Vec<Vec<f64>>> {
    let given = conditioning(s, sites, margins)?;
    let d = sites.len();
    let cond_idx: Vec<usize> = given.iter().map(|g| g.0).collect();
    let cov = sites.covariate();
    let x1: Vec<f64> = given
        .iter()
        .map(|&(j, v)| match margins {
            Some(m) => m.to_standard(v, cov[j], model.dep_type()),
            None => Ok(v),
        })
        .collect::<lapfield::error::Result<_>>()?;
    let free: Vec<usize> = (0..d).filter(|j| !cond_idx.contains(j)).collect();
    let draws = if free.is_empty() {
        vec![Vec::new(); s.n]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        simulate_conditional(model, &cond_idx, &x1, &mut rng, s.n)?
    };
    let mut rows = Vec::with_capacity(s.n);
    for draw in draws {
        let mut row = vec![0.0; d];
        for (&j, v) in free.iter().zip(draw) {
            row[j] = v;
        }
        rows.push(row);
    }
    let mut rows = match margins {
        Some(m) => to_data_units(&rows, m, model, &cond_idx)?,
        None => rows,
    };
    for r in &mut rows {
        for &(j, v) in &given {
            r[j] = v;
        }
    }
    Ok(rows)
}
