use std::fmt::Write;

use nalgebra::DMatrix;

use lapfield::field::DepType;
use lapfield::inference::empirical_pit;
use lapfield::io::{self, Config, Provenance};
use lapfield::tail::{model_lambda_u, pair_diagnostics, qq_points, qq_sum_transform, residual_coef_biv};

use super::load_data;
use crate::output::{csv_preamble, emit, num, parse_file, CliError, CliResult};

pub fn run(config: &Config, prov: &Provenance) -> CliResult<()> {
    let (data, sites) = load_data(config)?;
    let g = &config.diagnostics;
    let dir = g
        .output_dir
        .as_ref()
        .or(config.data.output_dir.as_ref())
        .ok_or_else(|| CliError::input("diagnostics.output_dir is not set (config file or flag)"))?;
    let uniform = empirical_pit(&data)?;
    let columns: Vec<Vec<f64>> = (0..data.n_sites()).map(|j| uniform.iter().map(|r| r[j]).collect()).collect();
    let pairs = pair_diagnostics(&columns, &sites, &g.thresholds, g.k)?;
    let model = match &g.model {
        Some(p) => Some(parse_file(p, io::parse_model_json)?.model(sites.clone())?),
        None => None,
    };
    let ids = sites.ids();

    let mut rho = csv_preamble(prov);
    rho.push_str("site_i,site_j,distance,rho_hat,rho_model\n");
    let mut lambda = csv_preamble(prov);
    lambda.push_str("site_i,site_j,distance,u,lambda_hat,joint,marginal,flagged,lambda_model\n");
    for p in &pairs {
        let r = model.as_ref().map(|m| m.sigma()[(p.i, p.j)]);
        let rho_model = match (r, model.as_ref().map(|m| m.dep_type())) {
            (Some(r), Some(DepType::Laplace)) => residual_coef_biv(r)?,
            (Some(r), Some(DepType::Gaussian)) => 0.5 * (1.0 + r),
            _ => f64::NAN,
        };
        let _ = writeln!(
            rho,
            "{},{},{},{},{}",
            ids[p.i],
            ids[p.j],
            num(p.distance),
            num(p.rho.unwrap_or(f64::NAN)),
            num(rho_model)
        );
        for l in &p.lambdas {
            let lm = match (&model, r) {
                (Some(m), Some(r)) => model_lambda_u(&corr2(r), l.u, m.dep_type())?,
                _ => f64::NAN,
            };
            let _ = writeln!(
                lambda,
                "{},{},{},{},{},{},{},{},{}",
                ids[p.i],
                ids[p.j],
                num(p.distance),
                num(l.u),
                num(l.value),
                l.joint,
                l.marginal,
                l.flagged,
                num(lm)
            );
        }
    }
    emit(Some(&dir.join("pairs.csv")), &rho)?;
    emit(Some(&dir.join("lambda.csv")), &lambda)?;

    if let Some(m) = &model {
        let values = qq_sum_transform(&uniform, m.sigma(), m.dep_type())?;
        let mut qq = csv_preamble(prov);
        qq.push_str("theoretical,empirical\n");
        for (t, e) in qq_points(&values, g.qq_threshold) {
            let _ = writeln!(qq, "{},{}", num(t), num(e));
        }
        emit(Some(&dir.join("qq.csv")), &qq)?;
    }
    Ok(())
}

fn corr2(r: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0])
}
