//! Estimation: empirical PIT, censored Weibull margins, the censored
//! dependence likelihood and its maximisation, block bootstrap.

mod bootstrap;
mod fit;
mod likelihood;
mod margins;
mod pit;

pub use bootstrap::{block_bootstrap, block_resample_indices, BootstrapResult};
pub use fit::{
    fit_dependence, DependenceOptions, FitResult, MATERN_NU_GRID,
};
pub use likelihood::{
    censored_loglik, censored_loglik_with_pa, exceedance_prob_mc, exceedance_prob_pa, LikOptions,
    PaMethod, PaResult,
};
pub use margins::{fit_weibull_margins, MarginFit, MarginOptions};
pub use pit::{empirical_pit, rank_pit, to_margin, weibull_pit};

use crate::error::{Error, Result};

/// Observations (time × sites) with missing rows already removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    site_ids: Vec<String>,
    times: Vec<String>,
    obs: Vec<Vec<f64>>,
    dropped: usize,
}

impl Dataset {
    /// Builds a dataset, dropping every row with a missing or non-finite
    /// component.
    pub fn from_rows(
        site_ids: Vec<String>,
        times: Vec<String>,
        rows: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if times.len() != rows.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: times.len(),
            });
        }
        let d = site_ids.len();
        let mut kept_t = Vec::with_capacity(rows.len());
        let mut obs = Vec::with_capacity(rows.len());
        let mut dropped = 0;
        for (t, row) in times.into_iter().zip(rows) {
            if row.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: row.len(),
                });
            }
            if row.iter().all(|v| v.is_some_and(f64::is_finite)) {
                obs.push(row.into_iter().map(Option::unwrap).collect());
                kept_t.push(t);
            } else {
                dropped += 1;
            }
        }
        Ok(Self {
            site_ids,
            times: kept_t,
            obs,
            dropped,
        })
    }

    /// Dense data with generated time labels.
    pub fn from_dense(site_ids: Vec<String>, obs: Vec<Vec<f64>>) -> Result<Self> {
        let times = (0..obs.len()).map(|i| i.to_string()).collect();
        let rows = obs
            .into_iter()
            .map(|r| r.into_iter().map(Some).collect())
            .collect();
        Self::from_rows(site_ids, times, rows)
    }

    pub fn site_ids(&self) -> &[String] {
        &self.site_ids
    }

    pub fn times(&self) -> &[String] {
        &self.times
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.obs
    }

    pub fn n_times(&self) -> usize {
        self.obs.len()
    }

    pub fn n_sites(&self) -> usize {
        self.site_ids.len()
    }

    /// Rows removed for missing values.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.obs.iter().map(|r| r[j]).collect()
    }

    /// Dataset made of the given rows, repeats allowed.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            site_ids: self.site_ids.clone(),
            times: idx.iter().map(|&i| self.times[i].clone()).collect(),
            obs: idx.iter().map(|&i| self.obs[i].clone()).collect(),
            dropped: 0,
        }
    }

    /// Dataset restricted to the given site columns.
    pub fn select_sites(&self, idx: &[usize]) -> Self {
        Self {
            site_ids: idx.iter().map(|&j| self.site_ids[j].clone()).collect(),
            times: self.times.clone(),
            obs: self
                .obs
                .iter()
                .map(|r| idx.iter().map(|&j| r[j]).collect())
                .collect(),
            dropped: self.dropped,
        }
    }
}
