//! Critical values of the detector by Monte-Carlo simulation of
//!
//! ```text
//! L(m, T) = max_{k=1..T} m² / (m + k) · (W(m+k) − (m+k)/m · W(m)) / Σ_{t=1}^{m} |W(t) − (t/m) W(m)|
//! ```
//!
//! where `W` is a Gaussian random walk. Replication `r` draws its normals
//! from substream `r` of the request seed, so tables do not depend on the
//! number of worker threads.

use std::path::Path;

use log::{debug, warn};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::io::{self, FormatError};
use crate::rng::substream;

#[derive(Debug, Error)]
pub enum QuantileError {
    #[error("invalid quantile request: {0}")]
    InvalidRequest(String),

    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRequest {
    pub m: usize,
    /// Largest monitoring index `T` in the maximum.
    pub horizon: usize,
    pub alphas: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
}

impl QuantileRequest {
    pub fn validate(&self) -> Result<(), QuantileError> {
        if self.m < 2 {
            return Err(QuantileError::InvalidRequest(format!(
                "m must be at least 2, got {}",
                self.m
            )));
        }
        if self.horizon < 1 {
            return Err(QuantileError::InvalidRequest("T must be at least 1".into()));
        }
        if self.replications < 1 {
            return Err(QuantileError::InvalidRequest(
                "replications must be at least 1".into(),
            ));
        }
        if self.alphas.is_empty() {
            return Err(QuantileError::InvalidRequest(
                "at least one alpha is required".into(),
            ));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(QuantileError::InvalidRequest(format!(
                "alpha must lie in (0, 1), got {a}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileRow {
    pub m: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub quantile: f64,
    pub replications: usize,
    pub seed: u64,
}

impl QuantileRow {
    fn same_key(&self, other: &QuantileRow) -> bool {
        self.m == other.m
            && self.horizon == other.horizon
            && self.alpha == other.alpha
            && self.replications == other.replications
            && self.seed == other.seed
    }
}

/// Critical values keyed by `(m, T, alpha, replications, seed)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantileTable {
    rows: Vec<QuantileRow>,
}

impl QuantileTable {
    pub fn rows(&self) -> &[QuantileRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Inserts a row, replacing any row with the same key.
    pub fn insert(&mut self, row: QuantileRow) {
        match self.rows.iter_mut().find(|r| r.same_key(&row)) {
            Some(existing) => *existing = row,
            None => self.rows.push(row),
        }
    }

    pub fn merge(&mut self, other: &QuantileTable) {
        for r in &other.rows {
            self.insert(*r);
        }
    }

    pub fn get(
        &self,
        m: usize,
        horizon: usize,
        alpha: f64,
        replications: usize,
        seed: u64,
    ) -> Option<&QuantileRow> {
        let key = QuantileRow {
            m,
            horizon,
            alpha,
            quantile: 0.0,
            replications,
            seed,
        };
        self.rows.iter().find(|r| r.same_key(&key))
    }

    /// Best available critical value for level `alpha`: a row with training
    /// length `m` if one exists, otherwise any row for `alpha` (the limit is
    /// pivotal). Ties go to the row with the most replications.
    pub fn threshold_for(&self, alpha: f64, m: Option<usize>) -> Option<f64> {
        let pick = |rows: Vec<&QuantileRow>| {
            rows.into_iter()
                .max_by_key(|r| (r.replications, r.horizon))
                .map(|r| r.quantile)
        };
        if let Some(m) = m {
            let exact: Vec<_> = self
                .rows
                .iter()
                .filter(|r| r.alpha == alpha && r.m == m)
                .collect();
            if !exact.is_empty() {
                return pick(exact);
            }
        }
        pick(self.rows.iter().filter(|r| r.alpha == alpha).collect())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        io::read_quantile_table(path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        io::write_quantile_table(self, path)
    }
}

/// `L(m, T)` from explicit increments `N_1..N_{m+T}`. Returns `None` when the
/// denominator vanishes.
pub fn l_statistic(m: usize, horizon: usize, normals: &[f64]) -> Option<f64> {
    assert!(m >= 2 && horizon >= 1);
    assert_eq!(normals.len(), m + horizon, "need m + T increments");
    let mf = m as f64;
    let mut walk = Vec::with_capacity(normals.len());
    let mut acc = 0.0;
    for &x in normals {
        acc += x;
        walk.push(acc);
    }
    let w_m = walk[m - 1];
    let denom: f64 = (1..=m)
        .map(|t| (walk[t - 1] - t as f64 / mf * w_m).abs())
        .sum();
    if denom == 0.0 {
        return None;
    }
    let best = (1..=horizon)
        .map(|k| {
            let mk = (m + k) as f64;
            mf * mf / mk * (walk[m + k - 1] - mk / mf * w_m)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Some(best / denom)
}

/// One draw of `L(m, T)` for replication `replication` of `seed`.
pub fn simulate_l(m: usize, horizon: usize, seed: u64, replication: u64) -> f64 {
    let mut rng = substream(seed, replication);
    let mut normals = vec![0.0; m + horizon];
    loop {
        for x in normals.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        match l_statistic(m, horizon, &normals) {
            Some(v) => return v,
            None => warn!(
                "zero denominator in L(m={m}, T={horizon}) replication {replication}; redrawing"
            ),
        }
    }
}

/// `replications` draws of `L(m, T)`, in replication order.
pub fn simulate_draws(m: usize, horizon: usize, replications: usize, seed: u64) -> Vec<f64> {
    (0..replications)
        .into_par_iter()
        .with_min_len(64)
        .map(|r| simulate_l(m, horizon, seed, r as u64))
        .collect()
}

/// Nearest-rank empirical upper quantile: the `⌈(1−α)R⌉`-th order statistic
/// of an ascending sample.
pub fn nearest_rank(sorted: &[f64], alpha: f64) -> f64 {
    let r = sorted.len();
    assert!(r > 0);
    // Guard against (1 − α)·R landing a hair above an integer.
    let rank = ((1.0 - alpha) * r as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(r) - 1]
}

pub fn quantiles_of_l(req: &QuantileRequest) -> Result<QuantileTable, QuantileError> {
    req.validate()?;
    debug!(
        "simulating L(m={}, T={}) with {} replications, seed {}",
        req.m, req.horizon, req.replications, req.seed
    );
    let mut draws = simulate_draws(req.m, req.horizon, req.replications, req.seed);
    draws.sort_by(f64::total_cmp);
    let mut table = QuantileTable::default();
    for &alpha in &req.alphas {
        table.insert(QuantileRow {
            m: req.m,
            horizon: req.horizon,
            alpha,
            quantile: nearest_rank(&draws, alpha),
            replications: req.replications,
            seed: req.seed,
        });
    }
    Ok(table)
}

/// Looks the request up in the CSV cache at `path`, simulating and writing
/// back only the missing levels.
pub fn quantiles_cached(
    req: &QuantileRequest,
    path: impl AsRef<Path>,
) -> Result<QuantileTable, QuantileError> {
    req.validate()?;
    let path = path.as_ref();
    let mut cache = if path.exists() {
        QuantileTable::read(path)?
    } else {
        QuantileTable::default()
    };
    let missing: Vec<f64> = req
        .alphas
        .iter()
        .copied()
        .filter(|&a| {
            cache
                .get(req.m, req.horizon, a, req.replications, req.seed)
                .is_none()
        })
        .collect();
    if !missing.is_empty() {
        let fresh = quantiles_of_l(&QuantileRequest {
            alphas: missing,
            ..req.clone()
        })?;
        cache.merge(&fresh);
        cache.write(path)?;
    }
    let mut out = QuantileTable::default();
    for &a in &req.alphas {
        if let Some(r) = cache.get(req.m, req.horizon, a, req.replications, req.seed) {
            out.insert(*r);
        }
    }
    Ok(out)
}
