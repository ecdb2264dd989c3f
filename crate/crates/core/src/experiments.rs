//! Monte-Carlo harnesses for the false-alarm rate and the power of the
//! detector on synthetic streams.
//!
//! Each replication generates one stream, computes its largest eigenvalues
//! once and evaluates every requested level on that same eigenvalue path, so
//! rejection regions are nested across levels. Replication seeds depend only
//! on `(seed, n, m, replication)`; power cells with different `δ` or `k*`
//! therefore share their noise, direction and strength draws.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::detector::{DetectorError, DetectorState};
use crate::eigen::{largest_eigenvalue, EigenOptions};
use crate::io::{format_f64, FormatError};
use crate::quantiles::QuantileTable;
use crate::rng::derive_seed;
use crate::synth::{SignalLaw, SignalSpec, StreamGenerator, SynthError, WignerStreamSpec};

pub const RESULTS_HEADER: [&str; 11] = [
    "experiment",
    "m",
    "n",
    "law",
    "alpha",
    "delta",
    "kstar",
    "value",
    "metric",
    "replications",
    "seed",
];

const PHI_LABEL: u64 = 0x5048_4921;
const NOISE_LABEL: u64 = 0x4E4F_4953;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),

    #[error("no critical value for alpha = {alpha} (m = {m})")]
    MissingQuantile { alpha: f64, m: usize },

    #[error(transparent)]
    Synth(#[from] SynthError),

    #[error(transparent)]
    Detector(#[from] DetectorError),

    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub m_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub alphas: Vec<f64>,
    pub law: SignalLaw,
    /// Post-change strengths live on `[1, 1 + δ]`; power runs only.
    pub delta_grid: Vec<f64>,
    /// Change after observation `m + k*`; power runs only.
    pub kstar_grid: Vec<usize>,
    pub replications: usize,
    /// Monitoring horizon in multiples of `m` (after `k*` for power runs).
    pub horizon_factor: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub phi_range: (f64, f64),
}

impl ExperimentPlan {
    pub fn new(
        m_grid: Vec<usize>,
        n_grid: Vec<usize>,
        alphas: Vec<f64>,
        law: SignalLaw,
        replications: usize,
        seed: u64,
    ) -> Self {
        Self {
            m_grid,
            n_grid,
            alphas,
            law,
            delta_grid: Vec::new(),
            kstar_grid: Vec::new(),
            replications,
            horizon_factor: 2,
            seed,
            burn_in: 50,
            phi_range: (-0.5, 0.5),
        }
    }

    pub fn with_power_grid(mut self, delta_grid: Vec<f64>, kstar_grid: Vec<usize>) -> Self {
        self.delta_grid = delta_grid;
        self.kstar_grid = kstar_grid;
        self
    }

    fn validate(&self, power: bool) -> Result<(), ExperimentError> {
        let bad = |msg: &str| Err(ExperimentError::InvalidPlan(msg.into()));
        if self.m_grid.is_empty() || self.n_grid.is_empty() || self.alphas.is_empty() {
            return bad("m, n and alpha grids must be nonempty");
        }
        if self.m_grid.iter().any(|&m| m < 2) {
            return bad("every m must be at least 2");
        }
        if self.n_grid.contains(&0) {
            return bad("every n must be positive");
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("alphas must lie in (0, 1)");
        }
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.horizon_factor == 0 {
            return bad("horizon factor must be at least 1");
        }
        if power {
            if self.delta_grid.is_empty() || self.kstar_grid.is_empty() {
                return bad("power runs need nonempty delta and k* grids");
            }
            if self.delta_grid.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return bad("deltas must be positive");
            }
        }
        Ok(())
    }

    fn wigner_spec(&self, n: usize, m: usize, rep: usize) -> WignerStreamSpec {
        WignerStreamSpec {
            n,
            phi_seed: derive_seed(self.seed, &[PHI_LABEL, n as u64]),
            noise_seed: derive_seed(self.seed, &[NOISE_LABEL, n as u64, m as u64, rep as u64]),
            burn_in: self.burn_in,
            phi_range: self.phi_range,
        }
    }
}

/// Source of critical values.
#[derive(Debug, Clone, PartialEq)]
pub enum Thresholds {
    /// Looked up per level, preferring rows with the cell's training length.
    Table(QuantileTable),
    /// One value for every level (e.g. `+∞` to disable alarms).
    Constant(f64),
}

impl Thresholds {
    pub fn lookup(&self, alpha: f64, m: usize) -> Result<f64, ExperimentError> {
        match self {
            Thresholds::Constant(q) => Ok(*q),
            Thresholds::Table(t) => t
                .threshold_for(alpha, Some(m))
                .ok_or(ExperimentError::MissingQuantile { alpha, m }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Pfa,
    Power,
}

impl ExperimentKind {
    pub fn id(&self) -> &'static str {
        match self {
            ExperimentKind::Pfa => "pfa",
            ExperimentKind::Power => "power",
        }
    }
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: ExperimentKind,
    pub m: usize,
    pub n: usize,
    pub law: String,
    pub alpha: f64,
    pub delta: Option<f64>,
    pub kstar: Option<usize>,
    pub value: f64,
    pub metric: String,
    pub replications: usize,
    pub seed: u64,
}

/// First alarm index for each threshold on one eigenvalue path.
fn alarm_times<I>(
    train: &[f64],
    n: usize,
    monitoring: I,
    thresholds: &[f64],
) -> Result<Vec<Option<usize>>, DetectorError>
where
    I: IntoIterator<Item = f64>,
{
    let mut state = DetectorState::train(train, n, f64::INFINITY)?;
    let mut hits = vec![None; thresholds.len()];
    let mut pending = thresholds.len();
    for lambda in monitoring {
        if pending == 0 {
            break;
        }
        let g = state.observe(lambda)?;
        for (hit, &q) in hits.iter_mut().zip(thresholds) {
            if hit.is_none() && g > q {
                *hit = Some(state.k());
                pending -= 1;
            }
        }
    }
    Ok(hits)
}

fn replicate(
    wspec: &WignerStreamSpec,
    sspec: &SignalSpec,
    m: usize,
    horizon: usize,
    thresholds: &[f64],
    eigen: &EigenOptions,
) -> Result<Vec<Option<usize>>, ExperimentError> {
    let mut generator = StreamGenerator::new(wspec, sspec, m)?;
    let mut train = Vec::with_capacity(m);
    for _ in 0..m {
        let mat = generator.next_observation().matrix;
        train.push(largest_eigenvalue(&mat, eigen).map_err(DetectorError::from)?);
    }
    let mut failure = None;
    let monitoring =
        generator
            .take(horizon)
            .map_while(|mat| match largest_eigenvalue(&mat, eigen) {
                Ok(l) => Some(l),
                Err(e) => {
                    failure = Some(e);
                    None
                }
            });
    let hits = alarm_times(&train, wspec.n, monitoring, thresholds)?;
    match failure {
        Some(e) => Err(DetectorError::from(e).into()),
        None => Ok(hits),
    }
}

fn run_cell(
    plan: &ExperimentPlan,
    sspec: &SignalSpec,
    m: usize,
    n: usize,
    horizon: usize,
    thresholds: &[f64],
) -> Result<Vec<Vec<Option<usize>>>, ExperimentError> {
    let eigen = EigenOptions::default();
    (0..plan.replications)
        .into_par_iter()
        .map(|rep| {
            replicate(
                &plan.wigner_spec(n, m, rep),
                sspec,
                m,
                horizon,
                thresholds,
                &eigen,
            )
        })
        .collect()
}

fn resolve(
    plan: &ExperimentPlan,
    thresholds: &Thresholds,
    m: usize,
) -> Result<Vec<f64>, ExperimentError> {
    plan.alphas
        .iter()
        .map(|&a| thresholds.lookup(a, m))
        .collect()
}

/// Proportion of false alarms on subcritical streams, per `(m, n, alpha)`.
pub fn run_pfa(
    plan: &ExperimentPlan,
    thresholds: &Thresholds,
) -> Result<Vec<ResultRow>, ExperimentError> {
    plan.validate(false)?;
    let sspec = SignalSpec::subcritical(plan.law.clone());
    let mut rows = Vec::new();
    for &m in &plan.m_grid {
        let qs = resolve(plan, thresholds, m)?;
        for &n in &plan.n_grid {
            let runs = run_cell(plan, &sspec, m, n, plan.horizon_factor * m, &qs)?;
            for (a, &alpha) in plan.alphas.iter().enumerate() {
                let alarms = runs.iter().filter(|r| r[a].is_some()).count();
                rows.push(ResultRow {
                    experiment: ExperimentKind::Pfa,
                    m,
                    n,
                    law: plan.law.id().to_string(),
                    alpha,
                    delta: None,
                    kstar: None,
                    value: alarms as f64 / plan.replications as f64,
                    metric: "pfa".into(),
                    replications: plan.replications,
                    seed: plan.seed,
                });
            }
        }
    }
    Ok(rows)
}

/// Alarm frequency and mean detection delay on streams with a change after
/// `m + k*`, per `(m, n, alpha, δ, k*)`.
pub fn run_power(
    plan: &ExperimentPlan,
    thresholds: &Thresholds,
) -> Result<Vec<ResultRow>, ExperimentError> {
    plan.validate(true)?;
    let mut rows = Vec::new();
    for &m in &plan.m_grid {
        let qs = resolve(plan, thresholds, m)?;
        for &n in &plan.n_grid {
            for &delta in &plan.delta_grid {
                for &kstar in &plan.kstar_grid {
                    let sspec = SignalSpec::supercritical(plan.law.clone(), delta, kstar);
                    let horizon = kstar + plan.horizon_factor * m;
                    let runs = run_cell(plan, &sspec, m, n, horizon, &qs)?;
                    for (a, &alpha) in plan.alphas.iter().enumerate() {
                        let hits: Vec<usize> = runs.iter().filter_map(|r| r[a]).collect();
                        let power = hits.len() as f64 / plan.replications as f64;
                        let delay = if hits.is_empty() {
                            f64::NAN
                        } else {
                            hits.iter().map(|&k| k as f64 - kstar as f64).sum::<f64>()
                                / hits.len() as f64
                        };
                        for (metric, value) in [("power", power), ("mean_delay", delay)] {
                            rows.push(ResultRow {
                                experiment: ExperimentKind::Power,
                                m,
                                n,
                                law: plan.law.id().to_string(),
                                alpha,
                                delta: Some(delta),
                                kstar: Some(kstar),
                                value,
                                metric: metric.into(),
                                replications: plan.replications,
                                seed: plan.seed,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_results<W: Write>(rows: &[ResultRow], w: &mut W) -> Result<(), FormatError> {
    writeln!(w, "{}", RESULTS_HEADER.join(","))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.experiment.id(),
            r.m,
            r.n,
            r.law,
            format_f64(r.alpha),
            r.delta.map(format_f64).unwrap_or_default(),
            r.kstar.map(|k| k.to_string()).unwrap_or_default(),
            format_f64(r.value),
            r.metric,
            r.replications,
            r.seed
        )?;
    }
    Ok(())
}
