//! Self-normalized sequential detector for the emergence of a supercritical
//! spike.
//!
//! With training eigenvalues `λ_1..λ_m` the normalizer is
//!
//! ```text
//! V_m = n^{2/3} / m^{3/2} · Σ_{t=1}^{m} | Σ_{s≤t} λ_s − (t/m) Σ_{s≤m} λ_s |
//! ```
//!
//! and after `k` monitoring observations
//!
//! ```text
//! D_m(k) = n^{2/3} √m / (m + k) · ( Σ_{t=m+1}^{m+k} λ_t − (k/m) Σ_{t=1}^{m} λ_t )
//! Γ(k)   = D_m(k) / V_m
//! ```
//!
//! An alarm is raised at the first `k` with `Γ(k) > q`. Both `n^{2/3}` and
//! any positive affine map of the eigenvalues cancel in `Γ`, so the threshold
//! comes from a single parameter-free limit distribution.

use thiserror::Error;

use crate::eigen::{largest_eigenvalue, EigenError, EigenOptions};
use crate::matrix::{EigenSeries, MonitorVerdict, SymMatrix};
use crate::stats::CompensatedSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("training sample needs at least 2 eigenvalues, got {0}")]
    TrainingTooShort(usize),

    #[error("non-finite eigenvalue {value} at position {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("degenerate normalizer: V_m = 0 (constant training eigenvalues cannot be monitored)")]
    DegenerateNormalizer,

    #[error("detector has not observed any monitoring value yet")]
    NoMonitoringData,

    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),

    #[error("dimension n must be positive")]
    ZeroDimension,

    #[error("matrix has dimension {got}, detector was trained on n = {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Eigen(#[from] EigenError),
}

fn check_finite(values: &[f64], offset: usize) -> Result<(), DetectorError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(DetectorError::NonFinite {
            index: offset + i,
            value: values[i],
        }),
        None => Ok(()),
    }
}

#[inline]
fn n_factor(n: usize) -> f64 {
    (n as f64).powf(2.0 / 3.0)
}

/// The normalizer `V_m` over the training eigenvalues. Returns `0.0` for
/// constant training data; [`DetectorState::train`] turns that into
/// [`DetectorError::DegenerateNormalizer`].
pub fn compute_vm(train: &[f64], n: usize) -> Result<f64, DetectorError> {
    let m = train.len();
    if m < 2 {
        return Err(DetectorError::TrainingTooShort(m));
    }
    if n == 0 {
        return Err(DetectorError::ZeroDimension);
    }
    check_finite(train, 0)?;
    let total = train.iter().copied().collect::<CompensatedSum>().value();
    let mf = m as f64;
    let mut cum = CompensatedSum::new();
    let mut acc = CompensatedSum::new();
    for (t, &x) in (1..).zip(train) {
        cum.add(x);
        acc.add((cum.value() - (t as f64 / mf) * total).abs());
    }
    Ok(n_factor(n) / mf.powf(1.5) * acc.value())
}

/// Online detector state: frozen training statistics plus running monitoring
/// sums. Each observation costs O(1).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    m: usize,
    n: usize,
    train_sum: f64,
    v_m: f64,
    mon_sum: CompensatedSum,
    k: usize,
    threshold: f64,
}

impl DetectorState {
    /// Freezes the training statistics. Fails on a degenerate normalizer.
    pub fn train(train: &[f64], n: usize, threshold: f64) -> Result<Self, DetectorError> {
        if threshold.is_nan() || threshold <= 0.0 {
            return Err(DetectorError::InvalidThreshold(threshold));
        }
        let v_m = compute_vm(train, n)?;
        if v_m == 0.0 {
            return Err(DetectorError::DegenerateNormalizer);
        }
        Ok(Self {
            m: train.len(),
            n,
            train_sum: train.iter().copied().collect::<CompensatedSum>().value(),
            v_m,
            mon_sum: CompensatedSum::new(),
            k: 0,
            threshold,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v_m(&self) -> f64 {
        self.v_m
    }

    pub fn train_sum(&self) -> f64 {
        self.train_sum
    }

    pub fn mon_sum(&self) -> f64 {
        self.mon_sum.value()
    }

    /// Number of monitoring observations consumed so far.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Consumes `λ_{m+k+1}` and returns the updated `Γ(k+1)`.
    pub fn observe(&mut self, lambda: f64) -> Result<f64, DetectorError> {
        if !lambda.is_finite() {
            return Err(DetectorError::NonFinite {
                index: self.m + self.k,
                value: lambda,
            });
        }
        self.mon_sum.add(lambda);
        self.k += 1;
        self.gamma()
    }

    /// `D_m(k)` at the current `k`.
    pub fn dm(&self) -> Result<f64, DetectorError> {
        if self.k == 0 {
            return Err(DetectorError::NoMonitoringData);
        }
        let (m, k) = (self.m as f64, self.k as f64);
        let centred = self.mon_sum.value() - (k / m) * self.train_sum;
        Ok(n_factor(self.n) * m.sqrt() / (m + k) * centred)
    }

    /// `Γ(k) = D_m(k) / V_m` at the current `k`.
    pub fn gamma(&self) -> Result<f64, DetectorError> {
        if self.v_m == 0.0 {
            return Err(DetectorError::DegenerateNormalizer);
        }
        Ok(self.dm()? / self.v_m)
    }

    #[inline]
    pub fn exceeds(&self, gamma: f64) -> bool {
        gamma > self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MonitorOptions {
    /// Stop after this many monitoring steps; `None` runs to the end of the stream.
    pub max_k: Option<usize>,
    /// Keep evaluating and tracing `Γ` after the first alarm.
    pub trace_after_alarm: bool,
}

/// Runs the detector over `stream`.
///
/// The first `m` values of `train` form the training sample; any values of
/// `train` past `m` are monitored before `stream`.
pub fn monitor<I>(
    train: &EigenSeries,
    stream: I,
    threshold: f64,
    opts: MonitorOptions,
) -> Result<MonitorVerdict, DetectorError>
where
    I: IntoIterator<Item = f64>,
{
    let mut state = DetectorState::train(train.training(), train.n(), threshold)?;
    let values = train.monitoring().iter().copied().chain(stream);
    run(&mut state, values, opts)
}

/// Continues a trained detector over further values.
pub fn run<I>(
    state: &mut DetectorState,
    values: I,
    opts: MonitorOptions,
) -> Result<MonitorVerdict, DetectorError>
where
    I: IntoIterator<Item = f64>,
{
    let mut verdict = MonitorVerdict {
        k_hat: None,
        threshold: state.threshold(),
        gamma_trace: Vec::new(),
    };
    for lambda in values {
        if opts.max_k.is_some_and(|cap| state.k() >= cap) {
            break;
        }
        let g = state.observe(lambda)?;
        verdict.gamma_trace.push((state.k(), g));
        if verdict.k_hat.is_none() && state.exceeds(g) {
            verdict.k_hat = Some(state.k());
            if !opts.trace_after_alarm {
                break;
            }
        }
    }
    Ok(verdict)
}

/// Detector fed directly with matrices; computes each `λ_t` on arrival.
#[derive(Debug, Clone)]
pub struct MatrixMonitor {
    state: DetectorState,
    eigen: EigenOptions,
}

impl MatrixMonitor {
    pub fn train(
        matrices: &[SymMatrix],
        threshold: f64,
        eigen: EigenOptions,
    ) -> Result<Self, DetectorError> {
        let n = matrices
            .first()
            .map(SymMatrix::dim)
            .ok_or(DetectorError::TrainingTooShort(0))?;
        let lambdas = largest_eigenvalues(matrices, n, &eigen)?;
        Ok(Self {
            state: DetectorState::train(&lambdas, n, threshold)?,
            eigen,
        })
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    /// Returns `(λ, Γ)` for the new matrix.
    pub fn observe(&mut self, m: &SymMatrix) -> Result<(f64, f64), DetectorError> {
        if m.dim() != self.state.n() {
            return Err(DetectorError::DimensionMismatch {
                expected: self.state.n(),
                got: m.dim(),
            });
        }
        let lambda = largest_eigenvalue(m, &self.eigen)?;
        Ok((lambda, self.state.observe(lambda)?))
    }

    pub fn run<'a, I>(
        &mut self,
        matrices: I,
        opts: MonitorOptions,
    ) -> Result<MonitorVerdict, DetectorError>
    where
        I: IntoIterator<Item = &'a SymMatrix>,
    {
        let n = self.state.n();
        let eigen = self.eigen;
        let mut failure = None;
        let lambdas = matrices.into_iter().map_while(|m| {
            let r = if m.dim() != n {
                Err(DetectorError::DimensionMismatch {
                    expected: n,
                    got: m.dim(),
                })
            } else {
                largest_eigenvalue(m, &eigen).map_err(DetectorError::from)
            };
            match r {
                Ok(l) => Some(l),
                Err(e) => {
                    failure = Some(e);
                    None
                }
            }
        });
        let verdict = run(&mut self.state, lambdas, opts)?;
        match failure {
            Some(e) => Err(e),
            None => Ok(verdict),
        }
    }
}

/// Largest eigenvalue of every matrix, checking a common dimension `n`.
pub fn largest_eigenvalues(
    matrices: &[SymMatrix],
    n: usize,
    opts: &EigenOptions,
) -> Result<Vec<f64>, DetectorError> {
    matrices
        .iter()
        .map(|m| {
            if m.dim() != n {
                return Err(DetectorError::DimensionMismatch {
                    expected: n,
                    got: m.dim(),
                });
            }
            Ok(largest_eigenvalue(m, opts)?)
        })
        .collect()
}
