//! # spikemon
//!
//! Real-time detection of the moment a rank-one signal becomes visible in a
//! stream of deformed Wigner matrices
//!
//! ```text
//! M_t = s_t · x_t x_tᵀ + W_t / √n,   t = 1, 2, …
//! ```
//!
//! While `s_t` stays below the noise level the largest eigenvalue of `M_t`
//! sticks to the bulk edge `2σ`; once `s_t > σ` it detaches to
//! `s_t + σ²/s_t`. The detector tracks the largest eigenvalue over time,
//! compares the running monitoring sum against a training sample and divides
//! by a self-normalizer, which makes the critical values independent of `σ`,
//! `n` and the serial dependence of the noise.
//!
//! ## Modules
//!
//! | Module | Role |
//! |--------|------|
//! | [`matrix`] | `SymMatrix`, `EigenSeries`, `MonitorVerdict` |
//! | [`io`] | matrix-stream and quantile-table CSV formats |
//! | [`eigen`] | algebraically largest eigenvalue |
//! | [`detector`] | normalizer, detector statistic, online monitor |
//! | [`quantiles`] | Monte-Carlo critical values |
//! | [`synth`] | synthetic AR(1) Wigner streams with spikes |
//! | [`experiments`] | false-alarm and power harnesses |
//! | [`ingest`] | deseasonalized panels and baseline centering |
//!
//! ## Quick start
//!
//! ```rust
//! use spikemon::{monitor, EigenSeries, MonitorOptions};
//!
//! let train = EigenSeries::new(vec![0.0, 1.0], 2, 1).unwrap();
//! let verdict = monitor(&train, [1.0, 1.0], 1.0, MonitorOptions::default()).unwrap();
//! assert_eq!(verdict.k_hat, Some(1));
//! ```

pub mod detector;
pub mod eigen;
pub mod experiments;
pub mod ingest;
pub mod io;
pub mod matrix;
pub mod quantiles;
pub mod rng;
pub mod stats;
pub mod synth;

pub use detector::{
    compute_vm, monitor, DetectorError, DetectorState, MatrixMonitor, MonitorOptions,
};
pub use eigen::{largest_eigenvalue, EigenError, EigenMethod, EigenOptions};
pub use experiments::{run_pfa, run_power, ExperimentError, ExperimentPlan, ResultRow, Thresholds};
pub use io::{read_matrix_stream, write_matrix_stream, FormatError};
pub use matrix::{EigenSeries, MatrixError, MonitorVerdict, SymMatrix};
pub use quantiles::{quantiles_of_l, simulate_l, QuantileRequest, QuantileRow, QuantileTable};
pub use synth::{gen_stream, SignalLaw, SignalSpec, StreamGenerator, WignerStreamSpec};
