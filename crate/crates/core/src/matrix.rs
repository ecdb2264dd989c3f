//! Domain types shared across the crate: packed symmetric matrices, eigenvalue
//! series with a training split, and monitoring verdicts.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("matrix dimension must be positive")]
    EmptyDimension,

    #[error("expected {expected} packed entries for n = {n}, got {got}")]
    PackedLength {
        n: usize,
        expected: usize,
        got: usize,
    },

    #[error("dense input is not square: {rows} rows, row {row} has {len} entries")]
    NotSquare { rows: usize, row: usize, len: usize },

    #[error("dense input is not symmetric at ({i}, {j}): {a} vs {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },

    #[error("non-finite entry {value} at ({i}, {j})")]
    NonFinite { i: usize, j: usize, value: f64 },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("training length m must be positive")]
    ZeroTraining,

    #[error("series has {len} values, fewer than the training length m = {m}")]
    TooShort { len: usize, m: usize },

    #[error("non-finite eigenvalue {value} at position {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("matrix dimension n must be positive")]
    ZeroDimension,
}

/// Number of packed entries in the lower triangle of an `n × n` matrix.
#[inline]
pub const fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

/// Dense real symmetric matrix stored as its lower triangle, row by row.
///
/// Entry `(i, j)` for `i >= j` lives at `i(i+1)/2 + j`; `(j, i)` aliases the
/// same slot, so symmetry holds by construction. All entries are finite.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Result<Self, MatrixError> {
        if n == 0 {
            return Err(MatrixError::EmptyDimension);
        }
        Ok(Self {
            n,
            data: vec![0.0; packed_len(n)],
        })
    }

    pub fn identity(n: usize) -> Result<Self, MatrixError> {
        let mut m = Self::zeros(n)?;
        for i in 0..n {
            m.data[packed_index(i, i)] = 1.0;
        }
        Ok(m)
    }

    /// Builds a matrix from its packed lower triangle.
    pub fn from_packed(n: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if n == 0 {
            return Err(MatrixError::EmptyDimension);
        }
        let expected = packed_len(n);
        if data.len() != expected {
            return Err(MatrixError::PackedLength {
                n,
                expected,
                got: data.len(),
            });
        }
        let m = Self { n, data };
        m.check_finite()?;
        Ok(m)
    }

    /// Builds a matrix from full square rows. Symmetry is checked exactly:
    /// any `a[i][j] != a[j][i]` is rejected.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MatrixError> {
        let n = rows.len();
        if n == 0 {
            return Err(MatrixError::EmptyDimension);
        }
        for (row, r) in rows.iter().enumerate() {
            if r.as_ref().len() != n {
                return Err(MatrixError::NotSquare {
                    rows: n,
                    row,
                    len: r.as_ref().len(),
                });
            }
        }
        let mut data = Vec::with_capacity(packed_len(n));
        for i in 0..n {
            for j in 0..=i {
                let a = rows[i].as_ref()[j];
                let b = rows[j].as_ref()[i];
                #[allow(clippy::float_cmp)]
                if a != b && !(a.is_nan() && b.is_nan()) {
                    return Err(MatrixError::Asymmetric { i, j, a, b });
                }
                data.push(a);
            }
        }
        Self::from_packed(n, data)
    }

    /// Builds a matrix by evaluating `f(i, j)` for `i >= j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, MatrixError> {
        if n == 0 {
            return Err(MatrixError::EmptyDimension);
        }
        let mut data = Vec::with_capacity(packed_len(n));
        for i in 0..n {
            for j in 0..=i {
                data.push(f(i, j));
            }
        }
        Self::from_packed(n, data)
    }

    /// Diagonal matrix with the given entries.
    pub fn diagonal(diag: &[f64]) -> Result<Self, MatrixError> {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    /// `scale · v vᵀ`.
    pub fn outer(v: &[f64], scale: f64) -> Result<Self, MatrixError> {
        Self::from_fn(v.len(), |i, j| scale * v[i] * v[j])
    }

    fn check_finite(&self) -> Result<(), MatrixError> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            let (i, j) = unpack(pos);
            return Err(MatrixError::NonFinite {
                i,
                j,
                value: self.data[pos],
            });
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(
            i < self.n && j < self.n,
            "index ({i}, {j}) out of range for n = {}",
            self.n
        );
        self.data[packed_index(i, j)]
    }

    /// Packed lower triangle, row by row.
    #[inline]
    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn into_packed(self) -> Vec<f64> {
        self.data
    }

    /// Row-major dense copy (`n²` entries).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let base = i * (i + 1) / 2;
            for j in 0..=i {
                let v = self.data[base + j];
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[packed_index(i, i)]).sum()
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let base = i * (i + 1) / 2;
            for j in 0..i {
                acc += 2.0 * self.data[base + j] * self.data[base + j];
            }
            acc += self.data[base + i] * self.data[base + i];
        }
        acc.sqrt()
    }

    /// Largest absolute row sum, an upper bound on every |eigenvalue|.
    pub fn max_abs_row_sum(&self) -> f64 {
        let n = self.n;
        let mut sums = vec![0.0_f64; n];
        for i in 0..n {
            let base = i * (i + 1) / 2;
            for j in 0..i {
                let a = self.data[base + j].abs();
                sums[i] += a;
                sums[j] += a;
            }
            sums[i] += self.data[base + i].abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let base = i * (i + 1) / 2;
            let row = &self.data[base..base + i];
            let mut acc = 0.0;
            for (j, &a) in row.iter().enumerate() {
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc + self.data[base + i] * x[i];
        }
    }

    /// `vᵀ A v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n];
        self.mul_vec(v, &mut y);
        y.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Entrywise `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &SymMatrix, b: f64) -> Result<Self, MatrixError> {
        if self.n != other.n {
            return Err(MatrixError::DimensionMismatch(self.n, other.n));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::from_packed(self.n, data)
    }

    /// `self + shift · I`.
    pub fn shifted(&self, shift: f64) -> Result<Self, MatrixError> {
        let mut data = self.data.clone();
        for i in 0..self.n {
            data[packed_index(i, i)] += shift;
        }
        Self::from_packed(self.n, data)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, MatrixError> {
        Self::from_packed(self.n, self.data.iter().map(|v| v * factor).collect())
    }

    /// Mutable access for in-crate builders that maintain the finiteness
    /// invariant themselves.
    pub(crate) fn packed_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn from_packed_unchecked(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), packed_len(n));
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { n, data }
    }
}

fn unpack(pos: usize) -> (usize, usize) {
    // Largest i with i(i+1)/2 <= pos.
    let mut i = (((8 * pos + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    while (i + 1) * (i + 2) / 2 <= pos {
        i += 1;
    }
    while i * (i + 1) / 2 > pos {
        i -= 1;
    }
    (i, pos - i * (i + 1) / 2)
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SymMatrix({}x{}) [", self.n, self.n)?;
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n)
                .map(|j| format!("{:.6}", self.get(i, j)))
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

/// Largest eigenvalues `λ_1, λ_2, …` of a matrix stream, the first `m` of
/// which form the anomaly-free training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSeries {
    lambdas: Vec<f64>,
    m: usize,
    n: usize,
}

impl EigenSeries {
    pub fn new(lambdas: Vec<f64>, m: usize, n: usize) -> Result<Self, SeriesError> {
        if m == 0 {
            return Err(SeriesError::ZeroTraining);
        }
        if n == 0 {
            return Err(SeriesError::ZeroDimension);
        }
        if lambdas.len() < m {
            return Err(SeriesError::TooShort {
                len: lambdas.len(),
                m,
            });
        }
        if let Some((index, &value)) = lambdas.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SeriesError::NonFinite { index, value });
        }
        Ok(Self { lambdas, m, n })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `λ_1, …, λ_m`.
    pub fn training(&self) -> &[f64] {
        &self.lambdas[..self.m]
    }

    /// Any values past the training sample.
    pub fn monitoring(&self) -> &[f64] {
        &self.lambdas[self.m..]
    }
}

/// Outcome of a monitoring run.
///
/// `k_hat` is the first monitoring index whose detector value exceeded the
/// threshold. `gamma_trace` holds `(k, Γ(k))` for every evaluated `k`; it ends
/// at `k_hat` unless tracing past the alarm was requested.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorVerdict {
    pub k_hat: Option<usize>,
    pub threshold: f64,
    pub gamma_trace: Vec<(usize, f64)>,
}

impl MonitorVerdict {
    pub fn alarmed(&self) -> bool {
        self.k_hat.is_some()
    }

    /// Largest detector value seen, if any monitoring step was evaluated.
    pub fn max_gamma(&self) -> Option<f64> {
        self.gamma_trace.iter().map(|&(_, g)| g).reduce(f64::max)
    }
}
