//! Algebraically largest eigenvalue of a real symmetric matrix.
//!
//! Two paths:
//!
//! * **Dense** (default for `n <= 512`): Householder reduction of the packed
//!   lower triangle to tridiagonal form, then Sturm-sequence bisection for the
//!   top eigenvalue only. Bisection brackets the algebraic maximum directly,
//!   so the `λ_min ≈ -λ_max` tie of the Wigner bulk is harmless.
//! * **Iterative** (default above 512): power iteration on `A + cI` with the
//!   Gershgorin shift `c = max_i Σ_j |a_ij|`, which makes the shifted matrix
//!   positive semidefinite so the dominant eigenvalue is the algebraic one.
//!   It stops once the Rayleigh quotient's relative change stays below the
//!   tolerance for three consecutive iterations.

use thiserror::Error;

use crate::matrix::SymMatrix;

/// Above this dimension `EigenMethod::Auto` switches to the iterative path.
pub const DENSE_LIMIT: usize = 512;

const CONSECUTIVE_HITS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("no convergence after {iterations} iterations (best estimate {best})")]
    IterationLimit { iterations: usize, best: f64 },

    #[error("invalid eigen options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub rel_tolerance: f64,
    /// `None` means `10·n + 1000`.
    pub max_iterations: Option<usize>,
    pub method: EigenMethod,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-10,
            max_iterations: None,
            method: EigenMethod::Auto,
        }
    }
}

impl EigenOptions {
    pub fn with_method(mut self, method: EigenMethod) -> Self {
        self.method = method;
        self
    }

    fn validate(&self) -> Result<(), EigenError> {
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance.is_finite()) {
            return Err(EigenError::InvalidOptions(format!(
                "rel_tolerance must be positive, got {}",
                self.rel_tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(EigenError::InvalidOptions(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn iteration_cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(10 * n + 1000)
    }
}

/// Algebraically largest eigenvalue of `a`.
pub fn largest_eigenvalue(a: &SymMatrix, opts: &EigenOptions) -> Result<f64, EigenError> {
    opts.validate()?;
    let n = a.dim();
    if n == 1 {
        return Ok(a.get(0, 0));
    }
    let dense = match opts.method {
        EigenMethod::Auto => n <= DENSE_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::Iterative => false,
    };
    if dense {
        dense_largest(a, opts)
    } else {
        shifted_power(a, opts)
    }
}

/// Convenience wrapper with default options.
pub fn lambda_max(a: &SymMatrix) -> Result<f64, EigenError> {
    largest_eigenvalue(a, &EigenOptions::default())
}

fn dense_largest(a: &SymMatrix, opts: &EigenOptions) -> Result<f64, EigenError> {
    let (d, e) = tridiagonalize(a);
    tridiagonal_largest(&d, &e, opts.rel_tolerance, opts.iteration_cap(a.dim()))
}

/// Householder reduction to symmetric tridiagonal form.
///
/// Returns the diagonal `d` (length `n`) and the sub-diagonal `e`
/// (length `n - 1`). Works on a copy of the packed lower triangle; every
/// inner loop walks a packed row contiguously.
pub fn tridiagonalize(a: &SymMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.dim();
    let mut p = a.packed().to_vec();
    let row = |i: usize| i * (i + 1) / 2;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n.saturating_sub(1)];
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];

    for k in 0..n.saturating_sub(1) {
        let lo = k + 1;
        // x = A[lo.., k]
        let mut norm2 = 0.0;
        for i in lo..n {
            let x = p[row(i) + k];
            v[i] = x;
            norm2 += x * x;
        }
        let x0 = v[lo];
        let tail = norm2 - x0 * x0;
        if tail == 0.0 {
            // Column already reduced.
            e[k] = x0;
            continue;
        }
        let norm = norm2.sqrt();
        let alpha = if x0 > 0.0 { -norm } else { norm };
        v[lo] = x0 - alpha;
        let vtv = tail + v[lo] * v[lo];
        let beta = 2.0 / vtv;
        e[k] = alpha;

        // w = β A22 v  (symmetric packed mat-vec on the trailing block)
        for x in w[lo..n].iter_mut() {
            *x = 0.0;
        }
        for i in lo..n {
            let r = &p[row(i) + lo..row(i) + i];
            let vi = v[i];
            let mut acc = 0.0;
            for ((&aij, &vj), wj) in r.iter().zip(&v[lo..i]).zip(&mut w[lo..i]) {
                acc += aij * vj;
                *wj += aij * vi;
            }
            w[i] += acc + p[row(i) + i] * vi;
        }
        let mut wv = 0.0;
        for i in lo..n {
            w[i] *= beta;
            wv += w[i] * v[i];
        }
        let half = 0.5 * beta * wv;
        for i in lo..n {
            w[i] -= half * v[i];
        }
        // A22 -= v wᵀ + w vᵀ
        for i in lo..n {
            let (vi, wi) = (v[i], w[i]);
            let r = &mut p[row(i) + lo..=row(i) + i];
            for ((aij, &wj), &vj) in r.iter_mut().zip(&w[lo..=i]).zip(&v[lo..=i]) {
                *aij -= vi * wj + wi * vj;
            }
        }
    }
    for (i, di) in d.iter_mut().enumerate() {
        *di = p[row(i) + i];
    }
    (d, e)
}

/// Number of eigenvalues of the tridiagonal matrix strictly below `x`.
fn sturm_count(d: &[f64], e2: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q.abs() < pivmin {
        q = -pivmin;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        q = d[i] - x - e2[i - 1] / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest eigenvalue of the symmetric tridiagonal matrix `(d, e)` by
/// bisection on the Sturm count.
pub fn tridiagonal_largest(
    d: &[f64],
    e: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<f64, EigenError> {
    let n = d.len();
    assert!(n >= 1 && e.len() + 1 == n);
    if n == 1 {
        return Ok(d[0]);
    }
    let e2: Vec<f64> = e.iter().map(|x| x * x).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
        scale = scale.max(d[i].abs() + r);
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    let max_e2 = e2.iter().cloned().fold(0.0, f64::max);
    let pivmin = f64::MIN_POSITIVE * max_e2.max(1.0);
    let abs_floor = 4.0 * f64::EPSILON * scale;
    let pad = abs_floor + f64::EPSILON * hi.abs();
    hi += pad;
    lo -= pad;

    // Bisection is cheap next to the reduction, so refine past the requested
    // tolerance down to a few ulps.
    let rel = rel_tol.min(4.0 * f64::EPSILON);
    for _ in 0..max_iter {
        let width = hi - lo;
        if width <= abs_floor.max(rel * lo.abs().max(hi.abs())) {
            return Ok(0.5 * (lo + hi));
        }
        let mid = lo + 0.5 * width;
        if mid <= lo || mid >= hi {
            // Interval cannot shrink further in floating point.
            return Ok(0.5 * (lo + hi));
        }
        if sturm_count(d, &e2, mid, pivmin) >= n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(EigenError::IterationLimit {
        iterations: max_iter,
        best: 0.5 * (lo + hi),
    })
}

fn shifted_power(a: &SymMatrix, opts: &EigenOptions) -> Result<f64, EigenError> {
    let n = a.dim();
    let shift = a.max_abs_row_sum();
    if shift == 0.0 {
        return Ok(0.0);
    }
    let cap = opts.iteration_cap(n);
    // Deterministic, non-degenerate starting direction.
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
        .collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut rho_prev = f64::NAN;
    let mut hits = 0;
    let mut best = f64::NAN;

    for _ in 0..cap {
        a.mul_vec(&v, &mut w);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi += shift * vi;
        }
        let rho: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        best = rho - shift;
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // v lies in the null space of A + cI, so every eigenvalue equals -c.
            return Ok(-shift);
        }
        let change = (rho - rho_prev).abs();
        let reference = best.abs().max(f64::EPSILON * shift);
        if change <= opts.rel_tolerance * reference {
            hits += 1;
            if hits >= CONSECUTIVE_HITS {
                return Ok(best);
            }
        } else {
            hits = 0;
        }
        rho_prev = rho;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    Err(EigenError::IterationLimit {
        iterations: cap,
        best,
    })
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}
