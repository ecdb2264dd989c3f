//! Synthetic deformed Wigner streams `M_t = s_t · x_t x_tᵀ + W_t / √n`.
//!
//! Noise entries follow independent stationary AR(1) recursions
//! `W_t = Φ ⊙ W_{t−1} + √(1 − Φ⊙Φ) ⊙ ε_t` with a fixed symmetric coefficient
//! matrix `Φ` and standard-normal Wigner innovations `ε_t`, so every entry has
//! unit stationary variance and the bulk edge of `W_t/√n` sits at 2. Spike
//! directions are normalized Gaussian vectors, redrawn at every `t`.
//! Signal strengths come from a base law on `[0, 1]`; after the change they are
//! mapped to `[1, 1 + δ]`.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal, Uniform};
use thiserror::Error;

use crate::matrix::{packed_len, MatrixError, SymMatrix};
use crate::rng::{substream, StreamRng};

const NOISE_STREAM: u64 = 0;
const DIRECTION_STREAM: u64 = 1;
const STRENGTH_STREAM: u64 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid stream specification: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Parameters of the temporally dependent Wigner noise.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerStreamSpec {
    pub n: usize,
    pub phi_seed: u64,
    pub noise_seed: u64,
    /// Steps discarded before the first emitted matrix.
    pub burn_in: usize,
    /// Open interval the AR coefficients are drawn from.
    pub phi_range: (f64, f64),
}

impl WignerStreamSpec {
    pub fn new(n: usize, phi_seed: u64, noise_seed: u64) -> Self {
        Self {
            n,
            phi_seed,
            noise_seed,
            burn_in: 50,
            phi_range: (-0.5, 0.5),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n == 0 {
            return Err(SynthError::InvalidSpec("n must be positive".into()));
        }
        let (lo, hi) = self.phi_range;
        if !(lo > -1.0 && hi < 1.0 && lo <= hi) {
            return Err(SynthError::InvalidSpec(format!(
                "phi_range ({lo}, {hi}) must be a subinterval of (-1, 1)"
            )));
        }
        Ok(())
    }
}

/// Finite discrete law given as `(value, probability)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteLaw {
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self, SynthError> {
        if pairs.is_empty() {
            return Err(SynthError::InvalidSpec(
                "custom law needs at least one value".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(pairs.len());
        let mut total = 0.0;
        for &(v, p) in pairs {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError::InvalidSpec(format!(
                    "custom law value {v} outside [0, 1]"
                )));
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(SynthError::InvalidSpec(format!("invalid probability {p}")));
            }
            total += p;
            cumulative.push(total);
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidSpec(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self {
            values: pairs.iter().map(|p| p.0).collect(),
            cumulative,
        })
    }

    /// Point mass at `v`.
    pub fn constant(v: f64) -> Result<Self, SynthError> {
        Self::new(&[(v, 1.0)])
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let idx = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.values.len() - 1);
        self.values[idx]
    }
}

/// Base law of the signal strength on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalLaw {
    Uniform01,
    Beta24,
    Table(DiscreteLaw),
}

impl SignalLaw {
    pub fn id(&self) -> &'static str {
        match self {
            SignalLaw::Uniform01 => "uniform",
            SignalLaw::Beta24 => "beta24",
            SignalLaw::Table(_) => "table",
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SignalLaw::Uniform01 => rng.random::<f64>(),
            SignalLaw::Beta24 => Beta::new(2.0, 4.0)
                .expect("valid Beta parameters")
                .sample(rng),
            SignalLaw::Table(law) => law.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Subcritical,
    /// Strengths after the change are `1 + δ·u` with `u` from the base law.
    Supercritical {
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub law: SignalLaw,
    pub regime: Regime,
    /// The change happens after observation `m + kstar`.
    pub kstar: usize,
}

impl SignalSpec {
    pub fn subcritical(law: SignalLaw) -> Self {
        Self {
            law,
            regime: Regime::Subcritical,
            kstar: 0,
        }
    }

    pub fn supercritical(law: SignalLaw, delta: f64, kstar: usize) -> Self {
        Self {
            law,
            regime: Regime::Supercritical { delta },
            kstar,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if let Regime::Supercritical { delta } = self.regime {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(SynthError::InvalidSpec(format!(
                    "delta must be positive, got {delta}"
                )));
            }
        }
        Ok(())
    }

    /// Strength at time `t` (1-based) given a base draw `u` and training length `m`.
    pub fn strength(&self, t: usize, m: usize, u: f64) -> f64 {
        match self.regime {
            Regime::Supercritical { delta } if t > m + self.kstar => 1.0 + delta * u,
            _ => u,
        }
    }
}

/// Symmetric AR coefficient matrix with entries uniform on `phi_range`.
pub fn gen_phi(spec: &WignerStreamSpec) -> Result<SymMatrix, SynthError> {
    spec.validate()?;
    let (lo, hi) = spec.phi_range;
    let mut rng = substream(spec.phi_seed, 0);
    if lo == hi {
        return Ok(SymMatrix::from_packed(
            spec.n,
            vec![lo; packed_len(spec.n)],
        )?);
    }
    let dist = Uniform::new(lo, hi).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let data = (0..packed_len(spec.n))
        .map(|_| dist.sample(&mut rng))
        .collect();
    Ok(SymMatrix::from_packed(spec.n, data)?)
}

/// Wigner matrix with independent standard-normal entries on and below the
/// diagonal.
pub fn wigner<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SymMatrix, SynthError> {
    let data = (0..packed_len(n))
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Ok(SymMatrix::from_packed(n, data)?)
}

/// Normalized Wigner matrix `W / √n`, bulk edge at 2.
pub fn pure_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SymMatrix, SynthError> {
    let mut w = wigner(n, rng)?;
    let scale = 1.0 / (n as f64).sqrt();
    w.packed_mut().iter_mut().for_each(|x| *x *= scale);
    Ok(w)
}

/// One step of the entrywise AR(1) recursion.
pub fn next_wigner<R: Rng + ?Sized>(
    prev: &SymMatrix,
    phi: &SymMatrix,
    rng: &mut R,
) -> Result<SymMatrix, SynthError> {
    if prev.dim() != phi.dim() {
        return Err(MatrixError::DimensionMismatch(prev.dim(), phi.dim()).into());
    }
    let data = prev
        .packed()
        .iter()
        .zip(phi.packed())
        .map(|(&w, &f)| {
            let eps: f64 = StandardNormal.sample(rng);
            f * w + (1.0 - f * f).sqrt() * eps
        })
        .collect();
    Ok(SymMatrix::from_packed(prev.dim(), data)?)
}

/// Unit vector with a uniformly random direction.
pub fn gen_spike<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            y.iter_mut().for_each(|v| *v /= norm);
            return y;
        }
    }
}

/// The pieces of one synthetic observation.
#[derive(Debug, Clone)]
pub struct Observation {
    /// 1-based time index.
    pub t: usize,
    pub strength: f64,
    pub direction: Vec<f64>,
    /// `W_t / √n`.
    pub noise: SymMatrix,
    /// `strength · direction directionᵀ + noise`.
    pub matrix: SymMatrix,
}

/// Sequential generator of a synthetic stream.
pub struct StreamGenerator {
    n: usize,
    m: usize,
    signal: SignalSpec,
    phi: Vec<f64>,
    innovation_scale: Vec<f64>,
    state: Vec<f64>,
    noise_rng: StreamRng,
    direction_rng: StreamRng,
    strength_rng: StreamRng,
    t: usize,
    initial_pending: bool,
}

impl StreamGenerator {
    pub fn new(
        wspec: &WignerStreamSpec,
        signal: &SignalSpec,
        m: usize,
    ) -> Result<Self, SynthError> {
        wspec.validate()?;
        signal.validate()?;
        let phi = gen_phi(wspec)?.into_packed();
        let innovation_scale = phi.iter().map(|f| (1.0 - f * f).sqrt()).collect();
        let mut noise_rng = substream(wspec.noise_seed, NOISE_STREAM);
        let state = wigner(wspec.n, &mut noise_rng)?.into_packed();
        let mut g = Self {
            n: wspec.n,
            m,
            signal: signal.clone(),
            phi,
            innovation_scale,
            state,
            noise_rng,
            direction_rng: substream(wspec.noise_seed, DIRECTION_STREAM),
            strength_rng: substream(wspec.noise_seed, STRENGTH_STREAM),
            t: 0,
            initial_pending: wspec.burn_in == 0,
        };
        // The initial draw is the first discarded observation.
        for _ in 1..wspec.burn_in {
            g.advance_noise();
        }
        Ok(g)
    }

    fn advance_noise(&mut self) {
        for ((w, &f), &c) in self
            .state
            .iter_mut()
            .zip(&self.phi)
            .zip(&self.innovation_scale)
        {
            let eps: f64 = StandardNormal.sample(&mut self.noise_rng);
            *w = f * *w + c * eps;
        }
    }

    /// Produces the next observation with all of its components.
    pub fn next_observation(&mut self) -> Observation {
        if self.initial_pending {
            self.initial_pending = false;
        } else {
            self.advance_noise();
        }
        self.t += 1;
        let scale = 1.0 / (self.n as f64).sqrt();
        let noise: Vec<f64> = self.state.iter().map(|w| w * scale).collect();
        let u = self.signal.law.sample(&mut self.strength_rng);
        let strength = self.signal.strength(self.t, self.m, u);
        let direction = gen_spike(self.n, &mut self.direction_rng);
        let mut data = noise.clone();
        if strength != 0.0 {
            let mut idx = 0;
            for i in 0..self.n {
                let si = strength * direction[i];
                for &dj in &direction[..=i] {
                    data[idx] += si * dj;
                    idx += 1;
                }
            }
        }
        Observation {
            t: self.t,
            strength,
            direction,
            noise: SymMatrix::from_packed_unchecked(self.n, noise),
            matrix: SymMatrix::from_packed_unchecked(self.n, data),
        }
    }
}

impl Iterator for StreamGenerator {
    type Item = SymMatrix;

    fn next(&mut self) -> Option<SymMatrix> {
        Some(self.next_observation().matrix)
    }
}

/// Materializes `length` matrices of a synthetic stream.
pub fn gen_stream(
    wspec: &WignerStreamSpec,
    sspec: &SignalSpec,
    m: usize,
    length: usize,
) -> Result<Vec<SymMatrix>, SynthError> {
    if length < m {
        return Err(SynthError::InvalidSpec(format!(
            "length {length} is shorter than m = {m}"
        )));
    }
    Ok(StreamGenerator::new(wspec, sspec, m)?
        .take(length)
        .collect())
}
