//! Trajectory generation for the white-noise process and the colored-noise
//! augmented system, plus the sparse-observation helpers.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, matrix_sqrt_spd, psd_sqrt, LinalgError, Matrix, SpdMatrix, StableMatrix};
use crate::oracle;
use crate::rng;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error("integration diverged to a non-finite state near t = {t}")]
    Diverged { t: f64 },
    #[error("operation would leave an empty time series")]
    EmptyResult,
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Ground-truth triple defining a white (`tau = 0`) or colored (`tau > 0`)
/// linear SDE.
#[derive(Debug, Clone)]
pub struct SystemParams {
    a: StableMatrix,
    q: SpdMatrix,
    tau: f64,
}

impl SystemParams {
    pub fn new(a: StableMatrix, q: SpdMatrix, tau: f64) -> Result<Self> {
        if a.dim() != q.dim() {
            return Err(SimError::InvalidParams(format!(
                "dynamical matrix is {}x{} but diffusion matrix is {}x{}",
                a.dim(),
                a.dim(),
                q.dim(),
                q.dim()
            )));
        }
        if !tau.is_finite() || tau < 0.0 {
            return Err(SimError::InvalidParams(format!(
                "noise correlation time must be finite and nonnegative, got {tau}"
            )));
        }
        Ok(Self { a, q, tau })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn a(&self) -> &Matrix {
        self.a.matrix()
    }

    pub fn q(&self) -> &Matrix {
        self.q.matrix()
    }

    pub fn q_spd(&self) -> &SpdMatrix {
        &self.q
    }

    pub fn stable_a(&self) -> &StableMatrix {
        &self.a
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn is_white(&self) -> bool {
        self.tau == 0.0
    }
}

/// Uniformly sampled multivariate observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    dt: f64,
    start_time: f64,
    dim: usize,
    /// Row-major samples, `len * dim` entries.
    data: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dt: f64, start_time: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::InvalidConfig(format!(
                "sampling interval must be positive, got {dt}"
            )));
        }
        if dim == 0 || data.len() % dim != 0 {
            return Err(SimError::InvalidConfig(format!(
                "data length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if data.len() / dim < 2 {
            return Err(SimError::InvalidConfig(
                "a time series needs at least two samples".to_string(),
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(SimError::InvalidConfig(
                "time series contains a non-finite entry".to_string(),
            ));
        }
        Ok(Self {
            dt,
            start_time,
            dim,
            data,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.start_time + index as f64 * self.dt
    }

    /// Time distance between the first and the last sample.
    pub fn span(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn sample(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Per-coordinate sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.data.chunks_exact(self.dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        let count = self.len() as f64;
        for m in &mut mean {
            *m /= count;
        }
        mean
    }

    /// Copy with the per-coordinate sample mean removed.
    pub fn centered(&self) -> TimeSeries {
        let mean = self.mean();
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.dim) {
            for (x, m) in row.iter_mut().zip(&mean) {
                *x -= m;
            }
        }
        TimeSeries {
            dt: self.dt,
            start_time: self.start_time,
            dim: self.dim,
            data,
        }
    }
}

/// Integration scheme for the stochastic simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Stochastic Heun: deterministic Heun on the drift with exact Gaussian
    /// increments on the (additive) noise. Weak second order.
    #[default]
    Heun2,
    /// Exact sampling of the linear transition: matrix exponential of the
    /// drift plus the exact conditional covariance. Serves as the
    /// integration oracle that isolates discretization error.
    ExactExponential,
}

fn default_dt() -> f64 {
    0.001
}

fn default_subsample() -> usize {
    10
}

/// Simulation configuration.
///
/// `burn_in_time = None` resolves to zero when the initial state is drawn
/// from the stationary law, and to twenty e-folding times of the slowest mode
/// when an explicit `x0` is supplied.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t1: f64,
    #[serde(default = "default_subsample")]
    pub subsample_every: usize,
    #[serde(default)]
    pub burn_in_time: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl SimConfig {
    pub fn new(t1: f64, seed: u64) -> Self {
        Self {
            dt: default_dt(),
            t1,
            subsample_every: default_subsample(),
            burn_in_time: None,
            seed,
            scheme: Scheme::default(),
            x0: None,
        }
    }

    fn validate(&self, params: &SystemParams) -> Result<f64> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::InvalidConfig(format!(
                "integrator step must be positive, got {}",
                self.dt
            )));
        }
        if self.subsample_every == 0 {
            return Err(SimError::InvalidConfig(
                "subsample_every must be at least 1".to_string(),
            ));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != params.dim() {
                return Err(SimError::InvalidConfig(format!(
                    "x0 has length {} but the system dimension is {}",
                    x0.len(),
                    params.dim()
                )));
            }
        }
        let burn_in = match self.burn_in_time {
            Some(b) if b >= 0.0 && b.is_finite() => b,
            Some(b) => {
                return Err(SimError::InvalidConfig(format!(
                    "burn_in_time must be finite and nonnegative, got {b}"
                )))
            }
            // Twenty e-folding times of the slowest mode washes out the
            // transient introduced by an explicit initial condition.
            None if self.x0.is_some() => {
                let slowest = params
                    .stable_a()
                    .eigenvalues()
                    .iter()
                    .map(|l| l.re.abs())
                    .fold(f64::INFINITY, f64::min);
                20.0 / slowest
            }
            None => 0.0,
        };
        if self.t1 <= burn_in {
            return Err(SimError::InvalidConfig(format!(
                "final time {} must exceed the burn-in time {burn_in}",
                self.t1
            )));
        }
        Ok(burn_in)
    }
}

/// Removes leading samples with `t < burn_in_time`.
pub fn discard_burn_in(ts: &TimeSeries, burn_in_time: f64) -> Result<TimeSeries> {
    if burn_in_time <= ts.start_time() {
        return Ok(ts.clone());
    }
    if burn_in_time >= ts.start_time() + ts.span() {
        return Err(SimError::EmptyResult);
    }
    let dim = ts.dim();
    let mut first = 0;
    while first < ts.len() && ts.time_at(first) + 1e-9 * ts.dt() < burn_in_time {
        first += 1;
    }
    if ts.len() - first < 2 {
        return Err(SimError::EmptyResult);
    }
    TimeSeries::new(
        ts.dt(),
        ts.time_at(first),
        dim,
        ts.data()[first * dim..].to_vec(),
    )
}

/// Keeps indices `0, every, 2*every, ...`; the sampling interval scales by
/// `every`.
pub fn subsample(ts: &TimeSeries, every: usize) -> Result<TimeSeries> {
    if every == 0 {
        return Err(SimError::InvalidConfig(
            "subsample factor must be at least 1".to_string(),
        ));
    }
    if every == 1 {
        return Ok(ts.clone());
    }
    let dim = ts.dim();
    let mut data = Vec::with_capacity((ts.len() / every + 1) * dim);
    let mut i = 0;
    while i < ts.len() {
        data.extend_from_slice(ts.sample(i));
        i += every;
    }
    TimeSeries::new(ts.dt() * every as f64, ts.start_time(), dim, data)
}

struct Recorder {
    data: Vec<f64>,
    dim: usize,
}

impl Recorder {
    fn new(dim: usize, capacity: usize) -> Self {
        Self {
            data: Vec::with_capacity(capacity * dim),
            dim,
        }
    }

    fn push(&mut self, state: &DVector<f64>, offset: usize, t: f64) -> Result<()> {
        for i in 0..self.dim {
            let x = state[offset + i];
            if !x.is_finite() {
                return Err(SimError::Diverged { t });
            }
            self.data.push(x);
        }
        Ok(())
    }
}

fn sample_gaussian(rng: &mut ChaCha8Rng, sqrt_cov: &Matrix) -> DVector<f64> {
    let n = sqrt_cov.nrows();
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    sqrt_cov * z
}

/// Simulates `dx = A x dt + sqrt(2Q) dW` and returns the subsampled
/// observation. Deterministic given the seed.
pub fn simulate_white(params: &SystemParams, cfg: &SimConfig) -> Result<TimeSeries> {
    if !params.is_white() {
        return Err(SimError::InvalidParams(format!(
            "white simulation requires tau = 0, got {}",
            params.tau()
        )));
    }
    let burn_in = cfg.validate(params)?;
    let n = params.dim();
    let a = params.a().clone();
    let noise_amp = matrix_sqrt_spd(&SpdMatrix::new(params.q() * 2.0)?);
    let stationary_cov = oracle::white_stationary_cov(params)?;

    let mut rng = rng::stream(cfg.seed, rng::PURPOSE_SIM);
    let init = match &cfg.x0 {
        Some(x0) => DVector::from_column_slice(x0),
        None => sample_gaussian(&mut rng, &psd_sqrt(&stationary_cov)?),
    };

    let ts = match cfg.scheme {
        Scheme::Heun2 => integrate_heun(&a, &NoiseMap::Dense(&noise_amp), init, cfg, &mut rng)?,
        Scheme::ExactExponential => {
            let phi = linalg::matrix_exp(&a, cfg.dt)?;
            let cond_cov = &stationary_cov - &phi * &stationary_cov * phi.transpose();
            let sqrt_cond = psd_sqrt(&cond_cov)?;
            integrate_exact(&phi, &sqrt_cond, init, cfg, &mut rng)?
        }
    };
    finalize(ts, burn_in, n, 0)
}

/// Simulates the colored system in its augmented `2n`-dimensional form and
/// returns the observable `x` together with the noise trajectory `eta`
/// (retained only for validation purposes).
pub fn simulate_colored(params: &SystemParams, cfg: &SimConfig) -> Result<(TimeSeries, TimeSeries)> {
    if params.is_white() {
        return Err(SimError::InvalidParams(
            "colored simulation requires tau > 0".to_string(),
        ));
    }
    let burn_in = cfg.validate(params)?;
    let n = params.dim();
    let aug = oracle::build_augmented(params)?;
    let drift = aug.drift().clone();
    let sigma = aug.sigma().clone();

    let mut rng = rng::stream(cfg.seed, rng::PURPOSE_SIM);
    let init = match &cfg.x0 {
        Some(x0) => {
            // Explicit x part; eta starts from its own stationary marginal
            // and the burn-in washes out the joint transient.
            let eta_sqrt = Matrix::identity(n, n) * (1.0 / (2.0 * params.tau())).sqrt();
            let eta0 = sample_gaussian(&mut rng, &eta_sqrt);
            let mut z = DVector::zeros(2 * n);
            z.rows_mut(0, n).copy_from_slice(x0);
            z.rows_mut(n, n).copy_from(&eta0);
            z
        }
        None => sample_gaussian(&mut rng, &psd_sqrt(&sigma)?),
    };

    let joint = match cfg.scheme {
        Scheme::Heun2 => {
            let inv_tau = 1.0 / params.tau();
            integrate_heun(&drift, &NoiseMap::EtaOnly { n, inv_tau }, init, cfg, &mut rng)?
        }
        Scheme::ExactExponential => {
            let phi = linalg::matrix_exp(&drift, cfg.dt)?;
            let cond_cov = &sigma - &phi * &sigma * phi.transpose();
            let sqrt_cond = psd_sqrt(&cond_cov)?;
            integrate_exact(&phi, &sqrt_cond, init, cfg, &mut rng)?
        }
    };
    let x = finalize(joint.clone(), burn_in, n, 0)?;
    let eta = finalize(joint, burn_in, n, n)?;
    Ok((x, eta))
}

/// How the per-step Gaussian increment enters the state.
enum NoiseMap<'a> {
    /// `g = amp * z * sqrt(dt)` across the full state.
    Dense(&'a Matrix),
    /// Only the trailing `n` (eta) coordinates receive noise, with scalar
    /// amplitude `1/tau`. A full `2n` block of normals is consumed per step
    /// so the draw pattern lines up with the exact scheme and same-seed runs
    /// stay pathwise coupled.
    EtaOnly { n: usize, inv_tau: f64 },
}

impl NoiseMap<'_> {
    fn fill(&self, rng: &mut ChaCha8Rng, sqrt_dt: f64, g: &mut DVector<f64>, z: &mut DVector<f64>) {
        match self {
            NoiseMap::Dense(amp) => {
                for zi in z.iter_mut() {
                    *zi = rng.sample::<f64, _>(StandardNormal);
                }
                g.gemv(sqrt_dt, amp, z, 0.0);
            }
            NoiseMap::EtaOnly { n, inv_tau } => {
                for _ in 0..*n {
                    let _: f64 = rng.sample(StandardNormal);
                }
                for i in 0..*n {
                    g[*n + i] = inv_tau * sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }

    fn noise_dim(&self, state_dim: usize) -> usize {
        match self {
            NoiseMap::Dense(_) => state_dim,
            NoiseMap::EtaOnly { n, .. } => *n,
        }
    }
}

fn step_count(cfg: &SimConfig) -> usize {
    (cfg.t1 / cfg.dt).round() as usize
}

fn integrate_heun(
    drift: &Matrix,
    noise: &NoiseMap<'_>,
    init: DVector<f64>,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RawTrajectory> {
    let dim = drift.nrows();
    let steps = step_count(cfg);
    let sqrt_dt = cfg.dt.sqrt();
    let half_dt = 0.5 * cfg.dt;

    let mut state = init;
    let mut k1 = DVector::zeros(dim);
    let mut k2 = DVector::zeros(dim);
    let mut predictor = DVector::zeros(dim);
    let mut g = DVector::zeros(dim);
    let mut z = DVector::zeros(noise.noise_dim(dim));

    let mut recorded = Vec::with_capacity(steps / cfg.subsample_every + 2);
    recorded.extend_from_slice(state.as_slice());
    for step in 1..=steps {
        noise.fill(rng, sqrt_dt, &mut g, &mut z);
        k1.gemv(1.0, drift, &state, 0.0);
        predictor.copy_from(&state);
        predictor.axpy(cfg.dt, &k1, 1.0);
        predictor += &g;
        k2.gemv(1.0, drift, &predictor, 0.0);
        state.axpy(half_dt, &k1, 1.0);
        state.axpy(half_dt, &k2, 1.0);
        state += &g;
        if step % cfg.subsample_every == 0 {
            recorded.extend_from_slice(state.as_slice());
        }
    }
    Ok(RawTrajectory {
        data: recorded,
        dim,
        dt: cfg.dt * cfg.subsample_every as f64,
    })
}

fn integrate_exact(
    phi: &Matrix,
    sqrt_cond: &Matrix,
    init: DVector<f64>,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RawTrajectory> {
    let dim = phi.nrows();
    let steps = step_count(cfg);

    let mut state = init;
    let mut next = DVector::zeros(dim);
    let mut z = DVector::zeros(dim);

    let mut recorded = Vec::with_capacity(steps / cfg.subsample_every + 2);
    recorded.extend_from_slice(state.as_slice());
    for step in 1..=steps {
        for zi in z.iter_mut() {
            *zi = rng.sample::<f64, _>(StandardNormal);
        }
        next.gemv(1.0, phi, &state, 0.0);
        next.gemv(1.0, sqrt_cond, &z, 1.0);
        state.copy_from(&next);
        if step % cfg.subsample_every == 0 {
            recorded.extend_from_slice(state.as_slice());
        }
    }
    Ok(RawTrajectory {
        data: recorded,
        dim,
        dt: cfg.dt * cfg.subsample_every as f64,
    })
}

#[derive(Clone)]
struct RawTrajectory {
    data: Vec<f64>,
    dim: usize,
    dt: f64,
}

fn finalize(raw: RawTrajectory, burn_in: f64, take: usize, offset: usize) -> Result<TimeSeries> {
    let full_dim = raw.dim;
    let count = raw.data.len() / full_dim;
    let mut data = Vec::with_capacity(count * take);
    for row in raw.data.chunks_exact(full_dim) {
        data.extend_from_slice(&row[offset..offset + take]);
    }
    // Divergence surfaces here: TimeSeries::new rejects non-finite entries,
    // but report it as an integration failure with a location.
    for (i, row) in data.chunks_exact(take).enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(SimError::Diverged {
                t: i as f64 * raw.dt,
            });
        }
    }
    let ts = TimeSeries::new(raw.dt, 0.0, take, data)?;
    if burn_in > 0.0 {
        discard_burn_in(&ts, burn_in)
    } else {
        Ok(ts)
    }
}
