//! Classical linear inverse model: dynamical matrix from the matrix
//! logarithm of the lagged correlation, diffusion matrix from the classical
//! fluctuation-dissipation relation, plus the lag-sweep consistency
//! diagnostic.

use serde::Serialize;
use thiserror::Error;

use crate::corr::{self, CorrError};
use crate::linalg::{self, sym_part, LinalgError, Matrix};
use crate::sim::TimeSeries;

#[derive(Debug, Error)]
pub enum LimError {
    #[error("lag must be at least 1")]
    ZeroLag,
    #[error("zero-lag correlation matrix is singular")]
    SingularCorrelation,
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, LimError>;

/// Reconstructed dynamical and diffusion matrices for one time-lag.
#[derive(Debug, Clone)]
pub struct LimResult {
    pub a_hat: Matrix,
    pub q_hat: Matrix,
    /// Time-lag `rho = k dt` used for the reconstruction.
    pub rho: f64,
    pub warnings: Vec<String>,
}

/// Reconstruction from known correlation matrices `K(0)` and `K(rho)`:
/// `A = log(K(rho) K(0)^{-1}) / rho` and `Q = -(A K(0) + K(0) A^T)/2`.
pub fn estimate_from_lagged(k0: &Matrix, k_rho: &Matrix, rho: f64) -> Result<LimResult> {
    let k0_inv = k0
        .clone()
        .try_inverse()
        .ok_or(LimError::SingularCorrelation)?;
    let transition = k_rho * k0_inv;
    let a_hat = linalg::matrix_log_principal(&transition)? / rho;
    // K(0) is symmetric, so A K0 + K0 A^T is twice the symmetric part of
    // A K0; the construction forces a symmetric Q.
    let q_hat = -sym_part(&(&a_hat * k0));
    let mut warnings = Vec::new();
    let min_eig = q_hat.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < 0.0 {
        // Legitimate misfit diagnostic, reported rather than repaired.
        warnings.push(format!(
            "diffusion estimate has a negative eigenvalue ({min_eig:.3e})"
        ));
    }
    Ok(LimResult {
        a_hat,
        q_hat,
        rho,
        warnings,
    })
}

/// Runs the inverse model on a time series at lag index `k` (so
/// `rho = k dt`). The series mean is subtracted before estimation.
pub fn estimate(ts: &TimeSeries, k: usize) -> Result<LimResult> {
    estimate_with(ts, k, true)
}

/// As [`estimate`], with mean subtraction controllable.
pub fn estimate_with(ts: &TimeSeries, k: usize, subtract_mean: bool) -> Result<LimResult> {
    if k == 0 {
        return Err(LimError::ZeroLag);
    }
    let centered;
    let series = if subtract_mean {
        centered = ts.centered();
        &centered
    } else {
        ts
    };
    let k0 = corr::corr_at_lag(series, 0)?;
    let k_rho = corr::corr_at_lag(series, k)?;
    estimate_from_lagged(&k0, &k_rho, k as f64 * series.dt())
}

/// One lag of a consistency sweep. A failed reconstruction carries the error
/// text instead of a matrix.
#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_hat: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepEntry {
    pub fn a_hat_matrix(&self) -> Option<Matrix> {
        self.a_hat.as_ref().map(|rows| {
            Matrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
        })
    }
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Reconstructs the dynamical matrix at every lag in `k_min..=k_max`.
///
/// On white data the result is flat in the lag; a drift with the lag is the
/// misuse diagnostic for colored input.
pub fn sweep(ts: &TimeSeries, k_min: usize, k_max: usize) -> Result<Vec<SweepEntry>> {
    if k_min == 0 {
        return Err(LimError::ZeroLag);
    }
    let centered = ts.centered();
    let k0 = corr::corr_at_lag(&centered, 0)?;
    let mut entries = Vec::with_capacity(k_max.saturating_sub(k_min) + 1);
    for k in k_min..=k_max {
        let rho = k as f64 * centered.dt();
        let entry = match corr::corr_at_lag(&centered, k)
            .map_err(LimError::from)
            .and_then(|k_rho| estimate_from_lagged(&k0, &k_rho, rho))
        {
            Ok(res) => SweepEntry {
                rho,
                a_hat: Some(matrix_rows(&res.a_hat)),
                error: None,
            },
            Err(err) => SweepEntry {
                rho,
                a_hat: None,
                error: Some(err.to_string()),
            },
        };
        entries.push(entry);
    }
    Ok(entries)
}

/// Sweep over analytic correlation values supplied as a closure from lag
/// index to `K(k dt)`.
pub fn sweep_analytic<F>(corr_fn: F, dt: f64, k_min: usize, k_max: usize) -> Result<Vec<SweepEntry>>
where
    F: Fn(usize) -> Matrix,
{
    if k_min == 0 {
        return Err(LimError::ZeroLag);
    }
    let k0 = corr_fn(0);
    let mut entries = Vec::with_capacity(k_max.saturating_sub(k_min) + 1);
    for k in k_min..=k_max {
        let rho = k as f64 * dt;
        let entry = match estimate_from_lagged(&k0, &corr_fn(k), rho) {
            Ok(res) => SweepEntry {
                rho,
                a_hat: Some(matrix_rows(&res.a_hat)),
                error: None,
            },
            Err(err) => SweepEntry {
                rho,
                a_hat: None,
                error: Some(err.to_string()),
            },
        };
        entries.push(entry);
    }
    Ok(entries)
}
