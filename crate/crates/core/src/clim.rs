//! Colored linear inverse model: the dynamical matrix from the joint linear
//! system built on the second- and third-derivative identities of the
//! correlation function, then the diffusion matrix from the generalized
//! fluctuation-dissipation relation or the first-derivative identity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corr::{self, CorrError, CorrSet};
use crate::linalg::{
    self, resolvent, skew_part, solve_symmetric_unknown, sym_part, LinalgError, Matrix,
};
use crate::sim::TimeSeries;

#[derive(Debug, Error)]
pub enum ClimError {
    #[error("noise correlation time must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("the stacked derivative system is rank-deficient (condition estimate {cond:.3e})")]
    RankDeficient { cond: f64 },
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ClimError>;

/// Which identity closes the diffusion solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMethod {
    /// Generalized fluctuation-dissipation relation, a symmetric
    /// `n(n+1)/2`-dimensional linear solve.
    Fdr,
    /// First-derivative identity `K'(0) = A K(0) + Q B^T`, an
    /// `n`-dimensional solve closed by symmetrizing the result.
    Kprime,
}

/// Condition number above which the diffusion solve is flagged as
/// ill-posed.
pub const COND_WARN_THRESHOLD: f64 = 20.0;

/// Estimation options beyond the mandatory noise correlation time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClimOptions {
    pub stencil_order: usize,
    /// `None` picks the diffusion identity by the dimension/correlation-time
    /// rule; `Some` overrides it.
    pub q_method: Option<QMethod>,
    /// Drops the third-derivative block from the dynamical solve; valid when
    /// the dynamics is known to be negative definite.
    pub assume_negative_definite: bool,
    pub subtract_mean: bool,
}

impl Default for ClimOptions {
    fn default() -> Self {
        Self {
            stencil_order: 2,
            q_method: None,
            assume_negative_definite: false,
            subtract_mean: true,
        }
    }
}

/// Reconstruction report: estimates, solver condition numbers, identity
/// residuals evaluated at the estimates, and misfit warnings.
#[derive(Debug, Clone)]
pub struct EstimationReport {
    pub a_hat: Matrix,
    pub q_hat: Matrix,
    pub b_hat: Matrix,
    pub tau: f64,
    pub q_method: QMethod,
    pub cond_a: f64,
    pub cond_q: f64,
    pub residuals: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

/// Picks the diffusion identity: the first-derivative solve for large
/// correlation times or dimensions, the generalized relation otherwise.
pub fn default_q_method(n: usize, tau: f64) -> QMethod {
    if n >= 7 || tau >= 0.5 {
        QMethod::Kprime
    } else {
        QMethod::Fdr
    }
}

/// Solves the stacked linear system in the entries of the dynamical matrix
/// built from the second- and third-derivative identities:
///
/// - `K''(0) = (A X + X^T A^T)/2` with `X = K'(0) + K(0)/tau`,
/// - `K'''(0) - K'(0)/tau^2 = (A Y - Y A^T)/2` with `Y = K''(0) - K(0)/tau^2`.
///
/// Returns the least-squares solution and the 2-norm condition number of the
/// stacked system.
///
/// With `assume_negative_definite` the third-derivative block is dropped and
/// the unknown is restricted to symmetric matrices: the second identity maps
/// onto symmetric matrices only, so without the symmetry restriction the
/// reduced system is structurally rank-deficient.
pub fn solve_a(corr: &CorrSet, tau: f64, assume_negative_definite: bool) -> Result<(Matrix, f64)> {
    if tau <= 0.0 {
        return Err(ClimError::NonPositiveTau(tau));
    }
    let n = corr.dim();
    let x = &corr.k1 + &corr.k0 / tau;
    let y = &corr.k2 - &corr.k0 / (tau * tau);
    let rhs2 = &corr.k2;
    let rhs3 = &corr.k3 - &corr.k1 / (tau * tau);

    let n2 = n * n;
    // Unknown layout: all entries A_pq at column p*n + q, or the upper
    // triangle only when A is asserted symmetric.
    let upper: Vec<(usize, usize)> = (0..n)
        .flat_map(|p| (p..n).map(move |q| (p, q)))
        .collect();
    let cols = if assume_negative_definite {
        upper.len()
    } else {
        n2
    };
    let rows = if assume_negative_definite { n2 } else { 2 * n2 };
    let mut sys = Matrix::zeros(rows, cols);
    let mut b = nalgebra::DVector::zeros(rows);

    // Adds the derivative of ((A M)_ij + (M^T A^T)_ij)/2 with respect to the
    // unknown entries, for the current unknown layout.
    let mut add_sym_product = |sys: &mut Matrix, row: usize, i: usize, j: usize, m: &Matrix| {
        if assume_negative_definite {
            for (col, &(p, q)) in upper.iter().enumerate() {
                let mut c = 0.0;
                if i == p {
                    c += 0.5 * m[(q, j)];
                }
                if j == p {
                    c += 0.5 * m[(q, i)];
                }
                if p != q {
                    if i == q {
                        c += 0.5 * m[(p, j)];
                    }
                    if j == q {
                        c += 0.5 * m[(p, i)];
                    }
                }
                sys[(row, col)] += c;
            }
        } else {
            for q in 0..n {
                // d/dA_iq of (A M)_ij / 2
                sys[(row, i * n + q)] += 0.5 * m[(q, j)];
                // d/dA_jq of (M^T A^T)_ij / 2
                sys[(row, j * n + q)] += 0.5 * m[(q, i)];
            }
        }
    };

    for i in 0..n {
        for j in 0..n {
            let row2 = i * n + j;
            add_sym_product(&mut sys, row2, i, j, &x);
            b[row2] = rhs2[(i, j)];
            if !assume_negative_definite {
                let row3 = n2 + i * n + j;
                for q in 0..n {
                    sys[(row3, i * n + q)] += 0.5 * y[(q, j)];
                    sys[(row3, j * n + q)] -= 0.5 * y[(i, q)];
                }
                b[row3] = rhs3[(i, j)];
            }
        }
    }

    let svd = sys.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let cutoff = smax * (cols.max(rows) as f64) * f64::EPSILON;
    if smin <= cutoff {
        return Err(ClimError::RankDeficient { cond });
    }
    let sol = svd
        .solve(&b, cutoff)
        .map_err(|e| LinalgError::DecompositionFailure {
            context: e.to_string(),
        })?;
    let a_hat = if assume_negative_definite {
        let mut a = Matrix::zeros(n, n);
        for (col, &(p, q)) in upper.iter().enumerate() {
            a[(p, q)] = sol[col];
            a[(q, p)] = sol[col];
        }
        a
    } else {
        Matrix::from_fn(n, n, |i, j| sol[i * n + j])
    };
    Ok((a_hat, cond))
}

/// Diffusion from the generalized fluctuation-dissipation relation:
/// solves `Q B^T + B Q = -(A K(0) + K(0) A^T)` for symmetric `Q`, where
/// `B = (I - tau A)^{-1}`. Returns the condition number of the symmetric
/// solve alongside.
pub fn solve_q_fdr(a_hat: &Matrix, k0: &Matrix, tau: f64) -> Result<(Matrix, f64, Vec<String>)> {
    let mut warnings = Vec::new();
    warn_if_unstable(a_hat, &mut warnings);
    let b = resolvent(a_hat, tau)?;
    let rhs = -(a_hat * k0 + k0 * a_hat.transpose());
    let (q_hat, cond) = solve_symmetric_unknown(&b, &rhs)?;
    Ok((q_hat, cond, warnings))
}

/// Diffusion from the first-derivative identity:
/// `Q = (K'(0) - A K(0)) B^{-T}`, returned as its symmetric part with the
/// discarded asymmetry recorded in the warnings.
pub fn solve_q_kprime(
    a_hat: &Matrix,
    k0: &Matrix,
    k1: &Matrix,
    tau: f64,
) -> Result<(Matrix, Vec<String>)> {
    let mut warnings = Vec::new();
    warn_if_unstable(a_hat, &mut warnings);
    let n = a_hat.nrows();
    // B^{-T} = (I - tau A)^T, no inversion needed.
    let b_inv_t = (Matrix::identity(n, n) - a_hat * tau).transpose();
    let q_raw = (k1 - a_hat * k0) * b_inv_t;
    let asymmetry = skew_part(&q_raw).norm();
    if asymmetry > 1e-10 * q_raw.norm().max(1.0) {
        warnings.push(format!(
            "first-derivative diffusion solve discarded asymmetry of norm {asymmetry:.3e}"
        ));
    }
    Ok((sym_part(&q_raw), warnings))
}

fn warn_if_unstable(a_hat: &Matrix, warnings: &mut Vec<String>) {
    let max_re = a_hat
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_re >= 0.0 {
        warnings.push(format!(
            "dynamical estimate is not stable (max eigenvalue real part {max_re:.3e})"
        ));
    }
}

/// Full reconstruction from a correlation set: dynamical matrix, resolvent,
/// diffusion, residuals of the defining identities at the estimates, and
/// misfit warnings.
pub fn estimate_from_corr(corr: &CorrSet, tau: f64, opts: &ClimOptions) -> Result<EstimationReport> {
    let n = corr.dim();
    let (a_hat, cond_a) = solve_a(corr, tau, opts.assume_negative_definite)?;
    let b_hat = resolvent(&a_hat, tau)?;
    let q_method = opts.q_method.unwrap_or_else(|| default_q_method(n, tau));

    let mut warnings;
    let (q_hat, cond_q) = match q_method {
        QMethod::Fdr => {
            let (q, cond, w) = solve_q_fdr(&a_hat, &corr.k0, tau)?;
            warnings = w;
            (q, cond)
        }
        QMethod::Kprime => {
            let (q, w) = solve_q_kprime(&a_hat, &corr.k0, &corr.k1, tau)?;
            warnings = w;
            // The first-derivative identity is an n-dimensional solve; its
            // conditioning is that of the resolvent factor.
            let cond = linalg::condition_number(&b_hat)?;
            (q, cond)
        }
    };

    if cond_q > COND_WARN_THRESHOLD {
        warnings.push(format!(
            "diffusion solve is ill-conditioned (condition number {cond_q:.3e} > {COND_WARN_THRESHOLD})"
        ));
    }
    let min_eig = q_hat.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < 0.0 {
        warnings.push(format!(
            "diffusion estimate has a negative eigenvalue ({min_eig:.3e})"
        ));
    }

    let mut residuals = BTreeMap::new();
    residuals.insert(
        "fdr".to_string(),
        (&a_hat * &corr.k0
            + &corr.k0 * a_hat.transpose()
            + &q_hat * b_hat.transpose()
            + &b_hat * &q_hat)
            .norm(),
    );
    let x = &corr.k1 + &corr.k0 / tau;
    residuals.insert(
        "second_deriv".to_string(),
        (&corr.k2 - (&a_hat * &x + x.transpose() * a_hat.transpose()) * 0.5).norm(),
    );
    let y = &corr.k2 - &corr.k0 / (tau * tau);
    residuals.insert(
        "third_deriv".to_string(),
        (&corr.k3 - &corr.k1 / (tau * tau) - (&a_hat * &y - &y * a_hat.transpose()) * 0.5)
            .norm(),
    );

    Ok(EstimationReport {
        a_hat,
        q_hat,
        b_hat,
        tau,
        q_method,
        cond_a,
        cond_q,
        residuals,
        warnings,
    })
}

/// End-to-end reconstruction from a time series with known noise
/// correlation time.
pub fn estimate(ts: &TimeSeries, tau: f64, opts: &ClimOptions) -> Result<EstimationReport> {
    if tau <= 0.0 {
        return Err(ClimError::NonPositiveTau(tau));
    }
    let corr = corr::estimate_derivatives_with(ts, opts.stencil_order, opts.subtract_mean)?;
    estimate_from_corr(&corr, tau, opts)
}
