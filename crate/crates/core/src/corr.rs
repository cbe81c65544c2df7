//! Empirical correlation function at integer lags, and its derivatives at
//! lag zero by central finite differences with symmetry projections.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{skew_part, sym_part, Matrix};
use crate::sim::TimeSeries;

#[derive(Debug, Error)]
pub enum CorrError {
    #[error("lag {lag} exceeds the {len}-sample series")]
    LagTooLarge { lag: usize, len: usize },
    #[error("need at least {needed} samples for the order-{order} stencils, got {got}")]
    InsufficientSamples {
        needed: usize,
        got: usize,
        order: usize,
    },
    #[error("unsupported stencil order {0}; available orders are 2 and 4")]
    UnsupportedOrder(usize),
    #[error("lag table is missing K({0} dt)")]
    MissingLag(usize),
}

pub type Result<T> = std::result::Result<T, CorrError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrSource {
    Empirical,
    Analytic,
}

/// Correlation matrices at the origin (`K(0)` through `K'''(0)`) plus lagged
/// values `K(k dt)`.
///
/// After projection `k0` and `k2` are symmetric and `k1`/`k3` skew-symmetric;
/// in one dimension the odd derivatives vanish identically.
#[derive(Debug, Clone)]
pub struct CorrSet {
    pub k0: Matrix,
    pub k1: Matrix,
    pub k2: Matrix,
    pub k3: Matrix,
    pub lagged: BTreeMap<usize, Matrix>,
    pub dt: f64,
    pub stencil_order: usize,
    pub source: CorrSource,
}

impl CorrSet {
    pub fn dim(&self) -> usize {
        self.k0.nrows()
    }

    pub fn deriv(&self, m: usize) -> &Matrix {
        match m {
            0 => &self.k0,
            1 => &self.k1,
            2 => &self.k2,
            3 => &self.k3,
            _ => panic!("correlation derivatives are kept up to order 3"),
        }
    }
}

/// `(M + M^T)/2` or `(M - M^T)/2` depending on the requested parity.
pub fn project_symmetry(m: &Matrix, parity: Parity) -> Matrix {
    match parity {
        Parity::Even => sym_part(m),
        Parity::Odd => skew_part(m),
    }
}

/// Time-average estimator of the correlation at lag `k`:
/// the mean of `x(t + k dt) x(t)^T` over the `N - k + 1` admissible starts.
///
/// This is the raw second moment; callers subtract the series mean first
/// (see [`TimeSeries::centered`]) unless they have reason not to.
pub fn corr_at_lag(ts: &TimeSeries, k: usize) -> Result<Matrix> {
    let len = ts.len();
    if k >= len {
        return Err(CorrError::LagTooLarge { lag: k, len });
    }
    let n = ts.dim();
    let mut acc = Matrix::zeros(n, n);
    let data = ts.data();
    for i in 0..len - k {
        let lead = &data[(i + k) * n..(i + k + 1) * n];
        let lag = &data[i * n..(i + 1) * n];
        for r in 0..n {
            for c in 0..n {
                acc[(r, c)] += lead[r] * lag[c];
            }
        }
    }
    Ok(acc / (len - k) as f64)
}

/// Widest lag needed by the order-`stencil_order` filter set.
pub fn stencil_width(stencil_order: usize) -> Result<usize> {
    match stencil_order {
        2 => Ok(5),
        4 => Ok(12),
        other => Err(CorrError::UnsupportedOrder(other)),
    }
}

/// Basis powers for the windowed derivative filters, split by parity.
///
/// The correlation function is only twice differentiable at the origin: its
/// one-sided third derivative does not vanish, so any filter that ignores
/// the `|s|^3` term carries an O(dt) bias in the second derivative that
/// swamps the sampling noise at realistic steps. Both filter sets therefore
/// carry the cubic term; the order-4 set adds the quartic and a wider
/// window.
fn basis_powers(stencil_order: usize) -> Result<(&'static [f64], &'static [f64])> {
    match stencil_order {
        2 => Ok((&[0.0, 2.0, 3.0], &[1.0, 3.0])),
        4 => Ok((&[0.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 4.0])),
        other => Err(CorrError::UnsupportedOrder(other)),
    }
}

/// Least-squares derivative filter on one parity component: fits the lag
/// values at `s = 0, h, .., width*h` against `s^p` for the given powers and
/// returns the coefficient of `s^target` times `target!`.
fn fit_derivative(
    lags: &[Matrix],
    h: f64,
    powers: &[f64],
    target: f64,
    parity: Parity,
) -> Matrix {
    let n = lags[0].nrows();
    let width = lags.len() - 1;
    let span = width as f64 * h;
    // Normalized abscissa keeps the design matrix well scaled.
    let design = nalgebra::DMatrix::<f64>::from_fn(lags.len(), powers.len(), |k, j| {
        let u = k as f64 / width as f64;
        if powers[j] == 0.0 {
            1.0
        } else {
            u.powf(powers[j])
        }
    });
    let svd = design.svd(true, true);
    let target_idx = powers
        .iter()
        .position(|&p| p == target)
        .expect("target power present in basis");
    let factorial: f64 = (1..=(target as usize)).map(|i| i as f64).product();
    let mut out = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let y = nalgebra::DVector::from_fn(lags.len(), |k, _| match parity {
                Parity::Even => 0.5 * (lags[k][(r, c)] + lags[k][(c, r)]),
                Parity::Odd => 0.5 * (lags[k][(r, c)] - lags[k][(c, r)]),
            });
            let sol = svd.solve(&y, 1e-13).expect("filter design is full rank");
            out[(r, c)] = factorial * sol[target_idx] / span.powf(target);
        }
    }
    project_symmetry(&out, parity)
}

/// Applies the windowed central-difference filters to a table of lagged
/// correlation matrices.
///
/// `lags[k]` must hold `K(k dt)` for `k = 0..=stencil_width`; negative lags
/// follow from `K(-k dt) = K(k dt)^T`, which is how the parity split below
/// realizes a symmetric (central) window. The derivative estimates are
/// parity-projected by construction.
pub fn derivs_from_lags(
    lags: &BTreeMap<usize, Matrix>,
    dt: f64,
    stencil_order: usize,
    source: CorrSource,
) -> Result<CorrSet> {
    let width = stencil_width(stencil_order)?;
    let (even_powers, odd_powers) = basis_powers(stencil_order)?;
    let mut table = Vec::with_capacity(width + 1);
    for k in 0..=width {
        table.push(lags.get(&k).ok_or(CorrError::MissingLag(k))?.clone());
    }

    let k0 = project_symmetry(&table[0], Parity::Even);
    let k1 = fit_derivative(&table, dt, odd_powers, 1.0, Parity::Odd);
    let k2 = fit_derivative(&table, dt, even_powers, 2.0, Parity::Even);
    let k3 = fit_derivative(&table, dt, odd_powers, 3.0, Parity::Odd);

    Ok(CorrSet {
        k0,
        k1,
        k2,
        k3,
        lagged: lags.clone(),
        dt,
        stencil_order,
        source,
    })
}

/// Estimates the correlation derivatives at the origin from a time series,
/// subtracting the sample mean first.
pub fn estimate_derivatives(ts: &TimeSeries, stencil_order: usize) -> Result<CorrSet> {
    estimate_derivatives_with(ts, stencil_order, true)
}

/// As [`estimate_derivatives`], with mean subtraction controllable.
pub fn estimate_derivatives_with(
    ts: &TimeSeries,
    stencil_order: usize,
    subtract_mean: bool,
) -> Result<CorrSet> {
    let width = stencil_width(stencil_order)?;
    if ts.len() <= width + 1 {
        return Err(CorrError::InsufficientSamples {
            needed: width + 2,
            got: ts.len(),
            order: stencil_order,
        });
    }
    let centered;
    let series = if subtract_mean {
        centered = ts.centered();
        &centered
    } else {
        ts
    };
    let mut lagged = BTreeMap::new();
    for k in 0..=width {
        lagged.insert(k, corr_at_lag(series, k)?);
    }
    derivs_from_lags(&lagged, series.dt(), stencil_order, CorrSource::Empirical)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn series_from(data: Vec<f64>, dim: usize, dt: f64) -> TimeSeries {
        TimeSeries::new(dt, 0.0, dim, data).unwrap()
    }

    #[test]
    fn constant_series_gives_outer_product() {
        let c = [2.0, -3.0];
        let data: Vec<f64> = std::iter::repeat(c).take(50).flatten().collect();
        let ts = series_from(data, 2, 0.1);
        for k in [0usize, 3, 10] {
            let km = corr_at_lag(&ts, k).unwrap();
            for r in 0..2 {
                for cc in 0..2 {
                    assert_relative_eq!(km[(r, cc)], c[r] * c[cc], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn lag_zero_is_symmetric_psd() {
        let data: Vec<f64> = (0..300).map(|i| ((i * 7919 % 101) as f64 - 50.0) / 17.0).collect();
        let ts = series_from(data, 3, 0.01);
        let k0 = corr_at_lag(&ts, 0).unwrap();
        assert!((k0.clone() - k0.transpose()).norm() < 1e-12);
        let eig = k0.symmetric_eigen();
        assert!(eig.eigenvalues.min() > -1e-12);
    }

    #[test]
    fn lag_too_large_is_rejected() {
        let ts = series_from(vec![0.0, 1.0, 2.0], 1, 0.1);
        assert!(matches!(
            corr_at_lag(&ts, 3),
            Err(CorrError::LagTooLarge { .. })
        ));
    }

    #[test]
    fn projection_cases() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let sym = project_symmetry(&m, Parity::Even);
        let skew = project_symmetry(&m, Parity::Odd);
        assert_relative_eq!(&sym + &skew, m, epsilon = 1e-15);
        let s = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_relative_eq!(project_symmetry(&s, Parity::Even), s, epsilon = 1e-15);
        assert!(project_symmetry(&s, Parity::Odd).norm() < 1e-15);
    }

    /// Lag table for a matrix polynomial K(s) = sum_m P_m s^m with the
    /// parity structure of a correlation function (even coefficients
    /// symmetric, odd skew), so that K(-s) = K(s)^T holds.
    fn polynomial_lags(coeffs: &[Matrix], dt: f64, width: usize) -> BTreeMap<usize, Matrix> {
        let n = coeffs[0].nrows();
        let mut lags = BTreeMap::new();
        for k in 0..=width {
            let s = k as f64 * dt;
            let mut acc = Matrix::zeros(n, n);
            for (m, p) in coeffs.iter().enumerate() {
                acc += p * s.powi(m as i32);
            }
            lags.insert(k, acc);
        }
        lags
    }

    #[test]
    fn stencils_exact_on_quadratic_polynomials() {
        let p0 = Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let p1 = Matrix::from_row_slice(2, 2, &[0.0, -0.7, 0.7, 0.0]);
        let p2 = Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, -0.2]);
        let dt = 0.01;
        let lags = polynomial_lags(&[p0.clone(), p1.clone(), p2.clone()], dt, 5);
        let set = derivs_from_lags(&lags, dt, 2, CorrSource::Analytic).unwrap();
        assert!((set.k0 - &p0).norm() < 1e-10);
        assert!((set.k1 - &p1).norm() < 1e-10);
        assert!((set.k2 - &p2 * 2.0).norm() < 1e-10);
        assert!(set.k3.norm() < 1e-10);
    }

    #[test]
    fn fourth_order_stencils_exact_on_quartics() {
        let p0 = Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let p1 = Matrix::from_row_slice(2, 2, &[0.0, -0.7, 0.7, 0.0]);
        let p2 = Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, -0.2]);
        let p3 = Matrix::from_row_slice(2, 2, &[0.0, 0.4, -0.4, 0.0]);
        let p4 = Matrix::from_row_slice(2, 2, &[-0.3, 0.05, 0.05, 0.6]);
        let dt = 0.02;
        let coeffs = [p0.clone(), p1.clone(), p2.clone(), p3.clone(), p4];
        let lags = polynomial_lags(&coeffs, dt, 12);
        let set = derivs_from_lags(&lags, dt, 4, CorrSource::Analytic).unwrap();
        assert!((set.k1 - &p1).norm() < 1e-9);
        assert!((set.k2 - &p2 * 2.0).norm() < 1e-9);
        assert!((set.k3 - &p3 * 6.0).norm() < 1e-9);
    }

    #[test]
    fn filters_converge_on_analytic_colored_values() {
        // Second-order convergence of the K'' estimate on exact colored
        // correlation values; the windowed filter keeps the cubic term that
        // the correlation class requires.
        use crate::linalg::{SpdMatrix, StableMatrix};
        use crate::sim::SystemParams;
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.3, -2.0]);
        let g = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 0.8]);
        let params = SystemParams::new(
            StableMatrix::new(a).unwrap(),
            SpdMatrix::new(&g * g.transpose() + Matrix::identity(2, 2) * 0.3).unwrap(),
            0.1,
        )
        .unwrap();
        let aug = crate::oracle::build_augmented(&params).unwrap();
        let truth = aug.analytic_deriv_matrices();
        let mut errs_k1 = Vec::new();
        let mut errs_k2 = Vec::new();
        for dt in [0.04, 0.02, 0.01] {
            let set = aug.analytic_corrset(dt, 5, 2).unwrap();
            let fit = derivs_from_lags(&set.lagged, dt, 2, CorrSource::Analytic).unwrap();
            errs_k1.push((fit.k1 - &truth[1]).norm() / truth[1].norm());
            errs_k2.push((fit.k2 - &truth[2]).norm() / truth[2].norm());
        }
        for errs in [&errs_k1, &errs_k2] {
            // Errors fall monotonically, and the 4x step refinement buys at
            // least an order of magnitude (the coarsest step spans two noise
            // correlation times, so the first halving is preasymptotic).
            assert!(errs[0] > errs[1] && errs[1] > errs[2], "not monotone: {errs:?}");
            assert!(errs[0] / errs[2] > 10.0, "overall decay too slow: {errs:?}");
        }
    }

    #[test]
    fn one_dimensional_odd_derivatives_vanish() {
        let data: Vec<f64> = (0..5000)
            .map(|i| (i as f64 * 0.37).sin() + 0.2 * (i as f64 * 0.11).cos())
            .collect();
        let ts = series_from(data, 1, 0.01);
        let set = estimate_derivatives(&ts, 2).unwrap();
        assert_eq!(set.k1[(0, 0)], 0.0);
        assert_eq!(set.k3[(0, 0)], 0.0);
    }

    #[test]
    fn insufficient_samples_is_an_error() {
        let ts = series_from(vec![0.0, 1.0, 2.0], 1, 0.1);
        assert!(matches!(
            estimate_derivatives(&ts, 2),
            Err(CorrError::InsufficientSamples { .. })
        ));
    }

    proptest! {
        #[test]
        fn symmetry_projection_decomposes(entries in proptest::collection::vec(-10.0f64..10.0, 9)) {
            let m = Matrix::from_row_slice(3, 3, &entries);
            let even = project_symmetry(&m, Parity::Even);
            let odd = project_symmetry(&m, Parity::Odd);
            prop_assert!(((&even + &odd) - &m).norm() < 1e-12);
            prop_assert!((&even - even.transpose()).norm() < 1e-12);
            prop_assert!((&odd + odd.transpose()).norm() < 1e-12);
        }

        #[test]
        fn corr_lag_zero_symmetric(raw in proptest::collection::vec(-5.0f64..5.0, 24..60)) {
            let len = raw.len() / 2 * 2;
            let ts = TimeSeries::new(0.1, 0.0, 2, raw[..len].to_vec()).unwrap();
            let k0 = corr_at_lag(&ts, 0).unwrap();
            prop_assert!((k0.clone() - k0.transpose()).norm() < 1e-12);
        }
    }
}
