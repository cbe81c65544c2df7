//! Exact analytic ground truth for every quantity the estimators
//! approximate, built from the augmented `2n`-dimensional linear system.
//!
//! The derivative targets come from powers of the augmented drift applied to
//! the stationary covariance, so they carry no differencing error and are
//! independent of the stencil code under test.

use num_complex::Complex64;
use thiserror::Error;

use crate::corr::{CorrSet, CorrSource, Parity};
use crate::linalg::{
    self, eigen_decompose, matrix_sqrt_spd, solve_sylvester_like, LinalgError, Matrix, SpdMatrix,
    StableMatrix,
};
use crate::sim::SystemParams;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("the augmented construction requires tau > 0, got {0}")]
    WhiteNoise(f64),
    #[error("negative lag {0} (negative lags follow from the transpose identity)")]
    NegativeLag(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Augmented `2n`-dimensional representation of a colored system: drift
/// `M = [[A, sqrt(2Q)], [0, -I/tau]]`, noise covariance `D` (zero except the
/// lower-right `I/tau^2` block), and the stationary covariance `Sigma`
/// solving `M Sigma + Sigma M^T + D = 0`.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    drift: Matrix,
    noise_cov: Matrix,
    sigma: Matrix,
    n: usize,
    tau: f64,
}

/// Assembles the augmented system and solves the `2n` Lyapunov equation for
/// the stationary covariance.
pub fn build_augmented(params: &SystemParams) -> Result<AugmentedSystem> {
    let tau = params.tau();
    if tau <= 0.0 {
        return Err(OracleError::WhiteNoise(tau));
    }
    let n = params.dim();
    let sqrt_2q = matrix_sqrt_spd(&SpdMatrix::new(params.q() * 2.0)?);

    let mut drift = Matrix::zeros(2 * n, 2 * n);
    drift.view_mut((0, 0), (n, n)).copy_from(params.a());
    drift.view_mut((0, n), (n, n)).copy_from(&sqrt_2q);
    drift
        .view_mut((n, n), (n, n))
        .copy_from(&(Matrix::identity(n, n) * (-1.0 / tau)));

    let mut noise_cov = Matrix::zeros(2 * n, 2 * n);
    noise_cov
        .view_mut((n, n), (n, n))
        .copy_from(&(Matrix::identity(n, n) / (tau * tau)));

    let sigma = solve_sylvester_like(&drift, &drift.transpose(), &(-&noise_cov))?;
    Ok(AugmentedSystem {
        drift,
        noise_cov,
        sigma,
        n,
        tau,
    })
}

impl AugmentedSystem {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn drift(&self) -> &Matrix {
        &self.drift
    }

    pub fn noise_cov(&self) -> &Matrix {
        &self.noise_cov
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    /// Stationary covariance of the observable (upper-left block).
    pub fn cov_xx(&self) -> Matrix {
        self.sigma.view((0, 0), (self.n, self.n)).clone_owned()
    }

    /// Stationary cross covariance of observable and noise (upper-right
    /// block), equal to `B sqrt(Q/2)`.
    pub fn cov_x_eta(&self) -> Matrix {
        self.sigma.view((0, self.n), (self.n, self.n)).clone_owned()
    }

    /// Exact correlation function of the observable at lag `s >= 0`: the
    /// upper-left block of `e^{M s} Sigma`.
    pub fn analytic_corr(&self, s: f64) -> Result<Matrix> {
        if s < 0.0 {
            return Err(OracleError::NegativeLag(s));
        }
        let propagated = linalg::matrix_exp(&self.drift, s)? * &self.sigma;
        Ok(propagated.view((0, 0), (self.n, self.n)).clone_owned())
    }

    /// Exact derivatives of the correlation function at the origin:
    /// upper-left blocks of `M^m Sigma` for `m = 0..3`, parity-projected.
    pub fn analytic_deriv_matrices(&self) -> [Matrix; 4] {
        let n = self.n;
        let ul = |m: &Matrix| m.view((0, 0), (n, n)).clone_owned();
        let m1 = &self.drift * &self.sigma;
        let m2 = &self.drift * &m1;
        let m3 = &self.drift * &m2;
        [
            crate::corr::project_symmetry(&ul(&self.sigma), Parity::Even),
            crate::corr::project_symmetry(&ul(&m1), Parity::Odd),
            crate::corr::project_symmetry(&ul(&m2), Parity::Even),
            crate::corr::project_symmetry(&ul(&m3), Parity::Odd),
        ]
    }

    /// Analytic correlation set: exact derivatives at the origin plus exact
    /// lagged values `K(k dt)` for `k = 0..=max_lag`.
    pub fn analytic_corrset(&self, dt: f64, max_lag: usize, stencil_order: usize) -> Result<CorrSet> {
        let [k0, k1, k2, k3] = self.analytic_deriv_matrices();
        let mut lagged = std::collections::BTreeMap::new();
        // One exponential per step, reused multiplicatively.
        let step = linalg::matrix_exp(&self.drift, dt)?;
        let mut propagated = self.sigma.clone();
        for k in 0..=max_lag {
            lagged.insert(k, propagated.view((0, 0), (self.n, self.n)).clone_owned());
            if k < max_lag {
                propagated = &step * propagated;
            }
        }
        Ok(CorrSet {
            k0,
            k1,
            k2,
            k3,
            lagged,
            dt,
            stencil_order,
            source: CorrSource::Analytic,
        })
    }
}

/// Stationary covariance of the white process: solves
/// `A C + C A^T + 2Q = 0`.
pub fn white_stationary_cov(params: &SystemParams) -> Result<Matrix> {
    let c = solve_sylvester_like(params.a(), &params.a().transpose(), &(params.q() * -2.0))?;
    Ok(linalg::sym_part(&c))
}

/// Exact white correlation function `K(s) = e^{A s} K(0)` for `s >= 0`.
pub fn white_corr(a: &Matrix, k0: &Matrix, s: f64) -> Result<Matrix> {
    if s < 0.0 {
        return Err(OracleError::NegativeLag(s));
    }
    Ok(linalg::matrix_exp(a, s)? * k0)
}

/// Effective diffusion matrix of the approximate Fokker-Planck description:
/// the diffusion contracted against the spectrally weighted resolvent,
/// assembled from the eigendecomposition of `A` with the imaginary residue
/// discarded. Reduces to `Q` at `tau = 0` and to `Q B` for symmetric `A`.
pub fn effective_diffusion(a: &StableMatrix, q: &SpdMatrix, tau: f64) -> Result<Matrix> {
    let decomp = eigen_decompose(a.matrix())?;
    let weighted = decomp.apply_spectral(|l| Complex64::new(1.0, 0.0) / (Complex64::new(1.0, 0.0) - l * tau));
    let re = weighted.map(|z| z.re);
    let im_norm = weighted.map(|z| z.im).norm();
    if im_norm > 1e-10 * re.norm().max(1.0) {
        return Err(OracleError::Linalg(LinalgError::DecompositionFailure {
            context: format!("imaginary residue {im_norm:.3e} in the effective diffusion"),
        }));
    }
    Ok(q.matrix() * re)
}

/// Frobenius norm of `A C + C A^T + S + S^T`, the defect of the approximate
/// fluctuation-dissipation relation.
pub fn approx_fdr_residual(a: &Matrix, c: &Matrix, s: &Matrix) -> f64 {
    (a * c + c * a.transpose() + s + s.transpose()).norm()
}

/// One-dimensional unified colored-noise approximation: effective drift
/// `a/(1 - tau a)` and effective noise amplitude `sqrt(2q)/(1 - tau a)`.
pub fn ucna_1d(a: f64, q: f64, tau: f64) -> (f64, f64) {
    let denom = 1.0 - tau * a;
    (a / denom, (2.0 * q).sqrt() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::resolvent;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn scalar_params(a: f64, q: f64, tau: f64) -> SystemParams {
        SystemParams::new(
            StableMatrix::new(Matrix::from_element(1, 1, a)).unwrap(),
            SpdMatrix::new(Matrix::from_element(1, 1, q)).unwrap(),
            tau,
        )
        .unwrap()
    }

    fn random_params(n: usize, tau: f64, rng: &mut StdRng) -> SystemParams {
        let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
            - Matrix::identity(n, n) * (1.0 + n as f64 * 0.4);
        let g = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &g * g.transpose() + Matrix::identity(n, n) * 0.3;
        SystemParams::new(
            StableMatrix::new(a).unwrap(),
            SpdMatrix::new(q).unwrap(),
            tau,
        )
        .unwrap()
    }

    #[test]
    fn scalar_augmented_covariance() {
        let aug = build_augmented(&scalar_params(-1.0, 1.0, 0.05)).unwrap();
        let sigma = aug.sigma();
        assert_relative_eq!(sigma[(0, 0)], 0.9523809523809523, epsilon = 1e-9);
        assert_relative_eq!(sigma[(0, 1)], 0.6734350297014738, epsilon = 1e-9);
        assert_relative_eq!(sigma[(1, 1)], 10.0, epsilon = 1e-9);
    }

    #[test]
    fn augmented_invariants_hold() {
        let mut rng = StdRng::seed_from_u64(31);
        for n in [1usize, 3, 5] {
            for tau in [0.05, 0.1, 0.5] {
                let params = random_params(n, tau, &mut rng);
                let aug = build_augmented(&params).unwrap();
                let lyap = (aug.drift() * aug.sigma()
                    + aug.sigma() * aug.drift().transpose()
                    + aug.noise_cov())
                .norm();
                assert!(lyap < 1e-10 * aug.noise_cov().norm().max(1.0));

                // Lower-right block is I/(2 tau).
                let eta_block = aug.sigma().view((n, n), (n, n)).clone_owned();
                assert!((eta_block - Matrix::identity(n, n) / (2.0 * tau)).norm() < 1e-10 / tau);

                // Upper-left block solves the generalized FDR for (A, Q, tau).
                let c = aug.cov_xx();
                let b = resolvent(params.a(), tau).unwrap();
                let gfdr = (params.a() * &c
                    + &c * params.a().transpose()
                    + params.q() * b.transpose()
                    + &b * params.q())
                .norm();
                assert!(gfdr < 1e-10 * c.norm().max(1.0));

                // Cross block orientation: <x eta^T> = B sqrt(Q/2).
                let sqq2 = matrix_sqrt_spd(&SpdMatrix::new(params.q() * 0.5).unwrap());
                assert!((aug.cov_x_eta() - &b * sqq2).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn derivative_identities_hold_at_oracle_values() {
        let mut rng = StdRng::seed_from_u64(77);
        for n in [1usize, 2, 4] {
            for tau in [0.05, 0.5] {
                let params = random_params(n, tau, &mut rng);
                let aug = build_augmented(&params).unwrap();
                let [k0, k1, k2, k3] = aug.analytic_deriv_matrices();
                let a = params.a();
                let x = &k1 + &k0 / tau;
                let r2 = (&k2 - (a * &x + x.transpose() * a.transpose()) * 0.5).norm();
                assert!(r2 < 1e-10, "second-derivative identity residual {r2:.3e}");
                let y = &k2 - &k0 / (tau * tau);
                let r3 = (&k3 - &k1 / (tau * tau) - (a * &y - &y * a.transpose()) * 0.5).norm();
                assert!(r3 < 1e-10, "third-derivative identity residual {r3:.3e}");
            }
        }
    }

    #[test]
    fn scalar_derivatives_match_closed_form() {
        let aug = build_augmented(&scalar_params(-1.0, 1.0, 0.05)).unwrap();
        let [k0, k1, k2, _] = aug.analytic_deriv_matrices();
        assert_relative_eq!(k1[(0, 0)], 0.0, epsilon = 1e-14);
        // K''(0)/K(0) = A/tau = -20.
        assert_relative_eq!(k2[(0, 0)] / k0[(0, 0)], -20.0, epsilon = 1e-8);
    }

    #[test]
    fn analytic_corr_is_smooth_at_origin_unlike_white() {
        let params = scalar_params(-1.0, 1.0, 0.05);
        let aug = build_augmented(&params).unwrap();
        let k0c = aug.analytic_corr(0.0).unwrap()[(0, 0)];
        // One-sided difference quotient of the colored correlation vanishes
        // with the step; the white analogue tends to A K(0) instead.
        let mut colored_prev = f64::INFINITY;
        for h in [1e-2, 1e-3, 1e-4] {
            let dq = (aug.analytic_corr(h).unwrap()[(0, 0)] - k0c) / h;
            assert!(dq.abs() < colored_prev);
            colored_prev = dq.abs();
        }
        assert!(colored_prev < 0.05);

        let white = scalar_params(-1.0, 1.0, 0.0);
        let c = white_stationary_cov(&white).unwrap();
        let h = 1e-6;
        let dq = (white_corr(white.a(), &c, h).unwrap()[(0, 0)] - c[(0, 0)]) / h;
        assert_relative_eq!(dq, -c[(0, 0)], max_relative = 1e-4);
    }

    #[test]
    fn corr_block_transpose_symmetry() {
        let mut rng = StdRng::seed_from_u64(5);
        let params = random_params(3, 0.1, &mut rng);
        let aug = build_augmented(&params).unwrap();
        for s in [0.0, 0.05, 0.3, 1.0] {
            let forward = aug.analytic_corr(s).unwrap();
            // K(-s) via Sigma e^{M^T s}, upper-left block.
            let back = aug.sigma() * linalg::matrix_exp(&aug.drift().transpose(), s).unwrap();
            let back_ul = back.view((0, 0), (3, 3)).clone_owned();
            assert!((forward.transpose() - back_ul).norm() < 1e-10 * forward.norm().max(1.0));
        }
    }

    #[test]
    fn effective_diffusion_limits() {
        let mut rng = StdRng::seed_from_u64(41);
        let params = random_params(4, 0.1, &mut rng);
        let s0 = effective_diffusion(params.stable_a(), params.q_spd(), 0.0).unwrap();
        assert!((s0.clone() - params.q()).norm() < 1e-10 * params.q().norm());

        // Scalar: S = Q / (1 + tau).
        let sp = scalar_params(-1.0, 1.0, 0.05);
        let s = effective_diffusion(sp.stable_a(), sp.q_spd(), 0.05).unwrap();
        assert_relative_eq!(s[(0, 0)], 1.0 / 1.05, epsilon = 1e-12);

        // Symmetric A: S = Q B, and the approximate relation matches the
        // generalized one.
        let sym = linalg::sym_part(&Matrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)))
            - Matrix::identity(3, 3) * 3.0;
        let a = StableMatrix::new(sym).unwrap();
        let g = Matrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let q = SpdMatrix::new(&g * g.transpose() + Matrix::identity(3, 3) * 0.5).unwrap();
        let tau = 0.1;
        let s = effective_diffusion(&a, &q, tau).unwrap();
        let b = resolvent(a.matrix(), tau).unwrap();
        assert!((s.clone() - q.matrix() * &b).norm() < 1e-10 * s.norm().max(1.0));

        let params = SystemParams::new(a, q, tau).unwrap();
        let c = build_augmented(&params).unwrap().cov_xx();
        let resid = approx_fdr_residual(params.a(), &c, &s);
        assert!(resid < 1e-10, "approximate FDR residual {resid:.3e}");
    }

    #[test]
    fn approx_fdr_differs_for_nonsymmetric_dynamics() {
        let mut rng = StdRng::seed_from_u64(53);
        let mut positive = 0;
        for _ in 0..10 {
            let params = random_params(3, 0.2, &mut rng);
            if (params.a() - params.a().transpose()).norm() < 1e-8 {
                continue;
            }
            let s =
                effective_diffusion(params.stable_a(), params.q_spd(), params.tau()).unwrap();
            let c = build_augmented(&params).unwrap().cov_xx();
            if approx_fdr_residual(params.a(), &c, &s) > 1e-6 {
                positive += 1;
            }
        }
        assert!(positive > 0, "expected nonzero approximate-FDR residuals");
    }

    #[test]
    fn approx_fdr_symmetric_construction_is_exact() {
        let mut rng = StdRng::seed_from_u64(59);
        let a = Matrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let c = linalg::sym_part(&Matrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)));
        let s = (&a * &c + &c * a.transpose()) * -0.5;
        let s = linalg::sym_part(&s);
        assert!(approx_fdr_residual(&a, &c, &s) < 1e-12);
    }

    #[test]
    fn ucna_scalar_values() {
        let (a_eff, q_eff) = ucna_1d(-1.0, 1.0, 0.05);
        assert_relative_eq!(a_eff, -0.9523809523809523, epsilon = 1e-12);
        assert_relative_eq!(q_eff, std::f64::consts::SQRT_2 / 1.05, epsilon = 1e-12);

        let (a0, q0) = ucna_1d(-1.0, 1.0, 0.0);
        assert_relative_eq!(a0, -1.0, epsilon = 1e-15);
        assert_relative_eq!(q0, std::f64::consts::SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn build_augmented_rejects_white() {
        assert!(matches!(
            build_augmented(&scalar_params(-1.0, 1.0, 0.0)),
            Err(OracleError::WhiteNoise(_))
        ));
    }
}
