//! Dense real matrix primitives and the structured linear solvers the
//! estimators depend on.
//!
//! Everything here is sized for small systems (n up to a dozen or so), so the
//! structured solves go through explicit Kronecker vectorization: simple,
//! dense, and with direct access to the condition number of the assembled
//! system.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Dense real matrix with row-major entry access.
pub type Matrix = DMatrix<f64>;

/// Complex dense matrix used by the eigendecomposition.
pub type CMatrix = DMatrix<Complex64>;

/// Relative symmetry tolerance accepted when validating an [`SpdMatrix`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvector-matrix condition number beyond which a matrix is treated as
/// numerically defective.
pub const DEFECTIVE_COND_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("matrix is not symmetric within tolerance (asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("matrix is not stable (max eigenvalue real part {max_re:.3e})")]
    NotStable { max_re: f64 },
    #[error("eigendecomposition failed: {context}")]
    DecompositionFailure { context: String },
    #[error("eigenvalue {value} lies on the logarithm branch cut")]
    BranchCut { value: Complex64 },
    #[error("linear system is singular or rank-deficient (condition estimate {cond:.3e})")]
    SingularSystem { cond: f64 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn check_square(m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(())
}

/// Symmetric part `(M + M^T)/2`.
pub fn sym_part(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Skew-symmetric part `(M - M^T)/2`.
pub fn skew_part(m: &Matrix) -> Matrix {
    (m - m.transpose()) * 0.5
}

/// Symmetric positive-definite matrix, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    inner: Matrix,
}

impl SpdMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m)?;
        let scale = m.norm().max(1.0);
        let asymmetry = (&m - m.transpose()).norm() / scale;
        if asymmetry > SYMMETRY_TOL {
            return Err(LinalgError::NotSymmetric { asymmetry });
        }
        let sym = sym_part(&m);
        let eigen = sym.clone().symmetric_eigen();
        let min_eigenvalue = eigen.eigenvalues.min();
        if min_eigenvalue <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite { min_eigenvalue });
        }
        Ok(Self { inner: sym })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }
}

/// Matrix whose eigenvalues all have strictly negative real part.
#[derive(Debug, Clone, PartialEq)]
pub struct StableMatrix {
    inner: Matrix,
}

impl StableMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m)?;
        let max_re = m
            .complex_eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if max_re >= 0.0 {
            return Err(LinalgError::NotStable { max_re });
        }
        Ok(Self { inner: m })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    /// Eigenvalues of the wrapped matrix.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.inner.complex_eigenvalues().iter().copied().collect()
    }
}

/// Full complex eigendecomposition `M = U diag(values) U^{-1}`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    /// Right eigenvector matrix, one eigenvector per column.
    pub vectors: CMatrix,
    pub inv_vectors: CMatrix,
}

impl EigenDecomposition {
    /// `U diag(f(values)) U^{-1}` for an entrywise spectral map.
    pub fn apply_spectral(&self, f: impl Fn(Complex64) -> Complex64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, lambda) in self.values.iter().enumerate() {
            let fv = f(*lambda);
            for i in 0..n {
                scaled[(i, k)] *= fv;
            }
        }
        scaled * &self.inv_vectors
    }
}

/// Complex eigendecomposition of a real square matrix via the complex Schur
/// form. Errors if the matrix is numerically defective (eigenvector matrix
/// condition above [`DEFECTIVE_COND_LIMIT`]).
pub fn eigen_decompose(m: &Matrix) -> Result<EigenDecomposition> {
    let n = check_square(m)?;
    check_finite(m)?;
    let mc: CMatrix = m.map(|x| Complex64::new(x, 0.0));
    let schur = Schur::try_new(mc, f64::EPSILON, 10_000).ok_or_else(|| {
        LinalgError::DecompositionFailure {
            context: "Schur iteration did not converge".to_string(),
        }
    })?;
    let (q, t) = schur.unpack();

    let values: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let t_scale = t.norm().max(f64::MIN_POSITIVE);

    // Eigenvectors of the triangular factor by back-substitution; repeated
    // eigenvalues get a perturbed denominator, with the conditioning check
    // below rejecting genuinely defective cases.
    let mut w = CMatrix::zeros(n, n);
    for k in 0..n {
        w[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += t[(i, j)] * w[(j, k)];
            }
            let mut denom = values[k] - t[(i, i)];
            if denom.norm() < f64::EPSILON * t_scale {
                denom = Complex64::new(f64::EPSILON * t_scale, 0.0);
            }
            w[(i, k)] = acc / denom;
        }
        let col_norm = w.column(k).norm();
        for i in 0..=k {
            w[(i, k)] /= Complex64::new(col_norm, 0.0);
        }
    }

    let vectors = q * w;
    let svd = vectors.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > DEFECTIVE_COND_LIMIT {
        return Err(LinalgError::DecompositionFailure {
            context: format!("eigenvector matrix condition {cond:.3e} exceeds defectivity limit"),
        });
    }
    let inv_vectors =
        vectors
            .clone()
            .try_inverse()
            .ok_or_else(|| LinalgError::DecompositionFailure {
                context: "eigenvector matrix is singular".to_string(),
            })?;

    let decomp = EigenDecomposition {
        values,
        vectors,
        inv_vectors,
    };
    let rebuilt = decomp.apply_spectral(|l| l);
    let scale = m.norm().max(1.0);
    let err = (rebuilt - mc_of(m)).norm() / scale;
    if err > 1e-10 {
        return Err(LinalgError::DecompositionFailure {
            context: format!("reconstruction error {err:.3e} exceeds 1e-10"),
        });
    }
    Ok(decomp)
}

fn mc_of(m: &Matrix) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// `e^{M t}` by Padé scaling-and-squaring.
pub fn matrix_exp(m: &Matrix, t: f64) -> Result<Matrix> {
    check_square(m)?;
    check_finite(m)?;
    Ok((m * t).exp())
}

/// Principal matrix logarithm of a real matrix with no eigenvalue on the
/// closed negative real axis.
///
/// Computed through the complex eigendecomposition with the principal branch
/// applied per eigenvalue; the imaginary residue of the reconstruction must
/// stay below 1e-10 relative and is discarded.
pub fn matrix_log_principal(m: &Matrix) -> Result<Matrix> {
    check_square(m)?;
    let decomp = eigen_decompose(m)?;
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for lambda in &decomp.values {
        if lambda.re <= 0.0 && lambda.im.abs() <= 1e-13 * scale {
            return Err(LinalgError::BranchCut { value: *lambda });
        }
    }
    let log_c = decomp.apply_spectral(|l| l.ln());
    let re = log_c.map(|z| z.re);
    let im_norm = log_c.map(|z| z.im).norm();
    if im_norm > 1e-10 * re.norm().max(1.0) {
        return Err(LinalgError::DecompositionFailure {
            context: format!("imaginary residue {im_norm:.3e} of the real logarithm too large"),
        });
    }
    Ok(re)
}

/// Symmetric square root of a positive semidefinite matrix, clamping
/// round-off eigenvalues slightly below zero. Intended for covariance
/// matrices that are singular or nearly so by construction.
pub fn psd_sqrt(m: &Matrix) -> Result<Matrix> {
    check_square(m)?;
    check_finite(m)?;
    let sym = sym_part(m);
    let eigen = sym.clone().symmetric_eigen();
    let scale = eigen.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let min = eigen.eigenvalues.min();
    if min < -1e-9 * scale {
        return Err(LinalgError::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    let mut scaled = eigen.eigenvectors.clone();
    for (k, ev) in eigen.eigenvalues.iter().enumerate() {
        let s = ev.max(0.0).sqrt();
        for i in 0..scaled.nrows() {
            scaled[(i, k)] *= s;
        }
    }
    let root = &scaled * eigen.eigenvectors.transpose();
    Ok(sym_part(&root))
}

/// Symmetric square root `S` of an SPD matrix, with `S S = Q`.
pub fn matrix_sqrt_spd(q: &SpdMatrix) -> Matrix {
    let eigen = q.matrix().clone().symmetric_eigen();
    let mut scaled = eigen.eigenvectors.clone();
    for (k, ev) in eigen.eigenvalues.iter().enumerate() {
        let s = ev.max(0.0).sqrt();
        for i in 0..scaled.nrows() {
            scaled[(i, k)] *= s;
        }
    }
    let root = &scaled * eigen.eigenvectors.transpose();
    sym_part(&root)
}

/// Solves `coeff_l X + X coeff_r = rhs` by dense Kronecker vectorization.
///
/// One step of iterative refinement keeps the residual near the working
/// precision for the mildly ill-conditioned systems the slow-mode draws
/// produce.
pub fn solve_sylvester_like(coeff_l: &Matrix, coeff_r: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let m = check_square(coeff_l)?;
    let n = check_square(coeff_r)?;
    if rhs.nrows() != m || rhs.ncols() != n {
        return Err(LinalgError::DimensionMismatch {
            context: format!(
                "rhs is {}x{}, expected {}x{}",
                rhs.nrows(),
                rhs.ncols(),
                m,
                n
            ),
        });
    }
    let dim = m * n;
    let mut sys = Matrix::zeros(dim, dim);
    for i in 0..m {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..m {
                sys[(row, k * n + j)] += coeff_l[(i, k)];
            }
            for k in 0..n {
                sys[(row, i * n + k)] += coeff_r[(k, j)];
            }
        }
    }
    let b = DVector::from_fn(dim, |r, _| rhs[(r / n, r % n)]);

    let lu = sys.clone().lu();
    let mut x = lu.solve(&b).ok_or_else(|| LinalgError::SingularSystem {
        cond: condition_number(&sys).unwrap_or(f64::INFINITY),
    })?;
    let resid = &b - &sys * &x;
    if let Some(dx) = lu.solve(&resid) {
        x += dx;
    }

    let sol = Matrix::from_fn(m, n, |i, j| x[i * n + j]);
    let resid_norm = (coeff_l * &sol + &sol * coeff_r - rhs).norm();
    if !resid_norm.is_finite() || resid_norm > 1e-10 * rhs.norm().max(1.0) {
        return Err(LinalgError::SingularSystem {
            cond: condition_number(&sys).unwrap_or(f64::INFINITY),
        });
    }
    Ok(sol)
}

/// Solves `Q coeff^T + coeff Q = rhs` for symmetric `Q`, parameterized by the
/// `n(n+1)/2` upper-triangle unknowns. Returns the solution together with the
/// 2-norm condition number of the reduced system.
///
/// The right-hand side is symmetrized on entry; a rank-deficient reduced
/// system falls back to the minimum-norm least-squares solution, with the
/// condition number (infinite in that case) left to the caller to judge.
pub fn solve_symmetric_unknown(coeff: &Matrix, rhs: &Matrix) -> Result<(Matrix, f64)> {
    let n = check_square(coeff)?;
    if rhs.nrows() != n || rhs.ncols() != n {
        return Err(LinalgError::DimensionMismatch {
            context: format!("rhs is {}x{}, expected {}x{}", rhs.nrows(), rhs.ncols(), n, n),
        });
    }
    let rhs = sym_part(rhs);

    // Unknown ordering: (p, q) with p <= q, row-major over the upper triangle.
    let unknowns: Vec<(usize, usize)> = (0..n)
        .flat_map(|p| (p..n).map(move |q| (p, q)))
        .collect();
    let dim = unknowns.len();
    let mut sys = Matrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    for (row, &(i, j)) in unknowns.iter().enumerate() {
        for (col, &(p, q)) in unknowns.iter().enumerate() {
            // d/dQ_pq of (coeff Q + Q coeff^T)_(i,j) with Q_pq = Q_qp.
            let mut c = 0.0;
            if j == q {
                c += coeff[(i, p)];
            }
            if i == p {
                c += coeff[(j, q)];
            }
            if p != q {
                if j == p {
                    c += coeff[(i, q)];
                }
                if i == q {
                    c += coeff[(j, p)];
                }
            }
            sys[(row, col)] = c;
        }
        b[row] = rhs[(i, j)];
    }

    let svd = sys.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let eps = smax * (dim as f64) * f64::EPSILON;
    let x = svd
        .solve(&b, eps)
        .map_err(|e| LinalgError::DecompositionFailure {
            context: e.to_string(),
        })?;

    let mut q_out = Matrix::zeros(n, n);
    for (col, &(p, q)) in unknowns.iter().enumerate() {
        q_out[(p, q)] = x[col];
        q_out[(q, p)] = x[col];
    }
    Ok((q_out, cond))
}

/// Ratio of the largest to the smallest singular value; infinite when the
/// matrix is singular.
pub fn condition_number(m: &Matrix) -> Result<f64> {
    check_square(m)?;
    if m.iter().all(|x| *x == 0.0) {
        return Ok(f64::INFINITY);
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    Ok(if smin > 0.0 { smax / smin } else { f64::INFINITY })
}

/// Resolvent `B = (I - tau A)^{-1}`; the identity at `tau = 0`.
pub fn resolvent(a: &Matrix, tau: f64) -> Result<Matrix> {
    let n = check_square(a)?;
    if tau == 0.0 {
        return Ok(Matrix::identity(n, n));
    }
    let m = Matrix::identity(n, n) - a * tau;
    m.try_inverse().ok_or(LinalgError::SingularSystem {
        cond: f64::INFINITY,
    })
}
