//! Monte Carlo benchmark harness: random system generation, trial
//! execution, relative-error statistics, percentile tables, and the
//! eigenvalue diagnostics export.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clim::{self, ClimOptions, QMethod};
use crate::corr;
use crate::linalg::{eigen_decompose, sym_part, LinalgError, Matrix, SpdMatrix, StableMatrix};
use crate::lim;
use crate::oracle;
use crate::rng;
use crate::sim::{self, Scheme, SimConfig, SystemParams};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    InvalidConfig(String),
    #[error("system generation failed after {0} attempts")]
    GenerationFailed(usize),
    #[error("relative error is undefined against a zero-norm truth")]
    ZeroNormTruth,
    #[error("matrix shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, BenchError>;

/// Rejection-loop cap for the system generator; never observed to trigger,
/// present to guarantee liveness.
const GEN_MAX_ATTEMPTS: usize = 1000;

fn default_quantiles() -> Vec<f64> {
    vec![5.0, 12.5, 25.0, 50.0, 75.0, 87.5, 95.0]
}

fn default_trials() -> usize {
    256
}

fn default_rho_lag() -> usize {
    50
}

fn default_stencil_order() -> usize {
    2
}

fn default_dt() -> f64 {
    0.001
}

fn default_subsample() -> usize {
    10
}

/// Monte Carlo batch configuration. `tau = 0` selects the white/LIM
/// pipeline, `tau > 0` the colored one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    #[serde(default)]
    pub tau: f64,
    pub t1: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_subsample")]
    pub subsample_every: usize,
    #[serde(default = "default_stencil_order")]
    pub stencil_order: usize,
    #[serde(default = "default_rho_lag")]
    pub rho_lag: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub q_method: Option<QMethod>,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default)]
    pub scheme: Scheme,
}

impl BenchConfig {
    pub fn new(dims: Vec<usize>, tau: f64, t1: f64, trials: usize, seed: u64) -> Self {
        Self {
            dims,
            tau,
            t1,
            trials,
            dt: default_dt(),
            subsample_every: default_subsample(),
            stencil_order: default_stencil_order(),
            rho_lag: default_rho_lag(),
            seed,
            q_method: None,
            quantiles: default_quantiles(),
            scheme: Scheme::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(BenchError::InvalidConfig(
                "at least one trial is required".into(),
            ));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(BenchError::InvalidConfig(
                "dimension list must be nonempty with entries >= 1".into(),
            ));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(BenchError::InvalidConfig(format!(
                "tau must be finite and nonnegative, got {}",
                self.tau
            )));
        }
        let mut prev = 0.0;
        for &q in &self.quantiles {
            if !(q > prev && q < 100.0) {
                return Err(BenchError::InvalidConfig(
                    "quantiles must be strictly increasing within (0, 100)".into(),
                ));
            }
            prev = q;
        }
        Ok(())
    }
}

/// One trial's outcome. Error fields are nonnegative and finite when
/// present; a trial that could not complete carries the failure text and
/// empty error fields instead of aborting the batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub e_a: Option<f64>,
    pub e_q: Option<f64>,
    pub e_k0: Option<f64>,
    pub e_k1: Option<f64>,
    pub e_k2: Option<f64>,
    pub e_k3: Option<f64>,
    pub cond_a: Option<f64>,
    pub cond_q: Option<f64>,
    /// Smallest absolute real part over the eigenvalues of the true
    /// dynamical matrix.
    pub min_abs_re_eig: Option<f64>,
    /// Smallest absolute imaginary part over the same spectrum.
    pub min_abs_im_eig: Option<f64>,
    pub warnings: Vec<String>,
    pub failure: Option<String>,
}

impl BenchRecord {
    fn empty(n: usize, trial: usize, seed: u64) -> Self {
        Self {
            n,
            trial,
            seed,
            e_a: None,
            e_q: None,
            e_k0: None,
            e_k1: None,
            e_k2: None,
            e_k3: None,
            cond_a: None,
            cond_q: None,
            min_abs_re_eig: None,
            min_abs_im_eig: None,
            warnings: Vec::new(),
            failure: None,
        }
    }
}

/// Samples a ground-truth pair `(A, Q)`.
///
/// Scalar case: `A` uniform on `[-1.2, -0.2]`, `Q` uniform on `[0.2, 1.2]`.
/// Matrix case: Gaussian `A` with its eigenvalue real parts flipped negative
/// (resampled while any real part is within `1e-4` of the axis), and `Q`
/// built from uniform entries symmetrized over the upper triangle, made
/// positive definite by the matrix absolute value.
pub fn gen_system(n: usize, seed: u64) -> Result<(StableMatrix, SpdMatrix)> {
    let mut rng = rng::stream(seed, rng::PURPOSE_GEN);
    if n == 1 {
        let a = -rng.gen_range(0.2..1.2);
        let q = rng.gen_range(0.2..1.2);
        return Ok((
            StableMatrix::new(Matrix::from_element(1, 1, a))?,
            SpdMatrix::new(Matrix::from_element(1, 1, q))?,
        ));
    }

    let mut flipped = None;
    for _ in 0..GEN_MAX_ATTEMPTS {
        let gauss = Matrix::from_fn(n, n, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let decomp = match eigen_decompose(&gauss) {
            Ok(d) => d,
            // A numerically defective draw counts as a rejection.
            Err(_) => continue,
        };
        let min_abs_re = decomp
            .values
            .iter()
            .map(|l| l.re.abs())
            .fold(f64::INFINITY, f64::min);
        if min_abs_re <= 1e-4 {
            continue;
        }
        let stable = decomp
            .apply_spectral(|l| num_complex::Complex64::new(-l.re.abs(), l.im))
            .map(|z| z.re);
        flipped = Some(stable);
        break;
    }
    let a = flipped.ok_or(BenchError::GenerationFailed(GEN_MAX_ATTEMPTS))?;

    let raw = Matrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0));
    let mut symmetrized = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            symmetrized[(i, j)] = raw[(i, j)];
            symmetrized[(j, i)] = raw[(i, j)];
        }
    }
    // Matrix absolute value: eigenvalues flipped positive, which keeps the
    // draw symmetric and makes it positive definite.
    let eigen = symmetrized.symmetric_eigen();
    let mut scaled = eigen.eigenvectors.clone();
    for (k, ev) in eigen.eigenvalues.iter().enumerate() {
        let s = ev.abs();
        for i in 0..n {
            scaled[(i, k)] *= s;
        }
    }
    let q_abs = sym_part(&(&scaled * eigen.eigenvectors.transpose()));

    Ok((StableMatrix::new(a)?, SpdMatrix::new(q_abs)?))
}

/// Relative Frobenius error `|est - truth|_F / |truth|_F`.
pub fn rel_error(est: &Matrix, truth: &Matrix) -> Result<f64> {
    if est.nrows() != truth.nrows() || est.ncols() != truth.ncols() {
        return Err(BenchError::ShapeMismatch(
            est.nrows(),
            est.ncols(),
            truth.nrows(),
            truth.ncols(),
        ));
    }
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(BenchError::ZeroNormTruth);
    }
    Ok((est - truth).norm() / denom)
}

/// Relative error with the zero-truth convention used for the derivative
/// fields: exact zero against exact zero is a perfect reconstruction.
fn rel_error_or_exact_zero(est: &Matrix, truth: &Matrix) -> Option<f64> {
    if truth.norm() == 0.0 {
        return if est.norm() == 0.0 {
            Some(0.0)
        } else {
            None
        };
    }
    rel_error(est, truth).ok()
}

fn spectrum_diagnostics(a: &Matrix) -> (f64, f64) {
    let eigs = a.complex_eigenvalues();
    let min_re = eigs.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
    let min_im = eigs.iter().map(|l| l.im.abs()).fold(f64::INFINITY, f64::min);
    (min_re, min_im)
}

/// Runs one generate-simulate-estimate-compare trial. Failures are folded
/// into the record rather than propagated.
pub fn run_trial(cfg: &BenchConfig, n: usize, trial: usize) -> BenchRecord {
    let seed = rng::trial_seed(cfg.seed, n, trial);
    let mut record = BenchRecord::empty(n, trial, seed);
    match run_trial_inner(cfg, n, seed, &mut record) {
        Ok(()) => {}
        Err(msg) => record.failure = Some(msg),
    }
    record
}

fn run_trial_inner(
    cfg: &BenchConfig,
    n: usize,
    seed: u64,
    record: &mut BenchRecord,
) -> std::result::Result<(), String> {
    let (a, q) = gen_system(n, seed).map_err(|e| e.to_string())?;
    let params = SystemParams::new(a, q, cfg.tau).map_err(|e| e.to_string())?;
    let (min_re, min_im) = spectrum_diagnostics(params.a());
    record.min_abs_re_eig = Some(min_re);
    record.min_abs_im_eig = Some(min_im);

    let mut sim_cfg = SimConfig::new(cfg.t1, seed);
    sim_cfg.dt = cfg.dt;
    sim_cfg.subsample_every = cfg.subsample_every;
    sim_cfg.scheme = cfg.scheme;

    if cfg.tau == 0.0 {
        let ts = sim::simulate_white(&params, &sim_cfg).map_err(|e| e.to_string())?;
        let truth_k0 = oracle::white_stationary_cov(&params).map_err(|e| e.to_string())?;
        let emp_k0 = corr::corr_at_lag(&ts.centered(), 0).map_err(|e| e.to_string())?;
        record.e_k0 = rel_error(&emp_k0, &truth_k0).ok();

        let res = lim::estimate(&ts, cfg.rho_lag).map_err(|e| e.to_string())?;
        record.e_a = rel_error(&res.a_hat, params.a()).ok();
        record.e_q = rel_error(&res.q_hat, params.q()).ok();
        record.warnings = res.warnings;
    } else {
        let (x, _) = sim::simulate_colored(&params, &sim_cfg).map_err(|e| e.to_string())?;
        let aug = oracle::build_augmented(&params).map_err(|e| e.to_string())?;
        let [t0, t1, t2, t3] = aug.analytic_deriv_matrices();

        let emp = corr::estimate_derivatives(&x, cfg.stencil_order).map_err(|e| e.to_string())?;
        record.e_k0 = rel_error_or_exact_zero(&emp.k0, &t0);
        record.e_k1 = rel_error_or_exact_zero(&emp.k1, &t1);
        record.e_k2 = rel_error_or_exact_zero(&emp.k2, &t2);
        record.e_k3 = rel_error_or_exact_zero(&emp.k3, &t3);

        let opts = ClimOptions {
            stencil_order: cfg.stencil_order,
            q_method: cfg.q_method,
            ..ClimOptions::default()
        };
        let report = clim::estimate_from_corr(&emp, cfg.tau, &opts).map_err(|e| e.to_string())?;
        record.e_a = rel_error(&report.a_hat, params.a()).ok();
        record.e_q = rel_error(&report.q_hat, params.q()).ok();
        record.cond_a = Some(report.cond_a);
        record.cond_q = Some(report.cond_q);
        record.warnings = report.warnings;
    }
    Ok(())
}

/// Runs the full batch over `dims x trials`, optionally on a bounded worker
/// pool. The record order (and content) is independent of the worker count.
pub fn run_batch(cfg: &BenchConfig, threads: Option<usize>) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = cfg
        .dims
        .iter()
        .flat_map(|&n| (0..cfg.trials).map(move |t| (n, t)))
        .collect();
    let run = |jobs: &[(usize, usize)]| -> Vec<BenchRecord> {
        jobs.par_iter()
            .map(|&(n, t)| run_trial(cfg, n, t))
            .collect()
    };
    let records = match threads {
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
            pool.install(|| run(&jobs))
        }
        None => run(&jobs),
    };
    Ok(records)
}

/// Quantile by linear interpolation between order statistics; `q` in
/// percent.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Error fields aggregated by [`percentile_table`].
pub const TABLE_FIELDS: [&str; 6] = ["e_A", "e_Q", "e_K0", "e_K1", "e_K2", "e_K3"];

/// One row of the percentile table: a dimension, an error field, and the
/// requested quantiles (`None` marks an empty cell).
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub n: usize,
    pub field: String,
    pub values: Vec<Option<f64>>,
}

fn field_values(records: &[BenchRecord], n: usize, field: &str) -> Vec<f64> {
    let mut values: Vec<f64> = records
        .iter()
        .filter(|r| r.n == n && r.failure.is_none())
        .filter_map(|r| match field {
            "e_A" => r.e_a,
            "e_Q" => r.e_q,
            "e_K0" => r.e_k0,
            "e_K1" => r.e_k1,
            "e_K2" => r.e_k2,
            "e_K3" => r.e_k3,
            _ => None,
        })
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).expect("error fields are finite"));
    values
}

/// Per-dimension quantiles of every error field.
pub fn percentile_table(records: &[BenchRecord], quantiles: &[f64]) -> Vec<TableRow> {
    let mut dims: Vec<usize> = records.iter().map(|r| r.n).collect();
    dims.sort_unstable();
    dims.dedup();
    let mut rows = Vec::new();
    for n in dims {
        for field in TABLE_FIELDS {
            let values = field_values(records, n, field);
            let cells = if values.is_empty() {
                vec![None; quantiles.len()]
            } else {
                quantiles
                    .iter()
                    .map(|&q| Some(quantile(&values, q)))
                    .collect()
            };
            rows.push(TableRow {
                n,
                field: field.to_string(),
                values: cells,
            });
        }
    }
    rows
}

/// Median helper for the statistical checks.
pub fn median(records: &[BenchRecord], n: usize, field: &str) -> Option<f64> {
    let values = field_values(records, n, field);
    if values.is_empty() {
        None
    } else {
        Some(quantile(&values, 50.0))
    }
}

/// One scatter row per record: eigenvalue diagnostics against correlation
/// and diffusion errors.
#[derive(Debug, Clone, Serialize)]
pub struct DiagRow {
    pub n: usize,
    pub trial: usize,
    pub min_re: Option<f64>,
    pub min_im: Option<f64>,
    pub e_k: Option<f64>,
    pub e_q: Option<f64>,
}

/// Threshold-event counts over a record set: correlation error at or above
/// 15%, diffusion condition number above 20, records clear of both, and how
/// often a flagged record also carries a diffusion error at or above 15%.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ThresholdCounts {
    pub records: usize,
    pub e_k_at_least_15pct: usize,
    pub cond_q_above_20: usize,
    pub within_tolerance: usize,
    pub e_q_at_least_15pct_among_flagged: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsExport {
    pub rows: Vec<DiagRow>,
    pub counts: ThresholdCounts,
}

/// Scatter data plus threshold counts for external plotting.
pub fn diagnostics_export(records: &[BenchRecord]) -> DiagnosticsExport {
    let rows: Vec<DiagRow> = records
        .iter()
        .map(|r| DiagRow {
            n: r.n,
            trial: r.trial,
            min_re: r.min_abs_re_eig,
            min_im: r.min_abs_im_eig,
            e_k: r.e_k0,
            e_q: r.e_q,
        })
        .collect();
    let mut counts = ThresholdCounts {
        records: records.len(),
        ..ThresholdCounts::default()
    };
    for r in records {
        let ek_high = r.e_k0.map_or(false, |v| v >= 0.15);
        let cond_high = r.cond_q.map_or(false, |v| v > 20.0);
        if ek_high {
            counts.e_k_at_least_15pct += 1;
        }
        if cond_high {
            counts.cond_q_above_20 += 1;
        }
        if !ek_high && !cond_high && r.failure.is_none() {
            counts.within_tolerance += 1;
        }
        if (ek_high || cond_high) && r.e_q.map_or(false, |v| v >= 0.15) {
            counts.e_q_at_least_15pct_among_flagged += 1;
        }
    }
    DiagnosticsExport { rows, counts }
}

/// Spearman rank correlation between two paired samples.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && vals[order[j + 1]] == vals[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &idx in &order[i..=j] {
                ranks[idx] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..xs.len() {
        let a = rx[i] - mean;
        let b = ry[i] - mean;
        num += a * b;
        dx += a * a;
        dy += b * b;
    }
    num / (dx * dy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn generated_systems_are_stable_and_spd() {
        for n in [1usize, 2, 3, 5, 8] {
            for seed in 0..20u64 {
                let (a, q) = gen_system(n, seed).unwrap();
                let max_re = a
                    .eigenvalues()
                    .iter()
                    .map(|l| l.re)
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(max_re < 0.0);
                // Q symmetric with nonnegative entries in the scalar case;
                // SPD by construction in general.
                assert!((q.matrix() - q.matrix().transpose()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (a1, q1) = gen_system(4, 99).unwrap();
        let (a2, q2) = gen_system(4, 99).unwrap();
        assert_eq!(a1.matrix(), a2.matrix());
        assert_eq!(q1.matrix(), q2.matrix());
        let (a3, _) = gen_system(4, 100).unwrap();
        assert_ne!(a1.matrix(), a3.matrix());
    }

    #[test]
    fn scalar_generation_ranges() {
        for seed in 0..50u64 {
            let (a, q) = gen_system(1, seed).unwrap();
            let av = a.matrix()[(0, 0)];
            let qv = q.matrix()[(0, 0)];
            assert!((-1.2..=-0.2).contains(&av), "a = {av}");
            assert!((0.2..=1.2).contains(&qv), "q = {qv}");
        }
    }

    #[test]
    fn rel_error_definition() {
        let truth = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(rel_error(&truth, &truth).unwrap(), 0.0);
        assert_relative_eq!(rel_error(&(&truth * 2.0), &truth).unwrap(), 1.0);
        let perturbed = &truth + Matrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, -0.1]);
        assert_relative_eq!(
            rel_error(&perturbed, &truth).unwrap(),
            0.1,
            epsilon = 1e-12
        );
        assert!(matches!(
            rel_error(&truth, &Matrix::zeros(2, 2)),
            Err(BenchError::ZeroNormTruth)
        ));
    }

    #[test]
    fn quantile_interpolation() {
        let single = [0.42];
        for q in [5.0, 50.0, 95.0] {
            assert_relative_eq!(quantile(&single, q), 0.42);
        }
        let run: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_relative_eq!(quantile(&run, 50.0), 50.5, epsilon = 1e-12);
        assert_relative_eq!(quantile(&run, 5.0), 5.95, epsilon = 1e-12);
    }

    #[test]
    fn batch_is_deterministic_across_worker_counts() {
        let mut cfg = BenchConfig::new(vec![1, 2], 0.1, 20.0, 3, 7);
        cfg.rho_lag = 5;
        let serial = run_batch(&cfg, Some(1)).unwrap();
        let parallel = run_batch(&cfg, Some(4)).unwrap();
        assert_eq!(serial.len(), parallel.len());
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.n, b.n);
            assert_eq!(a.trial, b.trial);
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.e_a, b.e_a);
            assert_eq!(a.e_q, b.e_q);
            assert_eq!(a.e_k0, b.e_k0);
        }
    }

    #[test]
    fn percentile_table_shape_and_missing_cells() {
        let cfg = BenchConfig::new(vec![1], 0.0, 50.0, 4, 3);
        let records = run_batch(&cfg, Some(1)).unwrap();
        let rows = percentile_table(&records, &cfg.quantiles);
        assert_eq!(rows.len(), TABLE_FIELDS.len());
        for row in &rows {
            assert_eq!(row.values.len(), cfg.quantiles.len());
        }
        // White mode has no derivative errors: those cells are missing.
        let ek1 = rows.iter().find(|r| r.field == "e_K1").unwrap();
        assert!(ek1.values.iter().all(|v| v.is_none()));
        let ea = rows.iter().find(|r| r.field == "e_A").unwrap();
        assert!(ea.values.iter().all(|v| v.is_some()));
    }

    #[test]
    fn diagnostics_counts_and_rows() {
        let cfg = BenchConfig::new(vec![1], 0.1, 30.0, 3, 11);
        let records = run_batch(&cfg, Some(1)).unwrap();
        let diag = diagnostics_export(&records);
        assert_eq!(diag.rows.len(), records.len());
        assert_eq!(diag.counts.records, records.len());
        assert!(diag.counts.within_tolerance <= records.len());
    }

    #[test]
    fn spearman_signs() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert_relative_eq!(spearman(&xs, &ys), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_relative_eq!(spearman(&xs, &neg), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn trial_failure_is_marked_not_fatal() {
        // An impossible lag forces the estimator to fail; the record carries
        // the failure text.
        let mut cfg = BenchConfig::new(vec![1], 0.0, 1.0, 1, 5);
        cfg.rho_lag = 10_000;
        let records = run_batch(&cfg, Some(1)).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].failure.is_some());
        assert!(records[0].e_a.is_none());
    }
}
