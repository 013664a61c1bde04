//! Noise-covariance recovery from lagged residual correlations.
//!
//! Residuals are what remains of the measured input/output after removing
//! the fitted periodic response. Their lagged auto-correlations relate to
//! the state auto-correlation `Xi_zz` through
//! `Xi_zz = A Xi_zz A^T + Sigma_ww`,
//! `Xi_rr^0 = C Xi_zz C^T + Sigma_vv`, `Xi_rr^l = C A^l Xi_zz C^T`,
//! which this module inverts by (optionally PSD-constrained) least squares.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::ExcitationSystem;
use crate::fft::Fft;
use crate::isp::IspResult;
use crate::linalg;
use crate::lti::{solve_discrete_lyapunov, CovarianceTriple, SampleRecord};

/// Lagged output auto-correlations `Xi_rr^l` for `l = 0..M-1` plus the
/// input correlation `Xi_tt`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    pub xi_rr: Vec<DMatrix<f64>>,
    pub xi_tt: DMatrix<f64>,
    pub samples_used: usize,
}

impl CorrelationSet {
    pub fn lag_count(&self) -> usize {
        self.xi_rr.len()
    }
}

/// Residual sequences `r_k = y^m_k - Y v_k` and `tau_k = u^m_k - U v_k`,
/// evaluated sample by sample. Requires the full (orthogonality-safe)
/// frequency selection so the residuals carry noise only.
pub fn residual_sequences(
    samples: &[SampleRecord],
    isp: &IspResult,
    system: &ExcitationSystem,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    if !isp.selection.is_full() {
        return Err(Error::Selection(
            "residual estimation requires the full frequency selection".into(),
        ));
    }
    if system.selection() != &isp.selection {
        return Err(Error::Selection("excitation system and coefficients disagree on the selection".into()));
    }
    let n = samples.len();
    let period = isp.selection.period();
    if n == 0 || n % period != 0 {
        return Err(Error::NotPeriodMultiple { n, period });
    }
    let mut r = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    for rec in samples {
        let v = system.regressor(rec.k);
        let y_fit = &isp.y_coeffs * &v;
        let u_fit = &isp.u_coeffs * &v;
        r.push(DVector::from_fn(y_fit.len(), |i, _| rec.y_measured[i] - y_fit[i]));
        tau.push(DVector::from_fn(u_fit.len(), |i, _| rec.u_measured[i] - u_fit[i]));
    }
    Ok((r, tau))
}

/// Time-domain correlation estimates: lag `l` averaged with divisor
/// `N - l`, the input correlation with divisor `N`.
pub fn correlations_time(
    residuals: &[DVector<f64>],
    input_residuals: &[DVector<f64>],
    m_lags: usize,
) -> Result<CorrelationSet> {
    let n = residuals.len();
    if m_lags == 0 || n == 0 {
        return Err(Error::InvalidArgument("need at least one lag and one sample".into()));
    }
    if m_lags > n / 10 {
        return Err(Error::InvalidArgument(format!("lag count {m_lags} exceeds N/10 = {}", n / 10)));
    }
    let p = residuals[0].len();
    let mut xi_rr = Vec::with_capacity(m_lags);
    for l in 0..m_lags {
        let mut acc = DMatrix::zeros(p, p);
        for k in 0..n - l {
            for i in 0..p {
                for j in 0..p {
                    acc[(i, j)] += residuals[k + l][i] * residuals[k][j];
                }
            }
        }
        acc /= (n - l) as f64;
        if l == 0 {
            acc = linalg::symmetrize(&acc);
        }
        xi_rr.push(acc);
    }
    let m = input_residuals.first().map_or(0, |v| v.len());
    let mut xi_tt = DMatrix::zeros(m, m);
    for v in input_residuals {
        for i in 0..m {
            for j in 0..m {
                xi_tt[(i, j)] += v[i] * v[j];
            }
        }
    }
    xi_tt /= input_residuals.len().max(1) as f64;
    xi_tt = linalg::symmetrize(&xi_tt);
    Ok(CorrelationSet { xi_rr, xi_tt, samples_used: n })
}

/// Spectrum of the fitted periodic signal on the length-`n` frequency axis:
/// zero except at multiples of `n/T`, where the coefficient pairs place
/// `(n/2) (b - j a)` (and `n b0 / sqrt(2)` at DC).
fn fitted_spectrum(coeffs: &DMatrix<f64>, isp: &IspResult, n: usize, channel: usize) -> Vec<Complex64> {
    let period = isp.selection.period();
    let periods = n / period;
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    let mut col = 0;
    for &idx in isp.selection.indices() {
        if idx == 0 {
            spec[0] = Complex64::new(n as f64 * coeffs[(channel, col)] * std::f64::consts::FRAC_1_SQRT_2, 0.0);
            col += 1;
        } else {
            let a = coeffs[(channel, col)];
            let b = coeffs[(channel, col + 1)];
            let v = Complex64::new(b, -a) * (n as f64 / 2.0);
            let bin = idx * periods;
            spec[bin] = v;
            spec[n - bin] = v.conj();
            col += 2;
        }
    }
    spec
}

/// Frequency-domain correlation estimates: subtracts the interpolated
/// excitation spectrum from the full-length DFT of the raw data, moves the
/// residual back to the time domain, zero-pads to `2N` for linear
/// (non-circular) correlation, and reads the lags off the inverse DFT of
/// the cross-power spectra. Matches [`correlations_time`] to rounding.
pub fn correlations_fft(samples: &[SampleRecord], isp: &IspResult, m_lags: usize) -> Result<CorrelationSet> {
    if !isp.selection.is_full() {
        return Err(Error::Selection("the frequency-domain path requires the full selection".into()));
    }
    let n = samples.len();
    let period = isp.selection.period();
    if n == 0 || n % period != 0 {
        return Err(Error::NotPeriodMultiple { n, period });
    }
    if m_lags == 0 || m_lags > n / 10 {
        return Err(Error::InvalidArgument(format!("lag count {m_lags} must lie in 1..=N/10")));
    }
    let p = samples[0].y_measured.len();
    let m = samples[0].u_measured.len();
    let plan_n = Fft::new(n)?;
    let plan_2n = Fft::new(2 * n)?;

    // Output residual spectra at length N, then residual time sequences.
    let mut padded: Vec<Vec<Complex64>> = Vec::with_capacity(p);
    for ch in 0..p {
        let mut buf: Vec<Complex64> =
            samples.iter().map(|r| Complex64::new(r.y_measured[ch], 0.0)).collect();
        plan_n.forward(&mut buf)?;
        let fit = fitted_spectrum(&isp.y_coeffs, isp, n, ch);
        for (v, f) in buf.iter_mut().zip(fit.iter()) {
            *v -= f;
        }
        plan_n.inverse(&mut buf)?;
        let mut pad = vec![Complex64::new(0.0, 0.0); 2 * n];
        for (dst, src) in pad.iter_mut().zip(buf.iter()) {
            *dst = Complex64::new(src.re, 0.0);
        }
        plan_2n.forward(&mut pad)?;
        padded.push(pad);
    }

    let mut xi_rr = vec![DMatrix::zeros(p, p); m_lags];
    let mut cross = vec![Complex64::new(0.0, 0.0); 2 * n];
    for i in 0..p {
        for j in 0..p {
            for (dst, (a, b)) in cross.iter_mut().zip(padded[i].iter().zip(padded[j].iter())) {
                *dst = a * b.conj();
            }
            plan_2n.inverse(&mut cross)?;
            for (l, xi) in xi_rr.iter_mut().enumerate() {
                xi[(i, j)] = cross[l].re / (n - l) as f64;
            }
        }
    }
    xi_rr[0] = linalg::symmetrize(&xi_rr[0]);

    // Input correlation at lag zero through Parseval on the length-N axis.
    let mut tau_spectra: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    for ch in 0..m {
        let mut buf: Vec<Complex64> =
            samples.iter().map(|r| Complex64::new(r.u_measured[ch], 0.0)).collect();
        plan_n.forward(&mut buf)?;
        let fit = fitted_spectrum(&isp.u_coeffs, isp, n, ch);
        for (v, f) in buf.iter_mut().zip(fit.iter()) {
            *v -= f;
        }
        tau_spectra.push(buf);
    }
    let mut xi_tt = DMatrix::zeros(m, m);
    let n2 = (n as f64) * (n as f64);
    for i in 0..m {
        for j in 0..m {
            let dot: Complex64 =
                tau_spectra[i].iter().zip(tau_spectra[j].iter()).map(|(a, b)| a * b.conj()).sum();
            xi_tt[(i, j)] = dot.re / n2;
        }
    }
    xi_tt = linalg::symmetrize(&xi_tt);
    Ok(CorrelationSet { xi_rr, xi_tt, samples_used: n })
}

/// How `Xi_zz` is recovered from the correlation equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// Plain least squares with symmetry enforced.
    Ls,
    /// Least squares refined onto the three PSD constraints.
    Psd,
}

/// Solver output: the state auto-correlation estimate plus diagnostics.
#[derive(Debug, Clone)]
pub struct CovarianceSolveReport {
    pub xi_zz: DMatrix<f64>,
    /// `|| M vec(Xi_zz) - p ||_2` at the returned solution.
    pub objective_residual: f64,
    /// Negative-eigenvalue magnitudes of the three constraint matrices
    /// (`Xi_zz`, `Xi_zz - A Xi_zz A^T`, `Xi_rr^0 - C Xi_zz C^T`).
    pub constraint_violations: [f64; 3],
    pub iterations: usize,
    /// Set when the regression is rank deficient: the solution reproduces
    /// the observed correlations but is not the unique covariance.
    pub nominal: bool,
    /// `A` nonsingular and `C` of full column rank.
    pub strong_detectability: bool,
}

fn stack_equations(
    corr: &CorrelationSet,
    a_hat: &DMatrix<f64>,
    c_hat: &DMatrix<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = a_hat.nrows();
    let p = c_hat.nrows();
    let m_lags = corr.lag_count();
    let mut big_m = DMatrix::zeros((m_lags - 1) * p * p, n * n);
    let mut rhs = DVector::zeros((m_lags - 1) * p * p);
    let mut a_pow = a_hat.clone();
    for l in 1..m_lags {
        let ca = c_hat * &a_pow;
        big_m.view_mut(((l - 1) * p * p, 0), (p * p, n * n)).copy_from(&c_hat.kronecker(&ca));
        rhs.view_mut(((l - 1) * p * p, 0), (p * p, 1)).copy_from(&linalg::vec_of(&corr.xi_rr[l]));
        a_pow = &a_pow * a_hat;
    }
    (big_m, rhs)
}

fn violations(xi: &DMatrix<f64>, a: &DMatrix<f64>, c: &DMatrix<f64>, xi0: &DMatrix<f64>) -> [f64; 3] {
    let v0 = (-linalg::min_eigenvalue(xi)).max(0.0);
    let v1 = (-linalg::min_eigenvalue(&(xi - a * xi * a.transpose()))).max(0.0);
    let v2 = (-linalg::min_eigenvalue(&(xi0 - c * xi * c.transpose()))).max(0.0);
    [v0, v1, v2]
}

/// Recovers `Xi_zz` from the lagged correlations. In [`SolveMode::Psd`]
/// the least-squares solution is refined by gradient steps on the
/// objective interleaved with cyclic passes over the three PSD cones
/// until violations fall below 1e-8 (capped at 5000 iterations).
pub fn solve_xi_zz(
    corr: &CorrelationSet,
    a_hat: &DMatrix<f64>,
    c_hat: &DMatrix<f64>,
    mode: SolveMode,
) -> Result<CovarianceSolveReport> {
    let n = a_hat.nrows();
    let p = c_hat.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("covariance recovery needs a dynamic model (n >= 1)".into()));
    }
    if c_hat.ncols() != n || corr.xi_rr.first().map(|x| x.nrows()) != Some(p) {
        return Err(Error::Dimension("A/C/correlation dimensions are inconsistent".into()));
    }
    let required = (n * n).div_ceil(p * p) + 1;
    if corr.lag_count() < required {
        return Err(Error::InvalidArgument(format!(
            "need at least ceil(n^2/p^2)+1 = {required} lags, got {}",
            corr.lag_count()
        )));
    }

    let a_sv = a_hat.clone().singular_values();
    let c_rank = linalg::numerical_rank(c_hat, 1e-10);
    let strong_detectability = a_sv.min() > 1e-12 * a_sv.max().max(1.0) && c_rank == n;

    let (big_m, rhs) = stack_equations(corr, a_hat, c_hat);
    let dup = linalg::duplication_matrix(n);
    let m_sym = &big_m * &dup;
    let svd = m_sym.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count();
    let nominal = rank < n * (n + 1) / 2;
    if nominal {
        log::warn!(
            "Xi_zz regression is rank deficient ({rank}/{}); returning a nominal solution",
            n * (n + 1) / 2
        );
    }
    let rhs_m = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let w0 = svd
        .solve(&rhs_m, 1e-10 * smax.max(1e-300))
        .map_err(|e| Error::Numerical(format!("correlation regression failed: {e}")))?;
    let mut w = DVector::from_column_slice(w0.as_slice());
    let xi0 = &corr.xi_rr[0];

    let objective = |w: &DVector<f64>| (&m_sym * w - &rhs).norm();
    let mut iterations = 0usize;
    if mode == SolveMode::Psd {
        let lips = smax * smax;
        let step = if lips > 0.0 { 1.0 / lips } else { 0.0 };
        let a_stable = linalg::spectral_radius(a_hat) < 1.0;
        let c_pinv = if strong_detectability {
            Some(linalg::lstsq(c_hat, &DMatrix::identity(p, p))?)
        } else {
            None
        };
        let mut prev_obj = objective(&w);
        for it in 0..5000 {
            iterations = it + 1;
            // Gradient step on the least-squares objective.
            if step > 0.0 {
                let grad = m_sym.transpose() * (&m_sym * &w - &rhs);
                w -= step * grad;
            }
            let mut xi = linalg::unvech(&w, n);
            // Cone 1: Xi >= 0.
            let (proj, _) = linalg::clip_psd(&xi);
            xi = proj;
            // Cone 2: Xi - A Xi A^T >= 0, pulled back through the Lyapunov
            // operator (exact membership for stable A).
            if a_stable {
                let wmat = &xi - a_hat * &xi * a_hat.transpose();
                if linalg::min_eigenvalue(&wmat) < 0.0 {
                    let (wpos, _) = linalg::clip_psd(&wmat);
                    xi = solve_discrete_lyapunov(a_hat, &wpos)?;
                }
            }
            // Cone 3: Xi_rr^0 - C Xi C^T >= 0, corrected along pinv(C).
            if let Some(ci) = &c_pinv {
                let vmat = xi0 - c_hat * &xi * c_hat.transpose();
                if linalg::min_eigenvalue(&vmat) < 0.0 {
                    let (vpos, _) = linalg::clip_psd(&vmat);
                    let deficit = &vpos - &vmat; // PSD part removed from the violation
                    xi -= ci * deficit * ci.transpose();
                    let (proj, _) = linalg::clip_psd(&xi);
                    xi = proj;
                }
            }
            // Back to the symmetric parameter vector.
            let mut idx = 0;
            for j in 0..n {
                for i in j..n {
                    w[idx] = xi[(i, j)];
                    idx += 1;
                }
            }
            let obj = objective(&w);
            let viol = violations(&xi, a_hat, c_hat, xi0);
            let worst = viol.iter().fold(0.0f64, |acc, &v| acc.max(v));
            if (prev_obj - obj).abs() < 1e-10 && worst < 1e-8 {
                break;
            }
            prev_obj = obj;
        }
    }

    let xi_zz = linalg::unvech(&w, n);
    let constraint_violations = violations(&xi_zz, a_hat, c_hat, xi0);
    Ok(CovarianceSolveReport {
        objective_residual: objective(&w),
        xi_zz,
        constraint_violations,
        iterations,
        nominal,
        strong_detectability,
    })
}

/// Covariance triple recovered from `Xi_zz`, with the per-matrix clip
/// magnitudes applied to restore positive semidefiniteness.
#[derive(Debug, Clone)]
pub struct CovarianceRecovery {
    pub triple: CovarianceTriple,
    /// Largest clipped negative eigenvalue of (Sigma_ww, Sigma_vv, Sigma_tt).
    pub clip_magnitudes: [f64; 3],
}

/// `Sigma_ww = Xi_zz - A Xi_zz A^T`, `Sigma_vv = Xi_rr^0 - C Xi_zz C^T`,
/// `Sigma_tt = Xi_tt`, each symmetrized and clipped onto the PSD cone.
pub fn recover_covariances(
    xi_zz: &DMatrix<f64>,
    corr: &CorrelationSet,
    a_hat: &DMatrix<f64>,
    c_hat: &DMatrix<f64>,
) -> Result<CovarianceRecovery> {
    let n = a_hat.nrows();
    if xi_zz.nrows() != n || c_hat.ncols() != n {
        return Err(Error::Dimension("Xi_zz/A/C dimensions are inconsistent".into()));
    }
    let (sigma_ww, clip_w) = linalg::clip_psd(&(xi_zz - a_hat * xi_zz * a_hat.transpose()));
    let (sigma_vv, clip_v) = linalg::clip_psd(&(&corr.xi_rr[0] - c_hat * xi_zz * c_hat.transpose()));
    let (sigma_tt, clip_t) = linalg::clip_psd(&corr.xi_tt);
    for (name, clip) in [("sigma_ww", clip_w), ("sigma_vv", clip_v), ("sigma_tt", clip_t)] {
        if clip > 1e-6 {
            log::warn!("recover_covariances: clipped {name} by {clip:.3e}");
        }
    }
    Ok(CovarianceRecovery {
        triple: CovarianceTriple::new(sigma_ww, sigma_vv, sigma_tt)?,
        clip_magnitudes: [clip_w, clip_v, clip_t],
    })
}

/// Lag-count rule `M = max(ceil(n^2/p^2) + 1, min(round(N^(1/3)), N/10))`:
/// the cube-root growth capped at a tenth of the data, never below the
/// identifiability bound.
pub fn choose_lag_count(n_samples: usize, n: usize, p: usize) -> Result<usize> {
    if n_samples < 1000 {
        return Err(Error::InvalidArgument("need at least 1000 samples for correlation lags".into()));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    let lower = (n * n).div_ceil(p * p) + 1;
    let cube = (n_samples as f64).cbrt().round() as usize;
    Ok(lower.max(cube.min(n_samples / 10)))
}

/// Analytic correlations of the stationary residual process, the oracle
/// counterpart of the estimators above.
pub fn analytic_correlations(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    noise: &CovarianceTriple,
    m_lags: usize,
) -> Result<CorrelationSet> {
    let xi_zz = solve_discrete_lyapunov(a, &noise.sigma_ww)?;
    let mut xi_rr = Vec::with_capacity(m_lags);
    xi_rr.push(c * &xi_zz * c.transpose() + &noise.sigma_vv);
    let mut a_pow = a.clone();
    for _ in 1..m_lags {
        xi_rr.push(c * &a_pow * &xi_zz * c.transpose());
        a_pow = &a_pow * a;
    }
    Ok(CorrelationSet { xi_rr, xi_tt: noise.sigma_tt.clone(), samples_used: 0 })
}

/// JSON-facing form of [`CorrelationSet`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationFile {
    pub xi_rr: Vec<Vec<Vec<f64>>>,
    pub xi_tt: Vec<Vec<f64>>,
    pub samples_used: usize,
}

impl CorrelationFile {
    pub fn from_set(set: &CorrelationSet) -> Self {
        CorrelationFile {
            xi_rr: set.xi_rr.iter().map(crate::lti::matrix_to_rows).collect(),
            xi_tt: crate::lti::matrix_to_rows(&set.xi_tt),
            samples_used: set.samples_used,
        }
    }
}

/// JSON-facing form of a covariance triple with solver diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceFile {
    pub sigma_ww: Vec<Vec<f64>>,
    pub sigma_vv: Vec<Vec<f64>>,
    pub sigma_tt: Vec<Vec<f64>>,
    pub objective_residual: f64,
    pub constraint_violations: [f64; 3],
    pub iterations: usize,
    pub nominal: bool,
    pub strong_detectability: bool,
    pub clip_magnitudes: [f64; 3],
}

impl CovarianceFile {
    pub fn new(recovery: &CovarianceRecovery, report: &CovarianceSolveReport) -> Self {
        CovarianceFile {
            sigma_ww: crate::lti::matrix_to_rows(&recovery.triple.sigma_ww),
            sigma_vv: crate::lti::matrix_to_rows(&recovery.triple.sigma_vv),
            sigma_tt: crate::lti::matrix_to_rows(&recovery.triple.sigma_tt),
            objective_residual: report.objective_residual,
            constraint_violations: report.constraint_violations,
            iterations: report.iterations,
            nominal: report.nominal,
            strong_detectability: report.strong_detectability,
            clip_magnitudes: recovery.clip_magnitudes,
        }
    }
}
