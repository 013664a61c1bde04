//! Evaluation metrics: relative H2/H-infinity errors of the identified
//! transfer function and relative Frobenius errors of the recovered
//! covariances and correlations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::covariance::CorrelationSet;
use crate::error::{Error, Result};
use crate::linalg;
use crate::lti::{h2_norm, hinf_norm, StateSpaceModel};

/// Per-trial metric row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub delta2: f64,
    pub delta_inf: f64,
    pub eta_w_tilde: Option<f64>,
    pub eta_v: Option<f64>,
    pub eta_t: Option<f64>,
    pub eta_r: Option<f64>,
    pub wall_time: f64,
}

impl TrialMetrics {
    pub const CSV_HEADER: &'static str = "trial,seed,delta2,delta_inf,eta_w,eta_v,eta_t,eta_r,time_s";

    pub fn csv_row(&self, trial: usize, seed: u64) -> String {
        let opt = |v: &Option<f64>| match v {
            Some(x) => format!("{x:.16e}"),
            None => "nan".to_string(),
        };
        format!(
            "{trial},{seed},{:.16e},{:.16e},{},{},{},{},{:.6}",
            self.delta2,
            self.delta_inf,
            opt(&self.eta_w_tilde),
            opt(&self.eta_v),
            opt(&self.eta_t),
            opt(&self.eta_r),
            self.wall_time
        )
    }
}

/// Relative H2/H-infinity errors with the stability flag of the estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HErrorReport {
    pub delta2: f64,
    pub delta_inf: f64,
    pub estimate_stable: bool,
}

/// Difference system `G_hat - G` as one block-diagonal state space.
fn error_system(truth: &StateSpaceModel, estimate: &StateSpaceModel) -> Result<StateSpaceModel> {
    if truth.inputs() != estimate.inputs() || truth.outputs() != estimate.outputs() {
        return Err(Error::Dimension("truth and estimate have different port counts".into()));
    }
    let (ne, nt) = (estimate.order(), truth.order());
    let n = ne + nt;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (ne, ne)).copy_from(&estimate.a);
    a.view_mut((ne, ne), (nt, nt)).copy_from(&truth.a);
    let mut b = DMatrix::zeros(n, truth.inputs());
    b.view_mut((0, 0), (ne, truth.inputs())).copy_from(&estimate.b);
    b.view_mut((ne, 0), (nt, truth.inputs())).copy_from(&truth.b);
    let mut c = DMatrix::zeros(truth.outputs(), n);
    c.view_mut((0, 0), (truth.outputs(), ne)).copy_from(&estimate.c);
    c.view_mut((0, ne), (truth.outputs(), nt)).copy_from(&(-&truth.c));
    let d = &estimate.d - &truth.d;
    StateSpaceModel::new(a, b, c, d)
}

/// `(||G_hat - G|| / ||G||)` in the H2 and H-infinity norms. An unstable
/// estimate yields infinite deltas with the flag cleared.
pub fn relative_h_errors(truth: &StateSpaceModel, estimate: &StateSpaceModel) -> Result<HErrorReport> {
    if !truth.is_schur_stable() {
        return Err(Error::Unstable { rho: truth.spectral_radius() });
    }
    if !estimate.is_schur_stable() {
        return Ok(HErrorReport { delta2: f64::INFINITY, delta_inf: f64::INFINITY, estimate_stable: false });
    }
    let diff = error_system(truth, estimate)?;
    let grid = 512;
    let delta2 = h2_norm(&diff)? / h2_norm(truth)?.max(f64::MIN_POSITIVE);
    let delta_inf = hinf_norm(&diff, grid)? / hinf_norm(truth, grid)?.max(f64::MIN_POSITIVE);
    Ok(HErrorReport { delta2, delta_inf, estimate_stable: true })
}

/// Eigenbasis of a real matrix with fixed conventions: eigenvalues sorted
/// by (re, im) ascending, unit-norm eigenvectors rotated so the
/// largest-magnitude entry is real positive. Fails when eigenvalues are
/// closer than `1e-8` (near-defective).
fn eigenbasis(a: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    let mut eigs: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
    for i in 0..n {
        for j in i + 1..n {
            if (eigs[i] - eigs[j]).norm() < 1e-8 {
                return Err(Error::Numerical(format!(
                    "eigenvalue gap {:.3e} below 1e-8; basis-compensated metric unavailable",
                    (eigs[i] - eigs[j]).norm()
                )));
            }
        }
    }
    let a_c = linalg::to_complex(a);
    let mut vectors = DMatrix::zeros(n, n);
    for (col, lam) in eigs.iter().enumerate() {
        let shifted = &a_c - DMatrix::from_diagonal_element(n, n, *lam);
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not produce V".into()))?;
        // Null vector: right singular vector of the smallest singular value.
        let mut v: DVector<Complex64> = v_t.row(n - 1).transpose().map(|x| x.conj());
        let mut best = (0usize, 0.0f64);
        for (i, entry) in v.iter().enumerate() {
            if entry.norm() > best.1 {
                best = (i, entry.norm());
            }
        }
        let phase = v[best.0] / v[best.0].norm();
        v /= phase;
        v /= Complex64::new(v.norm(), 0.0);
        vectors.column_mut(col).copy_from(&v);
    }
    Ok(vectors)
}

/// Transforms a state covariance into the eigenbasis of its `A` matrix:
/// `Re(T Sigma T^T)` symmetrized, with `T` the inverse eigenvector matrix.
fn diagonal_basis_covariance(sigma: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let v = eigenbasis(a)?;
    let t = v
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("eigenvector matrix is singular".into()))?;
    let transformed = &t * linalg::to_complex(sigma) * t.transpose();
    Ok(linalg::symmetrize(&transformed.map(|x| x.re)))
}

fn diag_match_objective(k: &[f64], h: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    let n = k.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = k[i] * k[j] * h[(i, j)] - g[(i, j)];
            acc += d * d;
        }
    }
    acc
}

/// Diagonal `K` minimizing `||K H K^T - G||_F`: seeded by diagonal
/// matching `k_i = sqrt(g_ii / h_ii)`, then refined by cyclic coordinate
/// descent (Newton in each coordinate, at most 20 sweeps).
fn fit_diagonal_scaling(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Vec<f64> {
    let n = h.nrows();
    let mut k: Vec<f64> = (0..n)
        .map(|i| {
            if h[(i, i)] > 0.0 && g[(i, i)] > 0.0 {
                (g[(i, i)] / h[(i, i)]).sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut prev = diag_match_objective(&k, h, g);
    for _ in 0..20 {
        for i in 0..n {
            // d/dk of the terms containing k_i, over a few Newton steps.
            for _ in 0..8 {
                let mut grad = k[i].powi(3) * h[(i, i)].powi(2) - k[i] * h[(i, i)] * g[(i, i)];
                let mut hess = 3.0 * k[i].powi(2) * h[(i, i)].powi(2) - h[(i, i)] * g[(i, i)];
                for j in 0..n {
                    if j != i {
                        let hij = h[(i, j)];
                        grad += k[j] * hij * (k[i] * k[j] * hij - g[(i, j)]);
                        hess += (k[j] * hij).powi(2);
                    }
                }
                if hess.abs() < 1e-300 {
                    break;
                }
                let step = grad / hess;
                k[i] -= step;
                if step.abs() < 1e-14 * k[i].abs().max(1.0) {
                    break;
                }
            }
        }
        let obj = diag_match_objective(&k, h, g);
        if (prev - obj).abs() < 1e-10 * prev.max(1e-300) {
            break;
        }
        prev = obj;
    }
    k
}

/// Basis-compensated relative error of the process-noise covariance.
///
/// `Sigma_ww` is not invariant under state similarity, so both the truth
/// and the estimate are moved into the eigenbasis of their own `A` matrix
/// (fixed ordering and normalization), and a diagonal scaling absorbing
/// the remaining per-mode gauge freedom is fitted before the Frobenius
/// error is taken.
pub fn sigma_w_error(
    sigma_ww_true: &DMatrix<f64>,
    a_true: &DMatrix<f64>,
    sigma_ww_hat: &DMatrix<f64>,
    a_hat: &DMatrix<f64>,
) -> Result<f64> {
    if a_true.nrows() != a_hat.nrows() {
        return Err(Error::Dimension("state dimensions differ".into()));
    }
    let g = diagonal_basis_covariance(sigma_ww_true, a_true)?;
    let h = diagonal_basis_covariance(sigma_ww_hat, a_hat)?;
    let k = fit_diagonal_scaling(&h, &g);
    let compensated = DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| k[i] * k[j] * h[(i, j)]);
    let denom = g.norm();
    if denom <= 0.0 {
        return Err(Error::InvalidArgument("true covariance has zero norm".into()));
    }
    Ok((compensated - g).norm() / denom)
}

/// Summed relative Frobenius error of the lagged correlations over lags
/// `0..=r`. Zero-norm truth lags are skipped (with a warning).
pub fn correlation_error(truth: &CorrelationSet, estimate: &CorrelationSet, r: usize) -> Result<f64> {
    if r >= truth.lag_count() || r >= estimate.lag_count() {
        return Err(Error::InvalidArgument(format!(
            "lag {r} out of range (truth {}, estimate {})",
            truth.lag_count(),
            estimate.lag_count()
        )));
    }
    let mut total = 0.0;
    let mut skipped = 0usize;
    for l in 0..=r {
        let denom = truth.xi_rr[l].norm();
        if denom <= 0.0 {
            skipped += 1;
            continue;
        }
        total += (&estimate.xi_rr[l] - &truth.xi_rr[l]).norm() / denom;
    }
    if skipped > 0 {
        log::warn!("correlation_error: skipped {skipped} zero-norm truth lags");
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::analytic_correlations;
    use crate::lti::CovarianceTriple;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixed_mimo() -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.0, 0.2]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn identical_models_have_zero_error() {
        let model = fixed_mimo();
        let rep = relative_h_errors(&model, &model).unwrap();
        assert!(rep.delta2 <= 1e-12 && rep.delta_inf <= 1e-12);
        assert!(rep.estimate_stable);
    }

    #[test]
    fn similarity_transform_has_zero_error() {
        let model = crate::lti::random_sut(4, 2, 2, 0.9, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let t = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(4, 4) * 2.0;
        let transformed = model.similarity(&t).unwrap();
        let rep = relative_h_errors(&model, &transformed).unwrap();
        assert!(rep.delta2 <= 1e-9, "delta2 {}", rep.delta2);
        assert!(rep.delta_inf <= 1e-9, "delta_inf {}", rep.delta_inf);
    }

    #[test]
    fn scaled_output_gives_proportional_error() {
        let truth = StateSpaceModel::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.0),
        )
        .unwrap();
        let mut estimate = truth.clone();
        estimate.c[(0, 0)] = 1.1;
        let rep = relative_h_errors(&truth, &estimate).unwrap();
        assert_relative_eq!(rep.delta_inf, 0.1, epsilon = 1e-8);
        assert_relative_eq!(rep.delta2, 0.1, epsilon = 1e-8);
    }

    #[test]
    fn unstable_estimate_yields_infinite_sentinel() {
        let truth = fixed_mimo();
        let mut estimate = truth.clone();
        estimate.a[(0, 0)] = 1.01;
        let rep = relative_h_errors(&truth, &estimate).unwrap();
        assert!(rep.delta2.is_infinite() && rep.delta_inf.is_infinite());
        assert!(!rep.estimate_stable);
    }

    #[test]
    fn sigma_w_identity_case_is_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.0, 0.2]);
        let sigma = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let err = sigma_w_error(&sigma, &a, &sigma, &a).unwrap();
        assert!(err <= 1e-12, "error {err}");
    }

    #[test]
    fn sigma_w_absorbs_diagonal_state_scaling() {
        let model = crate::lti::random_sut(3, 1, 2, 0.9, 4).unwrap();
        let sigma = {
            let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 0.8, 0.1, 0.0, 0.1, 0.5]);
            &g * g.transpose()
        };
        let scale = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5, 3.0]));
        let a_scaled = &scale * &model.a * scale.clone().try_inverse().unwrap();
        let sigma_scaled = &scale * &sigma * scale.transpose();
        let err = sigma_w_error(&sigma, &model.a, &sigma_scaled, &a_scaled).unwrap();
        assert!(err <= 1e-8, "error {err}");
    }

    #[test]
    fn sigma_w_tracks_small_perturbations() {
        // Diagonal A keeps the eigenbasis orthogonal so norms carry over.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, 0.3, -0.2]));
        let sigma = {
            let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 0.9, 0.0, 0.1, 0.0, 0.6]);
            &g * g.transpose()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let w = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let mut delta = &w * w.transpose();
        delta /= delta.norm();
        let eps = 1e-3;
        let perturbed = &sigma + eps * &delta;
        let err = sigma_w_error(&sigma, &a, &perturbed, &a).unwrap();
        let band = eps / sigma.norm();
        assert!(err >= 0.4 * band && err <= 2.0 * band, "error {err}, band {band}");
    }

    #[test]
    fn diagonal_fit_is_locally_optimal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.6, 0.2]));
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.7]);
        let scale = DMatrix::from_diagonal(&DVector::from_vec(vec![1.7, 0.4]));
        let sigma_scaled = &scale * &sigma * scale.transpose();
        let g = diagonal_basis_covariance(&sigma, &a).unwrap();
        let h = diagonal_basis_covariance(&sigma_scaled, &a).unwrap();
        let k = fit_diagonal_scaling(&h, &g);
        let base = diag_match_objective(&k, &h, &g);
        for i in 0..k.len() {
            for sign in [-1.0, 1.0] {
                let mut kp = k.clone();
                kp[i] *= 1.0 + sign * 0.01;
                let obj = diag_match_objective(&kp, &h, &g);
                assert!(obj >= base - 1e-6 * base.max(1e-12), "perturbation decreased objective");
            }
        }
    }

    #[test]
    fn near_defective_a_is_flagged() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]); // Jordan block
        let sigma = DMatrix::identity(2, 2);
        assert!(sigma_w_error(&sigma, &a, &sigma, &a).is_err());
    }

    #[test]
    fn correlation_error_identical_is_zero() {
        let model = fixed_mimo();
        let noise = CovarianceTriple::new(
            DMatrix::identity(2, 2) * 0.01,
            DMatrix::identity(2, 2) * 0.02,
            DMatrix::identity(1, 1) * 0.005,
        )
        .unwrap();
        let set = analytic_correlations(&model.a, &model.c, &noise, 12).unwrap();
        assert_eq!(correlation_error(&set, &set, 10).unwrap(), 0.0);
    }

    #[test]
    fn correlation_error_single_lag_perturbation() {
        let model = fixed_mimo();
        let noise = CovarianceTriple::new(
            DMatrix::identity(2, 2) * 0.01,
            DMatrix::identity(2, 2) * 0.02,
            DMatrix::identity(1, 1) * 0.005,
        )
        .unwrap();
        let truth = analytic_correlations(&model.a, &model.c, &noise, 6).unwrap();
        let mut est = truth.clone();
        let delta = DMatrix::from_row_slice(2, 2, &[1e-3, 0.0, 0.0, -1e-3]);
        est.xi_rr[0] += &delta;
        let err = correlation_error(&truth, &est, 4).unwrap();
        assert_relative_eq!(err, delta.norm() / truth.xi_rr[0].norm(), epsilon = 1e-12);
    }

    #[test]
    fn correlation_lags_decay_with_dominant_eigenvalue() {
        let model = fixed_mimo();
        let noise = CovarianceTriple::new(
            DMatrix::identity(2, 2) * 1e-3,
            DMatrix::identity(2, 2) * 1e-3,
            DMatrix::identity(1, 1) * 1e-3,
        )
        .unwrap();
        let truth = analytic_correlations(&model.a, &model.c, &noise, 11).unwrap();
        for l in 2..11 {
            let ratio = truth.xi_rr[l].norm() / truth.xi_rr[l - 1].norm();
            assert!(ratio <= 0.8 + 1e-9, "lag {l}: ratio {ratio}");
        }
    }

    #[test]
    fn eta_metrics_are_scale_invariant() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, 0.3]));
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]);
        let hat = DMatrix::from_row_slice(2, 2, &[1.1, 0.15, 0.15, 0.75]);
        let e1 = sigma_w_error(&sigma, &a, &hat, &a).unwrap();
        let e2 = sigma_w_error(&(2.0 * &sigma), &a, &(2.0 * &hat), &a).unwrap();
        assert!((e1 - e2).abs() <= 1e-12);
    }
}
