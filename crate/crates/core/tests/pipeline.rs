//! End-to-end identification checks against independent oracles: exact
//! recovery without noise, steady-state coefficient relations, and
//! error-decay trends as the sample count grows.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use sysid_core::covariance::{
    analytic_correlations, choose_lag_count, correlations_fft, recover_covariances, solve_xi_zz, SolveMode,
};
use sysid_core::excitation::{self, FrequencySelection};
use sysid_core::isp::{isp_offline_fft, isp_offline_matmul, OnlineIsp};
use sysid_core::linalg;
use sysid_core::lti::{random_sut, solve_discrete_lyapunov, CovarianceTriple, StateSpaceModel};
use sysid_core::metrics::relative_h_errors;
use sysid_core::subspace::{estimate_acn, estimate_bd, identify, pe_check, OrderSelectionPolicy};

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

/// Noise-free coefficients satisfy the steady-state (Sylvester) relations:
/// with `X` solved per frequency from the true `(A, B)` and the estimated
/// input coefficients, `Y = C X + D U` must hold.
#[test]
fn noise_free_coefficients_satisfy_invariance_equations() {
    let model = fixed_mimo();
    let t = 60;
    let sys = excitation::random_periodic(t, 1, 1.0, 7).unwrap();
    let samples = pipeline_samples(&model, &CovarianceTriple::zero(2, 2, 1), &sys, 2, 4, 1);
    let est = isp_offline_matmul(&samples, &sys).unwrap();

    let omega = 2.0 * std::f64::consts::PI / t as f64;
    let (a_c, b_c, c_c, d_c) = (
        linalg::to_complex(&model.a),
        linalg::to_complex(&model.b),
        linalg::to_complex(&model.c),
        linalg::to_complex(&model.d),
    );
    let mut residual = 0.0f64;
    let mut col = 0;
    for &idx in est.selection.indices() {
        let theta = omega * idx as f64;
        let z = Complex64::new(theta.cos(), theta.sin());
        let width = if idx == 0 { 1 } else { 2 };
        let (u_c, y_c): (DVector<Complex64>, DVector<Complex64>) = if width == 1 {
            (
                est.u_coeffs.column(col).map(|x| Complex64::new(x, 0.0)),
                est.y_coeffs.column(col).map(|x| Complex64::new(x, 0.0)),
            )
        } else {
            (
                DVector::from_fn(1, |i, _| Complex64::new(est.u_coeffs[(i, col + 1)], -est.u_coeffs[(i, col)])),
                DVector::from_fn(2, |i, _| Complex64::new(est.y_coeffs[(i, col + 1)], -est.y_coeffs[(i, col)])),
            )
        };
        // x solves z x = A x + B u per frequency.
        let x = (DMatrix::from_diagonal_element(2, 2, z) - &a_c).lu().solve(&(&b_c * &u_c)).unwrap();
        let y_pred = &c_c * x + &d_c * &u_c;
        residual = residual.max((y_pred - y_c).norm());
        col += width;
    }
    assert!(residual <= 1e-8, "invariance-equation residual {residual}");
}

#[test]
fn noise_free_estimates_match_frequency_oracle() {
    let model = fixed_mimo();
    let sys = excitation::random_periodic(48, 1, 1.0, 3).unwrap();
    let samples = pipeline_samples(&model, &CovarianceTriple::zero(2, 2, 1), &sys, 2, 4, 5);
    let est = isp_offline_matmul(&samples, &sys).unwrap();
    let oracle = true_output_coefficients(&model, &sys);
    assert!((&est.y_coeffs - &oracle).amax() <= 1e-9, "gap {}", (&est.y_coeffs - &oracle).amax());
    assert!((&est.u_coeffs - sys.coefficients()).amax() <= 1e-10);
}

/// Noise-free identification recovers the transfer function to 1e-6 in
/// relative H-infinity error across random plants of mixed dimensions.
#[test]
fn noise_free_identification_of_random_plants() {
    for seed in 0..8 {
        let n = 2 + (seed as usize) % 5; // up to 6 states
        let m = 1 + (seed as usize) % 3;
        let p = 1 + (seed as usize / 2) % 3;
        let model = random_sut(n, m, p, 0.95, 1000 + seed).unwrap();
        let t = 128;
        let sys = excitation::random_periodic(t, m, 1.0, 500 + seed).unwrap();
        let samples = pipeline_samples(&model, &CovarianceTriple::zero(n, p, m), &sys, 2, 5, seed);
        let est = isp_offline_matmul(&samples, &sys).unwrap();
        let identified = identify(&est, 2 * n, &OrderSelectionPolicy::tolerance(1e-8).unwrap()).unwrap();
        assert_eq!(identified.order, n, "seed {seed}: wrong order");
        let report = relative_h_errors(&model, &identified.model).unwrap();
        assert!(report.delta_inf <= 1e-6, "seed {seed}: delta_inf {}", report.delta_inf);
        let pe = pe_check(&est.u_coeffs, &est.selection, n, 2 * n);
        assert!(pe.pass, "seed {seed}: PE rank {}/{}", pe.rank, pe.required);
    }
}

/// Coefficient estimates converge as the data grows: the error at 160
/// periods is well below the error at 10 periods (median over seeds).
#[test]
fn coefficient_error_decays_with_sample_count() {
    let model = fixed_mimo();
    let t = 60;
    let sys = excitation::random_periodic(t, 1, 1.0, 11).unwrap();
    let noise = calibrate_noise_to_snr(&model, &fixed_mimo_noise(), &sys, 30.0);
    let truth = true_output_coefficients(&model, &sys);
    let mut errors = vec![Vec::new(), Vec::new(), Vec::new()];
    for seed in 0..10 {
        let samples = pipeline_samples(&model, &noise, &sys, 160, 1, 900 + seed);
        for (slot, periods) in [(0usize, 10usize), (1, 40), (2, 160)] {
            let est = isp_offline_matmul(&samples[..periods * t], &sys).unwrap();
            errors[slot].push((&est.y_coeffs - &truth).norm());
        }
    }
    let med: Vec<f64> = errors.into_iter().map(median).collect();
    assert!(med[1] < med[0], "medians {med:?}");
    assert!(med[2] < med[1], "medians {med:?}");
    assert!(med[2] * 2.0 <= med[0], "expected at least 2x reduction, got {med:?}");
}

/// The identified transfer-function error decays the same way.
#[test]
fn identification_error_halves_from_10_to_160_periods() {
    let model = fixed_mimo();
    let t = 60;
    let sys = excitation::random_periodic(t, 1, 1.0, 13).unwrap();
    let noise = calibrate_noise_to_snr(&model, &fixed_mimo_noise(), &sys, 30.0);
    let policy = OrderSelectionPolicy::Fixed(2);
    let mut short = Vec::new();
    let mut long = Vec::new();
    for seed in 0..10 {
        let samples = pipeline_samples(&model, &noise, &sys, 160, 1, 4242 + seed);
        for (bucket, periods) in [(&mut short, 10usize), (&mut long, 160)] {
            let est = isp_offline_matmul(&samples[..periods * t], &sys).unwrap();
            let identified = identify(&est, 4, &policy).unwrap();
            bucket.push(relative_h_errors(&model, &identified.model).unwrap().delta2);
        }
    }
    let (m_short, m_long) = (median(short), median(long));
    assert!(m_long * 2.0 <= m_short, "delta2 medians: 10T {m_short}, 160T {m_long}");
}

/// Streaming estimation over 240 periods of chirp data: the per-boundary
/// identification error stays bounded and the final snapshot matches the
/// offline estimate.
#[test]
fn online_streaming_identification_converges() {
    let t = 200;
    let model = random_sut(4, 1, 1, 0.9, 77).unwrap();
    let chirp = excitation::chirp(t, 0.0, 0.4 * std::f64::consts::PI, 1.0).unwrap();
    let sel = FrequencySelection::full(t).unwrap();
    let sys = excitation::restrict(&chirp, &sel).unwrap();
    let noise = calibrate_noise_to_snr(&model, &fixed_mimo_noise_for(&model), &sys, 30.0);
    let periods = 240;
    let samples = pipeline_samples(&model, &noise, &sys, periods, 1, 99);

    let mut online = OnlineIsp::new(sys.clone()).unwrap();
    let policy = OrderSelectionPolicy::Fixed(4);
    let mut errors = Vec::new();
    for rec in &samples {
        if let Some(snapshot) = online.push(rec).unwrap() {
            if online.periods_done() % 10 == 0 {
                let identified = identify(&snapshot, 8, &policy).unwrap();
                let rep = relative_h_errors(&model, &identified.model).unwrap();
                errors.push(rep.delta2);
            }
        }
    }
    assert_eq!(errors.len(), periods / 10);
    let early = errors[..errors.len() / 4].iter().cloned().fold(0.0f64, f64::max);
    let late = errors[3 * errors.len() / 4..].iter().cloned().fold(0.0f64, f64::max);
    assert!(late <= early, "late errors {late} exceed early errors {early}");

    let offline = isp_offline_matmul(&samples, &sys).unwrap();
    let final_err = *errors.last().unwrap();
    let offline_err =
        relative_h_errors(&model, &identify(&offline, 8, &policy).unwrap().model).unwrap().delta2;
    assert!(final_err <= offline_err + 1e-9, "final {final_err} vs offline {offline_err}");
}

fn fixed_mimo_noise_for(model: &StateSpaceModel) -> CovarianceTriple {
    CovarianceTriple::new(
        DMatrix::identity(model.order(), model.order()),
        DMatrix::identity(model.outputs(), model.outputs()),
        DMatrix::identity(model.inputs(), model.inputs()),
    )
    .unwrap()
}

/// The lag-zero output correlation of the fixed plant matches its
/// analytic value `C Xi_zz C^T + Sigma_vv` at a quarter million samples.
#[test]
fn lag_zero_correlation_matches_analytic_structure() {
    let model = fixed_mimo();
    let noise = fixed_mimo_noise();
    let t = 600;
    let periods = 400; // 240_000 samples
    let sys = excitation::random_periodic(t, 1, 1.0, 23).unwrap();
    let samples = pipeline_samples(&model, &noise, &sys, periods, 1, 7);
    let est = isp_offline_fft(&samples, t).unwrap();
    let m_lags = choose_lag_count(samples.len(), 2, 2).unwrap();
    let corr = correlations_fft(&samples, &est, m_lags).unwrap();
    let xi_zz = solve_discrete_lyapunov(&model.a, &noise.sigma_ww).unwrap();
    let expected = &model.c * xi_zz * model.c.transpose() + &noise.sigma_vv;
    let gap = (&corr.xi_rr[0] - &expected).norm();
    assert!(gap <= 0.10 * expected.norm(), "relative gap {}", gap / expected.norm());
}

/// Recovered measurement-noise covariance improves from 40 to 400 periods
/// (median over 10 seeds).
#[test]
fn sigma_vv_error_decays_with_sample_count() {
    let model = fixed_mimo();
    let noise = fixed_mimo_noise();
    let t = 600;
    let sys = excitation::random_periodic(t, 1, 1.0, 31).unwrap();
    let mut short = Vec::new();
    let mut long = Vec::new();
    for seed in 0..10 {
        let samples = pipeline_samples(&model, &noise, &sys, 400, 1, 5000 + seed);
        for (bucket, periods) in [(&mut short, 40usize), (&mut long, 400)] {
            let slice = &samples[..periods * t];
            let est = isp_offline_fft(slice, t).unwrap();
            let m_lags = choose_lag_count(slice.len(), 2, 2).unwrap();
            let corr = correlations_fft(slice, &est, m_lags).unwrap();
            let acn = estimate_acn(&est, 4, &OrderSelectionPolicy::Fixed(2)).unwrap();
            let report = solve_xi_zz(&corr, &acn.a_hat, &acn.c_hat, SolveMode::Ls).unwrap();
            let rec = recover_covariances(&report.xi_zz, &corr, &acn.a_hat, &acn.c_hat).unwrap();
            bucket.push((&rec.triple.sigma_vv - &noise.sigma_vv).norm() / noise.sigma_vv.norm());
        }
    }
    let (m40, m400) = (median(short), median(long));
    assert!(m400 < m40, "eta_v medians: 40T {m40}, 400T {m400}");
}

/// Exact-correlation path: analytic lags of the fixed plant reproduce the
/// published covariance triple through the PSD solver.
#[test]
fn exact_correlations_recover_published_covariances() {
    let model = fixed_mimo();
    let noise = fixed_mimo_noise();
    let corr = analytic_correlations(&model.a, &model.c, &noise, 8).unwrap();
    let report = solve_xi_zz(&corr, &model.a, &model.c, SolveMode::Psd).unwrap();
    let rec = recover_covariances(&report.xi_zz, &corr, &model.a, &model.c).unwrap();
    assert!((&rec.triple.sigma_ww - &noise.sigma_ww).norm() <= 1e-8);
    assert!((&rec.triple.sigma_vv - &noise.sigma_vv).norm() <= 1e-8);
    assert!((&rec.triple.sigma_tt - &noise.sigma_tt).norm() <= 1e-8);
}

/// The B/D regression is invariant to reordering the conjugate column
/// pair of any frequency.
#[test]
fn bd_estimate_invariant_to_conjugate_pair_order() {
    let model = fixed_mimo();
    let sys = excitation::random_periodic(40, 1, 1.0, 17).unwrap();
    let samples = pipeline_samples(&model, &CovarianceTriple::zero(2, 2, 1), &sys, 2, 4, 3);
    let est = isp_offline_matmul(&samples, &sys).unwrap();
    let acn = estimate_acn(&est, 4, &OrderSelectionPolicy::Fixed(2)).unwrap();
    let (b1, d1) = estimate_bd(&est, &acn.a_hat, &acn.c_hat).unwrap();

    // Negating the sine row of a pair flips its phase convention, which
    // swaps the roles of the +/- frequency columns.
    let mut flipped = est.clone();
    let mut col = 0;
    for &idx in est.selection.indices() {
        if idx != 0 {
            for i in 0..flipped.y_coeffs.nrows() {
                flipped.y_coeffs[(i, col)] = -flipped.y_coeffs[(i, col)];
            }
            for i in 0..flipped.u_coeffs.nrows() {
                flipped.u_coeffs[(i, col)] = -flipped.u_coeffs[(i, col)];
            }
            col += 2;
        } else {
            col += 1;
        }
    }
    let (b2, d2) = estimate_bd(&flipped, &acn.a_hat, &acn.c_hat).unwrap();
    assert!((&b1 - &b2).amax() <= 1e-10, "B changed by {}", (&b1 - &b2).amax());
    assert!((&d1 - &d2).amax() <= 1e-10, "D changed by {}", (&d1 - &d2).amax());
}

/// Order selection at 30 dB: the singular-value gap still separates the
/// true order under a 1e-3 tolerance for most seeds.
#[test]
fn order_selection_under_noise() {
    let t = 500;
    let chirp = excitation::chirp(t, 0.0, 0.4 * std::f64::consts::PI, 1.0).unwrap();
    let sel = FrequencySelection::full(t).unwrap();
    let sys = excitation::restrict(&chirp, &sel).unwrap();
    let policy = OrderSelectionPolicy::tolerance(1e-3).unwrap();
    let mut hits = 0;
    for seed in 0..20 {
        let model = random_sut(4, 1, 1, 0.9, 300 + seed).unwrap();
        let noise = calibrate_noise_to_snr(&model, &fixed_mimo_noise_for(&model), &sys, 30.0);
        let samples = pipeline_samples(&model, &noise, &sys, 50, 1, 600 + seed);
        let est = isp_offline_fft(&samples, t).unwrap();
        let acn = estimate_acn(&est, 8, &policy).unwrap();
        if acn.order == 4 {
            hits += 1;
        }
    }
    assert!(hits >= 18, "order recovered in only {hits}/20 cases");
}
