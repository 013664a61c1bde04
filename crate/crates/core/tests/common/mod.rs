//! Shared fixtures and independent oracles for the integration tests.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use sysid_core::excitation::ExcitationSystem;
use sysid_core::lti::{simulate, solve_discrete_lyapunov, CovarianceTriple, SampleRecord, StateSpaceModel};

/// The fixed 2-state, 1-input, 2-output plant used by the covariance
/// experiments.
pub fn fixed_mimo() -> StateSpaceModel {
    StateSpaceModel::new(
        DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.0, 0.2]),
        DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 0.0]),
    )
    .unwrap()
}

/// Its published noise covariances, diag(2.30, 0.16, 2.30, 3.64, 0.11)e-3.
pub fn fixed_mimo_noise() -> CovarianceTriple {
    CovarianceTriple::new(
        DMatrix::from_diagonal(&DVector::from_vec(vec![2.30e-3, 0.16e-3])),
        DMatrix::from_diagonal(&DVector::from_vec(vec![2.30e-3, 3.64e-3])),
        DMatrix::from_element(1, 1, 0.11e-3),
    )
    .unwrap()
}

/// Simulates `periods + discard` periods and drops the first `discard`,
/// re-indexing the kept samples from zero (exact thanks to periodicity).
pub fn pipeline_samples(
    model: &StateSpaceModel,
    noise: &CovarianceTriple,
    system: &ExcitationSystem,
    periods: usize,
    discard: usize,
    seed: u64,
) -> Vec<SampleRecord> {
    let t = system.selection().period();
    let u = system.generate_signal((periods + discard) * t);
    let recs = simulate(model, noise, &u, &DVector::zeros(model.order()), seed).unwrap();
    recs[discard * t..]
        .iter()
        .map(|r| SampleRecord { k: r.k - discard * t, ..r.clone() })
        .collect()
}

/// Oracle for the frequency-domain output coefficients: solves the
/// steady-state relation per frequency, `(y_b - j y_a) = G(e^{j w r}) (u_b - j u_a)`,
/// with `G` evaluated from the true quadruple. Independent of the
/// estimation path.
pub fn true_output_coefficients(model: &StateSpaceModel, system: &ExcitationSystem) -> DMatrix<f64> {
    let sel = system.selection();
    let omega = 2.0 * std::f64::consts::PI / sel.period() as f64;
    let p = model.outputs();
    let mut y = DMatrix::zeros(p, sel.state_dim());
    let mut col = 0;
    for &idx in sel.indices() {
        let g = model.frequency_response(omega * idx as f64).unwrap();
        if idx == 0 {
            let u_dc = system.coefficients().column(col);
            let resp = g.map(|z| z.re) * u_dc;
            y.column_mut(col).copy_from(&resp);
            col += 1;
        } else {
            let ua = system.coefficients().column(col);
            let ub = system.coefficients().column(col + 1);
            let u_c = DVector::from_fn(model.inputs(), |i, _| Complex64::new(ub[i], -ua[i]));
            let resp = g * u_c;
            for i in 0..p {
                y[(i, col)] = -resp[i].im;
                y[(i, col + 1)] = resp[i].re;
            }
            col += 2;
        }
    }
    y
}

/// Scales the covariance triple so the total measured-output noise power
/// sits `snr_db` below the noise-free output power (half the budget from
/// the process noise, half from the measurement noise), and the input
/// noise the same way against the excitation power.
pub fn calibrate_noise_to_snr(
    model: &StateSpaceModel,
    base: &CovarianceTriple,
    system: &ExcitationSystem,
    snr_db: f64,
) -> CovarianceTriple {
    let t = system.selection().period();
    let zero = CovarianceTriple::zero(model.order(), model.outputs(), model.inputs());
    let clean = pipeline_samples(model, &zero, system, 1, 3, 0);
    let p_y: f64 =
        clean.iter().map(|r| r.y_measured.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / t as f64;
    let p_u: f64 =
        clean.iter().map(|r| r.u_measured.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / t as f64;
    let snr_lin = 10f64.powf(snr_db / 10.0);
    let xi_zz = solve_discrete_lyapunov(&model.a, &base.sigma_ww).unwrap();
    let p_w = (&model.c * xi_zz * model.c.transpose()).trace();
    let p_v = base.sigma_vv.trace();
    let p_t = base.sigma_tt.trace();
    base.scaled(
        if p_w > 0.0 { p_y / (2.0 * snr_lin * p_w) } else { 0.0 },
        if p_v > 0.0 { p_y / (2.0 * snr_lin * p_v) } else { 0.0 },
        if p_t > 0.0 { p_u / (snr_lin * p_t) } else { 0.0 },
    )
}
