use nalgebra::{DMatrix, DVector};
use sysid_core::excitation::{self, FrequencySelection};
use sysid_core::isp::{isp_offline_fft, isp_offline_matmul};
use sysid_core::lti::*;
use sysid_core::metrics::relative_h_errors;
use sysid_core::subspace::{identify, OrderSelectionPolicy};
use std::time::Instant;

fn main() {
    let t = 1000;
    let periods = 50;
    let chirp = excitation::chirp(t, 0.0, 0.4 * std::f64::consts::PI, 1.0).unwrap();
    let full = FrequencySelection::full(t).unwrap();
    let sys = excitation::restrict(&chirp, &full).unwrap();
    let snr = 10f64.powf(3.0);

    for n_bar in [5usize, 6, 8, 10] {
        let mut deltas = Vec::new();
        let start = Instant::now();
        for seed in 0..20u64 {
            let model = random_sut(4, 1, 1, 0.95, 1000 + seed).unwrap();
            // 30 dB calibration (identity base shapes)
            let zero = CovarianceTriple::zero(4, 1, 1);
            let u0 = sys.generate_signal(2 * t);
            let clean = simulate(&model, &zero, &u0, &DVector::zeros(4), 0).unwrap();
            let p_y: f64 = clean[t..].iter().map(|r| r.y_measured[0].powi(2)).sum::<f64>() / t as f64;
            let p_u: f64 = clean[t..].iter().map(|r| r.u_measured[0].powi(2)).sum::<f64>() / t as f64;
            let xi = solve_discrete_lyapunov(&model.a, &DMatrix::identity(4, 4)).unwrap();
            let pw = (&model.c * xi * model.c.transpose()).trace();
            let noise = CovarianceTriple::new(
                DMatrix::identity(4, 4) * (p_y / (2.0 * snr * pw)),
                DMatrix::identity(1, 1) * (p_y / (2.0 * snr)),
                DMatrix::identity(1, 1) * (p_u / snr),
            )
            .unwrap();
            let u = sys.generate_signal((periods + 1) * t);
            let recs = simulate(&model, &noise, &u, &DVector::zeros(4), 7000 + seed).unwrap();
            let kept: Vec<SampleRecord> =
                recs[t..].iter().map(|r| SampleRecord { k: r.k - t, ..r.clone() }).collect();
            let est = isp_offline_fft(&kept, t).unwrap();
            let identified = identify(&est, n_bar, &OrderSelectionPolicy::Fixed(4)).unwrap();
            let rep = relative_h_errors(&model, &identified.model).unwrap();
            deltas.push((rep.delta2, rep.delta_inf));
        }
        let m2: f64 = deltas.iter().map(|d| d.0).sum::<f64>() / deltas.len() as f64;
        let mi: f64 = deltas.iter().map(|d| d.1).sum::<f64>() / deltas.len() as f64;
        let worst = deltas.iter().map(|d| d.0).fold(0.0f64, f64::max);
        println!(
            "full mode n_bar={n_bar}: delta2 mean {m2:.4}, delta_inf mean {mi:.4}, worst d2 {worst:.4} ({:.1}s)",
            start.elapsed().as_secs_f64()
        );
    }

    // reduced mode q=16
    let reduced = excitation::reduced_selection(&sys, 16, 1e-3).unwrap();
    println!("reduced indices: {:?}", reduced.indices());
    let sys_red = excitation::restrict(&chirp, &reduced).unwrap();
    for n_bar in [6usize, 8] {
        let mut deltas = Vec::new();
        for seed in 0..20u64 {
            let model = random_sut(4, 1, 1, 0.95, 1000 + seed).unwrap();
            let zero = CovarianceTriple::zero(4, 1, 1);
            let u0 = sys.generate_signal(2 * t);
            let clean = simulate(&model, &zero, &u0, &DVector::zeros(4), 0).unwrap();
            let p_y: f64 = clean[t..].iter().map(|r| r.y_measured[0].powi(2)).sum::<f64>() / t as f64;
            let p_u: f64 = clean[t..].iter().map(|r| r.u_measured[0].powi(2)).sum::<f64>() / t as f64;
            let xi = solve_discrete_lyapunov(&model.a, &DMatrix::identity(4, 4)).unwrap();
            let pw = (&model.c * xi * model.c.transpose()).trace();
            let noise = CovarianceTriple::new(
                DMatrix::identity(4, 4) * (p_y / (2.0 * snr * pw)),
                DMatrix::identity(1, 1) * (p_y / (2.0 * snr)),
                DMatrix::identity(1, 1) * (p_u / snr),
            )
            .unwrap();
            let u = sys.generate_signal((periods + 1) * t);
            let recs = simulate(&model, &noise, &u, &DVector::zeros(4), 7000 + seed).unwrap();
            let kept: Vec<SampleRecord> =
                recs[t..].iter().map(|r| SampleRecord { k: r.k - t, ..r.clone() }).collect();
            let est = isp_offline_matmul(&kept, &sys_red).unwrap();
            let identified = identify(&est, n_bar, &OrderSelectionPolicy::Fixed(4)).unwrap();
            let rep = relative_h_errors(&model, &identified.model).unwrap();
            deltas.push(rep.delta2);
        }
        let m2: f64 = deltas.iter().sum::<f64>() / deltas.len() as f64;
        let worst = deltas.iter().cloned().fold(0.0f64, f64::max);
        println!("reduced q=16 n_bar={n_bar}: delta2 mean {m2:.4}, worst {worst:.4}");
    }
}
