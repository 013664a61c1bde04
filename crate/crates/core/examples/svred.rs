use nalgebra::{DMatrix, DVector};
use sysid_core::excitation::{self, FrequencySelection};
use sysid_core::isp::{isp_offline_fft, isp_offline_matmul};
use sysid_core::lti::*;
use sysid_core::subspace::{estimate_acn, OrderSelectionPolicy};

fn banded_sut(n: usize, max_radius: f64, band_hi: f64, seed: u64) -> StateSpaceModel {
    for attempt in 0..1000 {
        let model = random_sut(n, 1, 1, max_radius, seed * 1000 + attempt).unwrap();
        if model.a.complex_eigenvalues().iter().all(|l| l.im.atan2(l.re).abs() <= band_hi * std::f64::consts::PI) {
            return model;
        }
    }
    unreachable!()
}

fn main() {
    let t = 1000;
    let periods = 50;
    let chirp = excitation::chirp(t, 0.0, 0.4 * std::f64::consts::PI, 1.0).unwrap();
    let snr = 10f64.powf(3.0);
    let full = FrequencySelection::full(t).unwrap();
    let sys_full = excitation::restrict(&chirp, &full).unwrap();
    let reduced = excitation::reduced_selection(&chirp, 16, 0.1).unwrap();
    let sys_red = excitation::restrict(&chirp, &reduced).unwrap();

    for seed in [1001u64, 1002, 1005] {
        let model = banded_sut(4, 0.95, 0.4, seed);
        let zero = CovarianceTriple::zero(4, 1, 1);
        let u0 = sys_full.generate_signal(2 * t);
        let clean = simulate(&model, &zero, &u0, &DVector::zeros(4), 0).unwrap();
        let p_y: f64 = clean[t..].iter().map(|r| r.y_measured[0].powi(2)).sum::<f64>() / t as f64;
        let p_u: f64 = clean[t..].iter().map(|r| r.u_measured[0].powi(2)).sum::<f64>() / t as f64;
        let xi = solve_discrete_lyapunov(&model.a, &DMatrix::identity(4, 4)).unwrap();
        let pw = (&model.c * xi * model.c.transpose()).trace();
        let noise = CovarianceTriple::new(
            DMatrix::identity(4, 4) * (p_y / (2.0 * snr * pw)),
            DMatrix::identity(1, 1) * (p_y / (2.0 * snr)),
            DMatrix::identity(1, 1) * (p_u / snr),
        ).unwrap();
        let u = sys_full.generate_signal((periods + 1) * t);
        let recs = simulate(&model, &noise, &u, &DVector::zeros(4), 8000 + seed).unwrap();
        let kept: Vec<SampleRecord> = recs[t..].iter().map(|r| SampleRecord { k: r.k - t, ..r.clone() }).collect();
        let est_f = isp_offline_fft(&kept, t).unwrap();
        let est_r = isp_offline_matmul(&kept, &sys_red).unwrap();
        let acn_f = estimate_acn(&est_f, 8, &OrderSelectionPolicy::Fixed(4)).unwrap();
        let acn_r = estimate_acn(&est_r, 8, &OrderSelectionPolicy::Fixed(4)).unwrap();
        let fr: Vec<String> = acn_f.singular_values.iter().map(|s| format!("{:.1e}", s / acn_f.singular_values[0])).collect();
        let rr: Vec<String> = acn_r.singular_values.iter().map(|s| format!("{:.1e}", s / acn_r.singular_values[0])).collect();
        println!("seed {seed} full:    {fr:?}");
        println!("seed {seed} reduced: {rr:?}");
        // noise-free reference for the same plant
        let recs0 = simulate(&model, &zero, &u, &DVector::zeros(4), 1).unwrap();
        let kept0: Vec<SampleRecord> = recs0[t..].iter().map(|r| SampleRecord { k: r.k - t, ..r.clone() }).collect();
        let est0 = isp_offline_matmul(&kept0, &sys_red).unwrap();
        let acn0 = estimate_acn(&est0, 8, &OrderSelectionPolicy::Fixed(4)).unwrap();
        let r0: Vec<String> = acn0.singular_values.iter().map(|s| format!("{:.1e}", s / acn0.singular_values[0])).collect();
        println!("seed {seed} red-nf:  {r0:?}");
    }
}
