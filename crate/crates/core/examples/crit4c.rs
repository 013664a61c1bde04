use nalgebra::{DMatrix, DVector};
use sysid_core::excitation::{self, FrequencySelection};
use sysid_core::isp::isp_offline_matmul;
use sysid_core::lti::*;
use sysid_core::metrics::relative_h_errors;
use sysid_core::subspace::{identify, OrderSelectionPolicy};

fn banded_sut(n: usize, max_radius: f64, band_hi: f64, seed: u64) -> StateSpaceModel {
    for attempt in 0..1000 {
        let model = random_sut(n, 1, 1, max_radius, seed * 1000 + attempt).unwrap();
        let ok = model.a.complex_eigenvalues().iter().all(|l| {
            l.im.atan2(l.re).abs() <= band_hi * std::f64::consts::PI
        });
        if ok { return model; }
    }
    unreachable!()
}

fn main() {
    let t = 1000;
    let periods = 50;
    let chirp = excitation::chirp(t, 0.0, 0.4 * std::f64::consts::PI, 1.0).unwrap();
    let snr = 10f64.powf(3.0);

    // Noise-free reduced-mode exactness check
    for thresh in [0.1, 0.5] {
        let reduced = excitation::reduced_selection(&chirp, 16, thresh).unwrap();
        let sys_red = excitation::restrict(&chirp, &reduced).unwrap();
        let model = banded_sut(4, 0.95, 0.4, 3);
        let u = sys_red.generate_signal(5 * t);
        let recs = simulate(&model, &CovarianceTriple::zero(4, 1, 1), &u, &DVector::zeros(4), 0).unwrap();
        let kept: Vec<SampleRecord> = recs[3*t..].iter().map(|r| SampleRecord { k: r.k - 3*t, ..r.clone() }).collect();
        let est = isp_offline_matmul(&kept, &sys_red).unwrap();
        let identified = identify(&est, 8, &OrderSelectionPolicy::Fixed(4)).unwrap();
        let rep = relative_h_errors(&model, &identified.model).unwrap();
        println!("noise-free reduced thresh={thresh}: indices {:?} delta_inf {:.2e}", reduced.indices(), rep.delta_inf);
    }

    // Noisy reduced mode, excitation = full chirp, identification on subset
    let full = FrequencySelection::full(t).unwrap();
    let sys_full = excitation::restrict(&chirp, &full).unwrap();
    for (thresh, n_bar) in [(0.5, 6usize), (0.5, 8), (0.5, 10), (0.5, 12)] {
        let reduced = excitation::reduced_selection(&chirp, 16, thresh).unwrap();
        let sys_red = excitation::restrict(&chirp, &reduced).unwrap();
        let mut d2 = Vec::new(); let mut unstable = 0;
        for seed in 0..20u64 {
            let model = banded_sut(4, 0.95, 0.4, 1000 + seed);
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
            let recs = simulate(&model, &noise, &u, &DVector::zeros(4), 7000 + seed).unwrap();
            let kept: Vec<SampleRecord> = recs[t..].iter().map(|r| SampleRecord { k: r.k - t, ..r.clone() }).collect();
            let est = isp_offline_matmul(&kept, &sys_red).unwrap();
            let identified = identify(&est, n_bar, &OrderSelectionPolicy::Fixed(4)).unwrap();
            let rep = relative_h_errors(&model, &identified.model).unwrap();
            if !rep.estimate_stable { unstable += 1; } else { d2.push(rep.delta2); }
        }
        let m2: f64 = d2.iter().sum::<f64>() / d2.len().max(1) as f64;
        let w2 = d2.iter().cloned().fold(0.0f64, f64::max);
        println!("reduced thresh={thresh} n_bar={n_bar}: stable mean {m2:.4} worst {w2:.4}, unstable {unstable}/20");
    }
}
