use nalgebra::{DMatrix, DVector};
use sysid_core::excitation::{self, FrequencySelection};
use sysid_core::isp::{isp_offline_fft, isp_offline_matmul};
use sysid_core::linalg::spectral_radius;
use sysid_core::lti::*;
use sysid_core::metrics::relative_h_errors;
use sysid_core::subspace::{identify, OrderSelectionPolicy};

/// random_sut redrawn until all eigenvalue angles lie in [0, band_hi*pi]
fn banded_sut(n: usize, max_radius: f64, band_hi: f64, seed: u64) -> StateSpaceModel {
    for attempt in 0..1000 {
        let model = random_sut(n, 1, 1, max_radius, seed * 1000 + attempt).unwrap();
        let ok = model.a.complex_eigenvalues().iter().all(|l| {
            let angle = l.im.atan2(l.re).abs();
            angle <= band_hi * std::f64::consts::PI
        });
        if ok {
            return model;
        }
    }
    panic!("no in-band SUT found");
}

fn main() {
    let t = 1000;
    let periods = 50;
    let chirp = excitation::chirp(t, 0.0, 0.4 * std::f64::consts::PI, 1.0).unwrap();
    let full = FrequencySelection::full(t).unwrap();
    let sys = excitation::restrict(&chirp, &full).unwrap();
    let reduced = excitation::reduced_selection(&sys, 16, 0.1).unwrap();
    let sys_red = excitation::restrict(&chirp, &reduced).unwrap();
    let snr = 10f64.powf(3.0);

    for (mode, n_bar) in [("reduced", 6usize), ("reduced", 8), ("reduced", 10)] {
        let mut d2 = Vec::new();
        let mut di = Vec::new();
        for seed in 0..20u64 {
            let model = banded_sut(4, 0.95, 0.4, 1000 + seed);
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
            let est = if mode == "full" {
                isp_offline_fft(&kept, t).unwrap()
            } else {
                isp_offline_matmul(&kept, &sys_red).unwrap()
            };
            let identified = identify(&est, n_bar, &OrderSelectionPolicy::Fixed(4)).unwrap();
            let rep = relative_h_errors(&model, &identified.model).unwrap();
            if !rep.estimate_stable {
                println!("  seed {seed}: UNSTABLE rho={}", spectral_radius(&identified.model.a));
            }
            d2.push(rep.delta2);
            di.push(rep.delta_inf);
        }
        let m2: f64 = d2.iter().sum::<f64>() / 20.0;
        let mi: f64 = di.iter().sum::<f64>() / 20.0;
        let w2 = d2.iter().cloned().fold(0.0f64, f64::max);
        println!("{mode} n_bar={n_bar}: delta2 mean {m2:.4} (worst {w2:.4}), delta_inf mean {mi:.4}");
    }
}
