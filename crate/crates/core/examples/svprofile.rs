use nalgebra::{DMatrix, DVector};
use sysid_core::excitation::{self, FrequencySelection};
use sysid_core::isp::isp_offline_fft;
use sysid_core::lti::*;
use sysid_core::subspace::{estimate_acn, OrderSelectionPolicy};

fn main() {
    let t = 500;
    let chirp = excitation::chirp(t, 0.0, 0.4 * std::f64::consts::PI, 1.0).unwrap();
    let sel = FrequencySelection::full(t).unwrap();
    let sys = excitation::restrict(&chirp, &sel).unwrap();
    for periods in [50usize, 200] {
        let model = random_sut(4, 1, 1, 0.9, 301).unwrap();
        // crude 30 dB calibration: identity shapes scaled
        let zero = CovarianceTriple::zero(4, 1, 1);
        let u = sys.generate_signal(4 * t);
        let clean = simulate(&model, &zero, &u, &DVector::zeros(4), 0).unwrap();
        let p_y: f64 = clean[3*t..].iter().map(|r| r.y_measured[0].powi(2)).sum::<f64>() / t as f64;
        let p_u: f64 = clean[3*t..].iter().map(|r| r.u_measured[0].powi(2)).sum::<f64>() / t as f64;
        let snr = 10f64.powf(3.0);
        let xi = solve_discrete_lyapunov(&model.a, &DMatrix::identity(4,4)).unwrap();
        let pw = (&model.c * xi * model.c.transpose()).trace();
        let noise = CovarianceTriple::new(
            DMatrix::identity(4,4) * (p_y / (2.0*snr*pw)),
            DMatrix::identity(1,1) * (p_y / (2.0*snr)),
            DMatrix::identity(1,1) * (p_u / snr),
        ).unwrap();
        let u_full = sys.generate_signal((periods + 1) * t);
        let recs = simulate(&model, &noise, &u_full, &DVector::zeros(4), 55).unwrap();
        let kept: Vec<SampleRecord> = recs[t..].iter().map(|r| SampleRecord { k: r.k - t, ..r.clone() }).collect();
        let est = isp_offline_fft(&kept, t).unwrap();
        let acn = estimate_acn(&est, 8, &OrderSelectionPolicy::Fixed(4)).unwrap();
        let s1 = acn.singular_values[0];
        let ratios: Vec<String> = acn.singular_values.iter().map(|s| format!("{:.2e}", s/s1)).collect();
        println!("periods={periods}: sv ratios = {ratios:?}");
    }
}
