use sysid_core::excitation;
fn main() {
    let t = 1000;
    let sys = excitation::chirp(t, 0.0, 0.4 * std::f64::consts::PI, 1.0).unwrap();
    let coeffs = sys.coefficients();
    let sel = sys.selection();
    let mut mags = Vec::new();
    let mut col = 0;
    for &idx in sel.indices() {
        let w = if idx == 0 { 1 } else { 2 };
        let mag: f64 = (0..w).map(|j| coeffs.column(col + j).norm_squared()).sum::<f64>().sqrt();
        mags.push((idx, mag));
        col += w;
    }
    let peak = mags.iter().map(|&(_, m)| m).fold(0.0f64, f64::max);
    for &(idx, m) in mags.iter() {
        if idx % 25 == 0 {
            println!("bin {idx:4}: {:.3e} (rel {:.2e})", m, m / peak);
        }
    }
    let above: usize = mags.iter().filter(|&&(_, m)| m >= 1e-3 * peak).count();
    let above2: usize = mags.iter().filter(|&&(_, m)| m >= 1e-2 * peak).count();
    let above3: usize = mags.iter().filter(|&&(_, m)| m >= 0.1 * peak).count();
    println!("bins >= 1e-3 peak: {above}, >= 1e-2: {above2}, >= 0.1: {above3} of {}", mags.len());
}
