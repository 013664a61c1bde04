use std::time::Instant;
fn main() {
    for &n in &[240_000usize, 480_000, 131_072, 600, 2048] {
        let plan = sysid_core::fft::Fft::new(n).unwrap();
        let mut data: Vec<num_complex::Complex64> =
            (0..n).map(|i| num_complex::Complex64::new((i as f64 * 0.37).sin(), 0.0)).collect();
        let start = Instant::now();
        let reps = if n > 10000 { 5 } else { 200 };
        for _ in 0..reps {
            plan.forward(&mut data).unwrap();
        }
        let el = start.elapsed().as_secs_f64() / reps as f64;
        println!("n = {n:7}: {:.3} ms per transform", el * 1e3);
    }
}
