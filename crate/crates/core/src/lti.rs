//! Discrete-time state-space plants: noisy simulation, Lyapunov and norm
//! utilities, and random test-system generation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg;

/// Plant quadruple `(A, B, C, D)` of a discrete-time LTI system
/// `x_{k+1} = A x_k + B u_k`, `y_k = C x_k + D u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let (n, m, p) = (a.nrows(), b.ncols(), c.nrows());
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != p || d.ncols() != m {
            return Err(Error::Dimension(format!(
                "inconsistent quadruple: A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(StateSpaceModel { a, b, c, d })
    }

    /// State dimension n.
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension m.
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension p.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.a)
    }

    pub fn is_schur_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    /// Controllability matrix `[B, AB, ..., A^{n-1}B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut blocks = DMatrix::zeros(n, n * self.inputs());
        let mut cur = self.b.clone();
        for i in 0..n {
            blocks.view_mut((0, i * self.inputs()), (n, self.inputs())).copy_from(&cur);
            cur = &self.a * cur;
        }
        blocks
    }

    /// Observability matrix `[C; CA; ...; CA^{n-1}]`.
    pub fn observability_matrix(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut blocks = DMatrix::zeros(n * self.outputs(), n);
        let mut cur = self.c.clone();
        for i in 0..n {
            blocks.view_mut((i * self.outputs(), 0), (self.outputs(), n)).copy_from(&cur);
            cur = cur * &self.a;
        }
        blocks
    }

    /// True when the controllability and observability matrices both have
    /// full numerical rank at the given condition threshold.
    pub fn is_minimal(&self, condition_threshold: f64) -> bool {
        let n = self.order();
        let tol = 1.0 / condition_threshold;
        linalg::numerical_rank(&self.controllability_matrix(), tol) == n
            && linalg::numerical_rank(&self.observability_matrix(), tol) == n
    }

    /// Transfer function `G(e^{j theta}) = C (e^{j theta} I - A)^{-1} B + D`.
    pub fn frequency_response(&self, theta: f64) -> Result<DMatrix<Complex64>> {
        let n = self.order();
        let z = Complex64::new(theta.cos(), theta.sin());
        let resolvent_arg = DMatrix::from_diagonal_element(n, n, z) - linalg::to_complex(&self.a);
        let solved = resolvent_arg
            .lu()
            .solve(&linalg::to_complex(&self.b))
            .ok_or_else(|| Error::Numerical(format!("(e^(j {theta}) I - A) is singular")))?;
        Ok(linalg::to_complex(&self.c) * solved + linalg::to_complex(&self.d))
    }

    /// Applies the state similarity `x -> T x`, keeping the same
    /// input/output behaviour.
    pub fn similarity(&self, t: &DMatrix<f64>) -> Result<Self> {
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("similarity transform is singular".into()))?;
        StateSpaceModel::new(t * &self.a * &t_inv, t * &self.b, &self.c * &t_inv, self.d.clone())
    }
}

/// Noise covariances `(Sigma_ww, Sigma_vv, Sigma_tt)` for the process,
/// output and input noise. All three are symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTriple {
    pub sigma_ww: DMatrix<f64>,
    pub sigma_vv: DMatrix<f64>,
    pub sigma_tt: DMatrix<f64>,
}

impl CovarianceTriple {
    pub fn new(sigma_ww: DMatrix<f64>, sigma_vv: DMatrix<f64>, sigma_tt: DMatrix<f64>) -> Result<Self> {
        for (name, m) in [("sigma_ww", &sigma_ww), ("sigma_vv", &sigma_vv), ("sigma_tt", &sigma_tt)] {
            if m.nrows() != m.ncols() {
                return Err(Error::Dimension(format!("{name} must be square")));
            }
            let scale = m.norm().max(1.0);
            if linalg::asymmetry(m) > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
            }
            if m.nrows() > 0 && linalg::min_eigenvalue(m) < -1e-10 * scale {
                return Err(Error::InvalidArgument(format!("{name} is not positive semidefinite")));
            }
        }
        Ok(CovarianceTriple { sigma_ww, sigma_vv, sigma_tt })
    }

    pub fn zero(n: usize, p: usize, m: usize) -> Self {
        CovarianceTriple {
            sigma_ww: DMatrix::zeros(n, n),
            sigma_vv: DMatrix::zeros(p, p),
            sigma_tt: DMatrix::zeros(m, m),
        }
    }

    pub fn scaled(&self, w: f64, v: f64, t: f64) -> Self {
        CovarianceTriple {
            sigma_ww: &self.sigma_ww * w,
            sigma_vv: &self.sigma_vv * v,
            sigma_tt: &self.sigma_tt * t,
        }
    }
}

/// One noisy input/output sample, `u^m_k = u_k + tau_k`,
/// `y^m_k = C x_k + D u_k + nu_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub k: usize,
    pub u_measured: Vec<f64>,
    pub y_measured: Vec<f64>,
}

fn gaussian_factor(sigma: &DMatrix<f64>, name: &str) -> Result<Option<DMatrix<f64>>> {
    if sigma.iter().all(|&x| x == 0.0) {
        return Ok(None);
    }
    linalg::psd_factor(sigma, 1e-10)
        .map(Some)
        .map_err(|_| Error::InvalidArgument(format!("{name} is not positive semidefinite")))
}

/// Simulates the plant over the given input sequence with Gaussian noise
/// drawn from `noise`. The same seed reproduces the output bit for bit.
///
/// Per step the draw order is fixed (process, output, input noise) so the
/// stream consumption is part of the contract.
pub fn simulate(
    model: &StateSpaceModel,
    noise: &CovarianceTriple,
    input_sequence: &[DVector<f64>],
    x0: &DVector<f64>,
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    let (n, m, p) = (model.order(), model.inputs(), model.outputs());
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
    }
    if noise.sigma_ww.nrows() != n || noise.sigma_vv.nrows() != p || noise.sigma_tt.nrows() != m {
        return Err(Error::Dimension("covariance dimensions do not match the model".into()));
    }
    for u in input_sequence {
        if u.len() != m {
            return Err(Error::Dimension(format!("input vector length {} != {m}", u.len())));
        }
    }
    let lw = gaussian_factor(&noise.sigma_ww, "sigma_ww")?;
    let lv = gaussian_factor(&noise.sigma_vv, "sigma_vv")?;
    let lt = gaussian_factor(&noise.sigma_tt, "sigma_tt")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |l: &Option<DMatrix<f64>>, dim: usize, rng: &mut ChaCha8Rng| -> DVector<f64> {
        match l {
            None => DVector::zeros(dim),
            Some(l) => {
                let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                l * z
            }
        }
    };

    let mut x = x0.clone();
    let mut records = Vec::with_capacity(input_sequence.len());
    for (k, u) in input_sequence.iter().enumerate() {
        let w = draw(&lw, n, &mut rng);
        let v = draw(&lv, p, &mut rng);
        let t = draw(&lt, m, &mut rng);
        let y = &model.c * &x + &model.d * u + v;
        let u_meas = u + t;
        records.push(SampleRecord {
            k,
            u_measured: u_meas.as_slice().to_vec(),
            y_measured: y.as_slice().to_vec(),
        });
        x = &model.a * &x + &model.b * u + w;
    }
    Ok(records)
}

/// Solves the discrete Lyapunov equation `P = A P A^T + Q` for Schur-stable
/// `A`. Small problems go through the vectorized linear system
/// `(I - A (x) A) vec(P) = vec(Q)`; larger ones through Smith's squaring
/// iteration.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension("A and Q must be square of the same size".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let rho = linalg::spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }
    let p = if n <= 32 {
        let kron = a.kronecker(a);
        let sys = DMatrix::identity(n * n, n * n) - kron;
        let rhs = linalg::vec_of(q);
        let sol = sys
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("Lyapunov system is singular".into()))?;
        linalg::unvec(&sol, n, n)
    } else {
        // Smith iteration: P <- P + A P A^T with A <- A^2 doubles the
        // number of summed terms each step.
        let mut p = q.clone();
        let mut ak = a.clone();
        for _ in 0..200 {
            let update = &ak * &p * ak.transpose();
            p += &update;
            if update.norm() <= 1e-16 * p.norm() {
                break;
            }
            ak = &ak * &ak;
        }
        p
    };
    Ok(linalg::symmetrize(&p))
}

/// Discrete H2 norm, `sqrt(trace(C P C^T + D D^T))` with `P` the
/// controllability Gramian.
pub fn h2_norm(model: &StateSpaceModel) -> Result<f64> {
    let gram = solve_discrete_lyapunov(&model.a, &(&model.b * model.b.transpose()))?;
    let val = (&model.c * gram * model.c.transpose() + &model.d * model.d.transpose()).trace();
    Ok(val.max(0.0).sqrt())
}

fn largest_singular_value(model: &StateSpaceModel, theta: f64) -> Result<f64> {
    let g = model.frequency_response(theta)?;
    let sv = g.singular_values();
    Ok(if sv.is_empty() { 0.0 } else { sv.max() })
}

/// Discrete H-infinity norm by a dense frequency grid over `[0, pi]`
/// followed by golden-section refinement around the grid maximizer.
pub fn hinf_norm(model: &StateSpaceModel, grid_size: usize) -> Result<f64> {
    if grid_size < 64 {
        return Err(Error::InvalidArgument("grid_size must be at least 64".into()));
    }
    let rho = model.spectral_radius();
    if rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }
    let step = std::f64::consts::PI / (grid_size - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..grid_size {
        let v = largest_singular_value(model, i as f64 * step)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    // Refine within the bracket formed by the neighbouring grid points.
    let mut lo = step * best.0.saturating_sub(1) as f64;
    let mut hi = step * (best.0 + 1).min(grid_size - 1) as f64;
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = largest_singular_value(model, x1)?;
    let mut f2 = largest_singular_value(model, x2)?;
    for _ in 0..80 {
        if hi - lo < 1e-12 {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = largest_singular_value(model, x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = largest_singular_value(model, x1)?;
        }
    }
    Ok(best.1.max(f1).max(f2))
}

/// Draws a random stable, minimal test system. Eigenvalues are sampled with
/// modulus below `max_radius` (real or conjugate pairs), rotated by a Haar
/// orthogonal similarity; `B`, `C`, `D` are standard normal. Redraws until
/// the controllability/observability rank tests pass at condition 1e8.
pub fn random_sut(n: usize, m: usize, p: usize, max_radius: f64, seed: u64) -> Result<StateSpaceModel> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if !(0.0 < max_radius && max_radius < 1.0) {
        return Err(Error::InvalidArgument("max_radius must lie in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const RETRIES: usize = 64;
    for _ in 0..RETRIES {
        let mut a = DMatrix::zeros(n, n);
        let mut i = 0;
        while i < n {
            let radius: f64 = rng.random_range(0.0..max_radius);
            let complex_pair = i + 1 < n && rng.random_bool(0.5);
            if complex_pair {
                let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let (re, im) = (radius * angle.cos(), radius * angle.sin());
                a[(i, i)] = re;
                a[(i, i + 1)] = im;
                a[(i + 1, i)] = -im;
                a[(i + 1, i + 1)] = re;
                i += 2;
            } else {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                a[(i, i)] = sign * radius;
                i += 1;
            }
        }
        let q = linalg::random_orthogonal(n, &mut rng);
        let a = &q * a * q.transpose();
        let normal = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
        };
        let b = normal(&mut rng, n, m);
        let c = normal(&mut rng, p, n);
        let d = normal(&mut rng, p, m);
        let model = StateSpaceModel::new(a, b, c, d)?;
        if model.is_minimal(1e8) {
            return Ok(model);
        }
    }
    Err(Error::Numerical(format!(
        "failed to draw a minimal system of order {n} with m={m}, p={p} after {RETRIES} tries"
    )))
}

/// JSON-facing plant description with row-major matrices and an optional
/// noise covariance triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantFile {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_ww: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_vv: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_tt: Option<Vec<Vec<f64>>>,
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl PlantFile {
    pub fn from_model(model: &StateSpaceModel, noise: Option<&CovarianceTriple>) -> Self {
        PlantFile {
            a: matrix_to_rows(&model.a),
            b: matrix_to_rows(&model.b),
            c: matrix_to_rows(&model.c),
            d: matrix_to_rows(&model.d),
            sigma_ww: noise.map(|n| matrix_to_rows(&n.sigma_ww)),
            sigma_vv: noise.map(|n| matrix_to_rows(&n.sigma_vv)),
            sigma_tt: noise.map(|n| matrix_to_rows(&n.sigma_tt)),
        }
    }

    pub fn model(&self) -> Result<StateSpaceModel> {
        StateSpaceModel::new(
            rows_to_matrix(&self.a)?,
            rows_to_matrix(&self.b)?,
            rows_to_matrix(&self.c)?,
            rows_to_matrix(&self.d)?,
        )
    }

    pub fn noise(&self) -> Result<Option<CovarianceTriple>> {
        match (&self.sigma_ww, &self.sigma_vv, &self.sigma_tt) {
            (Some(w), Some(v), Some(t)) => Ok(Some(CovarianceTriple::new(
                rows_to_matrix(w)?,
                rows_to_matrix(v)?,
                rows_to_matrix(t)?,
            )?)),
            (None, None, None) => Ok(None),
            _ => Err(Error::Parse("plant file must carry all three covariances or none".into())),
        }
    }
}

/// Writes samples as CSV with header `k,u_1..u_m,y_1..y_p` and 17
/// significant digits per value.
pub fn write_samples_csv<W: Write>(mut w: W, samples: &[SampleRecord]) -> Result<()> {
    let (m, p) = samples.first().map_or((0, 0), |r| (r.u_measured.len(), r.y_measured.len()));
    let mut header = String::from("k");
    for i in 1..=m {
        header.push_str(&format!(",u_{i}"));
    }
    for i in 1..=p {
        header.push_str(&format!(",y_{i}"));
    }
    writeln!(w, "{header}")?;
    for rec in samples {
        let mut line = rec.k.to_string();
        for v in rec.u_measured.iter().chain(rec.y_measured.iter()) {
            line.push_str(&format!(",{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads samples back from the CSV layout of [`write_samples_csv`].
/// Indices must be contiguous from zero.
pub fn read_samples_csv<R: BufRead>(r: R) -> Result<Vec<SampleRecord>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty sample file".into()))?
        .map_err(Error::Io)?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    let m = cols.iter().filter(|c| c.starts_with("u_")).count();
    let p = cols.iter().filter(|c| c.starts_with("y_")).count();
    if cols.first() != Some(&"k") || cols.len() != 1 + m + p {
        return Err(Error::Parse(format!("unexpected sample header: {header}")));
    }
    let mut samples = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 1 + m + p {
            return Err(Error::Parse(format!("row {row}: expected {} fields", 1 + m + p)));
        }
        let k: usize = fields[0].parse().map_err(|_| Error::Parse(format!("bad index {}", fields[0])))?;
        if k != row {
            return Err(Error::Parse(format!("sample indices must be contiguous from 0, got {k} at row {row}")));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad value {s}")));
        let u = fields[1..1 + m].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
        let y = fields[1 + m..].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
        samples.push(SampleRecord { k, u_measured: u, y_measured: y });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_model(a: f64, b: f64, c: f64, d: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, d),
        )
        .unwrap()
    }

    /// Fixed 2-state, 1-input, 2-output plant used across the test suite.
    pub(crate) fn fixed_mimo() -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.0, 0.2]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.0]),
        )
        .unwrap()
    }

    pub(crate) fn fixed_mimo_noise() -> CovarianceTriple {
        CovarianceTriple::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.30e-3, 0.16e-3])),
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.30e-3, 3.64e-3])),
            DMatrix::from_element(1, 1, 0.11e-3),
        )
        .unwrap()
    }

    #[test]
    fn zero_input_zero_noise_stays_at_zero() {
        let model = fixed_mimo();
        let noise = CovarianceTriple::zero(2, 2, 1);
        let inputs = vec![DVector::zeros(1); 16];
        let recs = simulate(&model, &noise, &inputs, &DVector::zeros(2), 1).unwrap();
        for r in recs {
            assert!(r.y_measured.iter().all(|&v| v == 0.0));
            assert!(r.u_measured.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_step_response_converges_to_gain() {
        // y infinity = c b / (1 - a) = 2 for a = 0.5, b = c = 1.
        let model = scalar_model(0.5, 1.0, 1.0, 0.0);
        let noise = CovarianceTriple::zero(1, 1, 1);
        let inputs = vec![DVector::from_element(1, 1.0); 200];
        let recs = simulate(&model, &noise, &inputs, &DVector::zeros(1), 0).unwrap();
        assert_relative_eq!(recs.last().unwrap().y_measured[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn simulation_is_reproducible() {
        let model = fixed_mimo();
        let noise = fixed_mimo_noise();
        let inputs: Vec<DVector<f64>> =
            (0..64).map(|k| DVector::from_element(1, (k as f64 * 0.1).sin())).collect();
        let a = simulate(&model, &noise, &inputs, &DVector::zeros(2), 42).unwrap();
        let b = simulate(&model, &noise, &inputs, &DVector::zeros(2), 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn output_noise_variance_matches_covariance() {
        // Zero process/input noise isolates nu on the outputs.
        let model = fixed_mimo();
        let noise = CovarianceTriple::new(
            DMatrix::zeros(2, 2),
            fixed_mimo_noise().sigma_vv,
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let n = 60_000;
        let inputs = vec![DVector::zeros(1); n];
        let recs = simulate(&model, &noise, &inputs, &DVector::zeros(2), 9).unwrap();
        for ch in 0..2 {
            let var: f64 = recs.iter().map(|r| r.y_measured[ch].powi(2)).sum::<f64>() / n as f64;
            let target = noise.sigma_vv[(ch, ch)];
            assert!(
                (var - target).abs() <= 0.10 * target,
                "channel {ch}: sample variance {var}, target {target}"
            );
        }
    }

    #[test]
    fn lyapunov_identity_for_zero_a() {
        let a = DMatrix::zeros(3, 3);
        let q = DMatrix::identity(3, 3);
        let p = solve_discrete_lyapunov(&a, &q).unwrap();
        assert_relative_eq!(p, q, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_scalar_fixed_point() {
        let a = DMatrix::from_element(1, 1, 0.8);
        let q = DMatrix::from_element(1, 1, 1.0);
        let p = solve_discrete_lyapunov(&a, &q).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0 / (1.0 - 0.64), epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_zero_forcing_gives_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.5]);
        let p = solve_discrete_lyapunov(&a, &DMatrix::zeros(2, 2)).unwrap();
        assert!(p.norm() < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable_a() {
        let a = DMatrix::from_element(1, 1, 1.0);
        assert!(solve_discrete_lyapunov(&a, &DMatrix::identity(1, 1)).is_err());
    }

    #[test]
    fn lyapunov_smith_path_matches_vectorized() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 40; // above the vectorization cutoff
        let q0 = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = &q0 * q0.transpose();
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = &a * (0.9 / linalg::spectral_radius(&a));
        let p = solve_discrete_lyapunov(&a, &q).unwrap();
        let residual = (&p - &a * &p * a.transpose() - &q).norm();
        assert!(residual <= 1e-10 * q.norm(), "residual {residual}");
    }

    #[test]
    fn h2_of_static_system_is_frobenius_of_d() {
        let model = StateSpaceModel::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::zeros(1, 2),
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
        )
        .unwrap();
        assert_relative_eq!(h2_norm(&model).unwrap(), model.d.norm(), epsilon = 1e-12);
    }

    #[test]
    fn h2_scalar_gramian() {
        let model = scalar_model(0.5, 1.0, 1.0, 0.0);
        assert_relative_eq!(h2_norm(&model).unwrap(), (1.0f64 / 0.75).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn h2_zero_system() {
        let model = StateSpaceModel::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert_relative_eq!(h2_norm(&model).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn hinf_static_system() {
        let model = StateSpaceModel::new(
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(2, 1),
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        assert_relative_eq!(hinf_norm(&model, 64).unwrap(), 3.0, epsilon = 1e-9);
    }

    #[test]
    fn hinf_scalar_pole_at_dc_and_nyquist() {
        let lowpass = scalar_model(0.5, 1.0, 1.0, 0.0);
        assert_relative_eq!(hinf_norm(&lowpass, 256).unwrap(), 2.0, epsilon = 1e-8);
        let highpass = scalar_model(-0.5, 1.0, 1.0, 0.0);
        assert_relative_eq!(hinf_norm(&highpass, 256).unwrap(), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn random_sut_is_deterministic_and_within_radius() {
        let a = random_sut(4, 1, 1, 0.95, 11).unwrap();
        let b = random_sut(4, 1, 1, 0.95, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.spectral_radius() <= 0.95);
        let scalar = random_sut(1, 1, 1, 0.95, 3).unwrap();
        assert!(scalar.a[(0, 0)].abs() <= 0.95);
        assert!(scalar.is_minimal(1e8));
    }

    #[test]
    fn random_sut_satisfies_assumptions_over_many_draws() {
        for seed in 0..100 {
            let model = random_sut(4, 2, 2, 0.95, seed).unwrap();
            assert!(model.spectral_radius() < 0.95, "seed {seed}");
            assert!(model.is_minimal(1e8), "seed {seed}");
        }
    }

    #[test]
    fn samples_csv_roundtrip() {
        let model = fixed_mimo();
        let noise = fixed_mimo_noise();
        let inputs: Vec<DVector<f64>> =
            (0..32).map(|k| DVector::from_element(1, (k as f64).cos())).collect();
        let recs = simulate(&model, &noise, &inputs, &DVector::zeros(2), 17).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &recs).unwrap();
        let back = read_samples_csv(std::io::BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(recs.len(), back.len());
        for (a, b) in recs.iter().zip(back.iter()) {
            assert_eq!(a.k, b.k);
            for (x, y) in a.u_measured.iter().zip(b.u_measured.iter()) {
                assert_relative_eq!(x, y, max_relative = 1e-15);
            }
            for (x, y) in a.y_measured.iter().zip(b.y_measured.iter()) {
                assert_relative_eq!(x, y, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn plant_file_roundtrip() {
        let model = fixed_mimo();
        let noise = fixed_mimo_noise();
        let file = PlantFile::from_model(&model, Some(&noise));
        let json = serde_json::to_string(&file).unwrap();
        let parsed: PlantFile = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.model().unwrap(), model);
        assert_eq!(parsed.noise().unwrap().unwrap(), noise);
    }
}
