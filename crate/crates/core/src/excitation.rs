//! Periodic excitation signals and the marginally-stable virtual generator
//! behind them.
//!
//! Any discrete signal with period `T` splits into harmonics of
//! `omega = 2 pi / T`. The generator keeps one rotation block per selected
//! harmonic (plus a constant channel for index 0); its state `v_k` doubles
//! as the regressor of the frequency-coefficient estimation stage.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fft;

/// A period `T` together with the strictly increasing set of harmonic
/// indices in `[0, T/2]` used for identification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencySelection {
    period: usize,
    indices: Vec<usize>,
}

impl FrequencySelection {
    pub fn new(period: usize, indices: Vec<usize>) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidArgument("period must be positive".into()));
        }
        let mut prev: Option<usize> = None;
        for &idx in &indices {
            if idx > period / 2 {
                return Err(Error::Selection(format!("index {idx} exceeds {}/2", period)));
            }
            if prev.is_some_and(|p| p >= idx) {
                return Err(Error::Selection("indices must be strictly increasing".into()));
            }
            prev = Some(idx);
        }
        Ok(FrequencySelection { period, indices })
    }

    /// All harmonics `0..=T/2`, excluding `T/2` for even `T` so that the
    /// regressor Gram stays a multiple of the identity over whole periods.
    pub fn full(period: usize) -> Result<Self> {
        let top = period / 2;
        let indices = if period % 2 == 0 && top > 0 { (0..top).collect() } else { (0..=top).collect() };
        FrequencySelection::new(period, indices)
    }

    /// All harmonics `0..=T/2` including the Nyquist index for even `T`:
    /// spans every representable period, at the price of orthogonality.
    pub fn spanning(period: usize) -> Result<Self> {
        FrequencySelection::new(period, (0..=period / 2).collect())
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn has_nyquist(&self) -> bool {
        self.period % 2 == 0 && self.contains(self.period / 2)
    }

    /// True when this is the orthogonality-safe full set (`T/2` excluded
    /// for even periods).
    pub fn is_full(&self) -> bool {
        FrequencySelection::full(self.period).map(|f| f == *self).unwrap_or(false)
    }

    /// Complement within the full harmonic range `0..=T/2`.
    pub fn complement(&self) -> Self {
        let indices = (0..=self.period / 2).filter(|i| !self.contains(*i)).collect();
        FrequencySelection { period: self.period, indices }
    }

    /// Generator state dimension: one channel for index 0, two per
    /// nonzero index.
    pub fn state_dim(&self) -> usize {
        self.indices.iter().map(|&i| if i == 0 { 1 } else { 2 }).sum()
    }
}

/// Virtual excitation generator over a frequency selection: rotation
/// matrix `S`, output matrix `U` (the sine/cosine coefficients) and the
/// initial state fixed by the phases.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSystem {
    selection: FrequencySelection,
    /// Phase per selected index (the entry for index 0 is unused).
    phases: Vec<f64>,
    /// m x s coefficient matrix; column layout matches the regressor.
    u_mat: DMatrix<f64>,
}

/// Builds the generator from per-harmonic coefficients: `a_coeffs` has one
/// column per selected nonzero index (sine channels), `b_coeffs` one column
/// per selected index including 0 (cosine/constant channels). Phases
/// default to zero when empty.
pub fn build_excitation(
    selection: FrequencySelection,
    a_coeffs: &DMatrix<f64>,
    b_coeffs: &DMatrix<f64>,
    phases: &[f64],
) -> Result<ExcitationSystem> {
    let q_all = selection.indices().len();
    let q_nonzero = selection.indices().iter().filter(|&&i| i != 0).count();
    if b_coeffs.ncols() != q_all || a_coeffs.ncols() != q_nonzero {
        return Err(Error::Dimension(format!(
            "expected {q_nonzero} sine and {q_all} cosine coefficient columns, got {} and {}",
            a_coeffs.ncols(),
            b_coeffs.ncols()
        )));
    }
    let m = b_coeffs.nrows();
    if q_nonzero > 0 && a_coeffs.nrows() != m {
        return Err(Error::Dimension("coefficient row counts differ".into()));
    }
    let phases = if phases.is_empty() {
        vec![0.0; q_all]
    } else if phases.len() == q_all {
        phases.to_vec()
    } else {
        return Err(Error::Dimension(format!("expected {q_all} phases, got {}", phases.len())));
    };

    let s = selection.state_dim();
    let mut u_mat = DMatrix::zeros(m, s);
    let mut col = 0;
    let mut a_col = 0;
    for (pos, &idx) in selection.indices().iter().enumerate() {
        if idx == 0 {
            u_mat.column_mut(col).copy_from(&b_coeffs.column(pos));
            col += 1;
        } else {
            u_mat.column_mut(col).copy_from(&a_coeffs.column(a_col));
            u_mat.column_mut(col + 1).copy_from(&b_coeffs.column(pos));
            a_col += 1;
            col += 2;
        }
    }
    Ok(ExcitationSystem { selection, phases, u_mat })
}

impl ExcitationSystem {
    pub fn selection(&self) -> &FrequencySelection {
        &self.selection
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// The m x s output/coefficient matrix.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.u_mat
    }

    pub fn inputs(&self) -> usize {
        self.u_mat.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.selection.state_dim()
    }

    /// Block-diagonal rotation matrix `S` (orthogonal).
    pub fn s_matrix(&self) -> DMatrix<f64> {
        regressor_transition(&self.selection)
    }

    /// Initial state `v_0`.
    pub fn initial_state(&self) -> DVector<f64> {
        self.regressor(0)
    }

    /// Regressor `v_k = S^k v_0`, evaluated in closed form. Arguments are
    /// reduced modulo `T` in integer arithmetic, so `v_{k+T}` equals `v_k`
    /// bit for bit.
    pub fn regressor(&self, k: usize) -> DVector<f64> {
        regressor_at(&self.selection, &self.phases, k)
    }

    /// `u_k = U v_k` for `k = 0..count-1`.
    pub fn generate_signal(&self, count: usize) -> Vec<DVector<f64>> {
        (0..count).map(|k| &self.u_mat * self.regressor(k)).collect()
    }

    /// One full period of the signal.
    pub fn one_period(&self) -> Vec<DVector<f64>> {
        self.generate_signal(self.selection.period())
    }
}

/// Closed-form regressor for a bare selection/phase pair.
pub fn regressor_at(selection: &FrequencySelection, phases: &[f64], k: usize) -> DVector<f64> {
    let t = selection.period();
    let omega = 2.0 * std::f64::consts::PI / t as f64;
    let mut v = DVector::zeros(selection.state_dim());
    let mut row = 0;
    for (pos, &idx) in selection.indices().iter().enumerate() {
        if idx == 0 {
            v[row] = std::f64::consts::FRAC_1_SQRT_2;
            row += 1;
        } else {
            let reduced = (idx as u64 * k as u64) % t as u64;
            let angle = omega * reduced as f64 + phases[pos];
            v[row] = angle.sin();
            v[row + 1] = angle.cos();
            row += 2;
        }
    }
    v
}

/// Rotation matrix advancing the regressor by one step.
pub fn regressor_transition(selection: &FrequencySelection) -> DMatrix<f64> {
    let t = selection.period();
    let omega = 2.0 * std::f64::consts::PI / t as f64;
    let s = selection.state_dim();
    let mut mat = DMatrix::zeros(s, s);
    let mut row = 0;
    for &idx in selection.indices() {
        if idx == 0 {
            mat[(row, row)] = 1.0;
            row += 1;
        } else {
            let (sin, cos) = (omega * idx as f64).sin_cos();
            mat[(row, row)] = cos;
            mat[(row, row + 1)] = sin;
            mat[(row + 1, row)] = -sin;
            mat[(row + 1, row + 1)] = cos;
            row += 2;
        }
    }
    mat
}

/// Fits the full-spectrum generator reproducing one signal period exactly,
/// through the DFT: `b_0 = sqrt(2) X[0] / T`, `a_r = -2 Im X[r] / T`,
/// `b_r = 2 Re X[r] / T` (halved at the Nyquist bin). Phases are zero.
pub fn fit_periodic(period_samples: &[DVector<f64>], period: usize) -> Result<ExcitationSystem> {
    if period_samples.len() != period || period == 0 {
        return Err(Error::Dimension(format!(
            "expected exactly {period} samples, got {}",
            period_samples.len()
        )));
    }
    let m = period_samples[0].len();
    if period_samples.iter().any(|v| v.len() != m) {
        return Err(Error::Dimension("signal vectors have inconsistent lengths".into()));
    }
    let selection = FrequencySelection::spanning(period)?;
    let q_all = selection.indices().len();
    let q_nonzero = q_all - 1;
    let mut a_coeffs = DMatrix::zeros(m, q_nonzero);
    let mut b_coeffs = DMatrix::zeros(m, q_all);
    let plan = fft::Fft::new(period)?;
    let tf = period as f64;
    for ch in 0..m {
        let mut buf: Vec<num_complex::Complex64> = period_samples
            .iter()
            .map(|v| num_complex::Complex64::new(v[ch], 0.0))
            .collect();
        plan.forward(&mut buf)?;
        b_coeffs[(ch, 0)] = std::f64::consts::SQRT_2 * buf[0].re / tf;
        for (pos, &idx) in selection.indices().iter().enumerate().skip(1) {
            if 2 * idx == period {
                b_coeffs[(ch, pos)] = buf[idx].re / tf;
            } else {
                a_coeffs[(ch, pos - 1)] = -2.0 * buf[idx].im / tf;
                b_coeffs[(ch, pos)] = 2.0 * buf[idx].re / tf;
            }
        }
    }
    build_excitation(selection, &a_coeffs, &b_coeffs, &[])
}

/// Gram matrix `sum_{k=0}^{kT-1} v_k v_k^T` by direct summation; the test
/// oracle for the closed-form orthogonality results.
pub fn gram_matrix(selection: &FrequencySelection, phases: &[f64], k_periods: usize) -> Result<DMatrix<f64>> {
    if k_periods == 0 {
        return Err(Error::InvalidArgument("k_periods must be positive".into()));
    }
    let phases = if phases.is_empty() {
        vec![0.0; selection.indices().len()]
    } else {
        phases.to_vec()
    };
    if phases.len() != selection.indices().len() {
        return Err(Error::Dimension("one phase per selected index required".into()));
    }
    let s = selection.state_dim();
    let mut gram = DMatrix::zeros(s, s);
    for k in 0..k_periods * selection.period() {
        let v = regressor_at(selection, &phases, k);
        // Symmetric rank-1 accumulation over the upper triangle.
        for i in 0..s {
            for j in i..s {
                gram[(i, j)] += v[i] * v[j];
            }
        }
    }
    for i in 0..s {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    Ok(gram)
}

/// Synthesizes one period of a linear chirp whose instantaneous angular
/// frequency moves from `theta_start` to `theta_end` (radians per sample)
/// across the period, then projects it onto the periodic generator.
pub fn chirp(period: usize, theta_start: f64, theta_end: f64, amplitude: f64) -> Result<ExcitationSystem> {
    if period == 0 {
        return Err(Error::InvalidArgument("period must be positive".into()));
    }
    let t = period as f64;
    let samples: Vec<DVector<f64>> = (0..period)
        .map(|k| {
            let kf = k as f64;
            let phase = theta_start * kf + (theta_end - theta_start) * kf * kf / (2.0 * t);
            DVector::from_element(1, amplitude * phase.sin())
        })
        .collect();
    fit_periodic(&samples, period)
}

/// Random periodic excitation: independent standard-normal sine/cosine
/// coefficients over the whole orthogonality-safe selection, scaled so the
/// per-channel RMS is close to `amplitude`.
pub fn random_periodic(period: usize, inputs: usize, amplitude: f64, seed: u64) -> Result<ExcitationSystem> {
    let selection = FrequencySelection::full(period)?;
    let q_all = selection.indices().len();
    let q_nonzero = selection.indices().iter().filter(|&&i| i != 0).count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = amplitude / (q_all as f64).sqrt();
    let a = DMatrix::from_fn(inputs, q_nonzero, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let b = DMatrix::from_fn(inputs, q_all, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    build_excitation(selection, &a, &b, &[])
}

/// Thins a fitted spectrum down to `q` indices for reduced-set
/// identification: keeps indices whose coefficient magnitude exceeds
/// `magnitude_fraction` of the peak, then picks `q` of them uniformly.
pub fn reduced_selection(
    system: &ExcitationSystem,
    q: usize,
    magnitude_fraction: f64,
) -> Result<FrequencySelection> {
    if q == 0 {
        return Err(Error::InvalidArgument("q must be positive".into()));
    }
    let sel = system.selection();
    let mut magnitudes: Vec<(usize, f64)> = Vec::new();
    let mut col = 0;
    for &idx in sel.indices() {
        let width = if idx == 0 { 1 } else { 2 };
        let mag = (0..width).map(|w| system.coefficients().column(col + w).norm_squared()).sum::<f64>().sqrt();
        // Never hand the Nyquist index to the identification stage.
        if !(sel.period() % 2 == 0 && 2 * idx == sel.period()) {
            magnitudes.push((idx, mag));
        }
        col += width;
    }
    let peak = magnitudes.iter().map(|&(_, m)| m).fold(0.0, f64::max);
    let candidates: Vec<usize> = magnitudes
        .iter()
        .filter(|&&(_, m)| m >= magnitude_fraction * peak)
        .map(|&(i, _)| i)
        .collect();
    if candidates.len() < q {
        return Err(Error::InsufficientExcitation(format!(
            "only {} indices above the magnitude threshold, need {q}",
            candidates.len()
        )));
    }
    let mut picked: Vec<usize> = (0..q)
        .map(|j| candidates[(j * (candidates.len() - 1)) / (q - 1).max(1)])
        .collect();
    picked.dedup();
    // De-duplication after rounding can leave fewer than q; fill from the
    // remaining candidates in order.
    for &c in &candidates {
        if picked.len() >= q {
            break;
        }
        if !picked.contains(&c) {
            picked.push(c);
        }
    }
    picked.sort_unstable();
    FrequencySelection::new(sel.period(), picked)
}

/// A generator restricted to a sub-selection of an existing system's
/// harmonics (coefficients are carried over).
pub fn restrict(system: &ExcitationSystem, selection: &FrequencySelection) -> Result<ExcitationSystem> {
    if selection.period() != system.selection().period() {
        return Err(Error::Dimension("periods differ".into()));
    }
    let m = system.inputs();
    let q_all = selection.indices().len();
    let q_nonzero = selection.indices().iter().filter(|&&i| i != 0).count();
    let mut a = DMatrix::zeros(m, q_nonzero);
    let mut b = DMatrix::zeros(m, q_all);
    let mut phases = Vec::with_capacity(q_all);
    let mut a_col = 0;
    for (pos_out, &idx) in selection.indices().iter().enumerate() {
        let (col, width, pos) = locate(system.selection(), idx)
            .ok_or_else(|| Error::Selection(format!("index {idx} not present in the source system")))?;
        if width == 1 {
            b.column_mut(pos_out).copy_from(&system.coefficients().column(col));
        } else {
            a.column_mut(a_col).copy_from(&system.coefficients().column(col));
            b.column_mut(pos_out).copy_from(&system.coefficients().column(col + 1));
            a_col += 1;
        }
        phases.push(system.phases()[pos]);
    }
    build_excitation(selection.clone(), &a, &b, &phases)
}

fn locate(selection: &FrequencySelection, index: usize) -> Option<(usize, usize, usize)> {
    let mut col = 0;
    for (pos, &idx) in selection.indices().iter().enumerate() {
        let width = if idx == 0 { 1 } else { 2 };
        if idx == index {
            return Some((col, width, pos));
        }
        col += width;
    }
    None
}
