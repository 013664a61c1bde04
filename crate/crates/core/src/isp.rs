//! Estimation of the frequency-domain coefficient matrices `Y^i`, `U^i`
//! from time samples.
//!
//! Over whole periods the sinusoid regressors are orthogonal with Gram
//! `(kT/2) I`, so the least-squares solution collapses to a scaled
//! correlation which can be accumulated period by period (offline), sample
//! by sample (online), or through per-period FFTs when the full harmonic
//! set is wanted.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::{ExcitationSystem, FrequencySelection};
use crate::fft::Fft;
use crate::lti::SampleRecord;

/// Stacked coefficient estimate over a frequency selection: `y_coeffs` is
/// `p x s`, `u_coeffs` is `m x s`, columns in regressor order.
#[derive(Debug, Clone, PartialEq)]
pub struct IspResult {
    pub y_coeffs: DMatrix<f64>,
    pub u_coeffs: DMatrix<f64>,
    pub selection: FrequencySelection,
    pub samples_used: usize,
}

impl IspResult {
    pub fn state_dim(&self) -> usize {
        self.selection.state_dim()
    }

    /// Reconstructs the fitted periodic output/input pair at sample `k`.
    pub fn fitted(&self, system: &ExcitationSystem, k: usize) -> (nalgebra::DVector<f64>, nalgebra::DVector<f64>) {
        let v = system.regressor(k);
        (&self.y_coeffs * &v, &self.u_coeffs * &v)
    }
}

fn check_block(samples: &[SampleRecord], period: usize) -> Result<(usize, usize, usize)> {
    let n = samples.len();
    if n == 0 || n % period != 0 {
        return Err(Error::NotPeriodMultiple { n, period });
    }
    let p = samples[0].y_measured.len();
    let m = samples[0].u_measured.len();
    for rec in samples {
        if rec.y_measured.len() != p || rec.u_measured.len() != m {
            return Err(Error::Dimension("sample channel counts vary".into()));
        }
    }
    Ok((n, m, p))
}

fn reject_nyquist(selection: &FrequencySelection) -> Result<()> {
    if selection.has_nyquist() {
        return Err(Error::Selection(
            "index T/2 must be excluded for even periods; it breaks regressor orthogonality".into(),
        ));
    }
    Ok(())
}

/// Compensated accumulator for repeated matrix additions.
struct KahanMatrix {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl KahanMatrix {
    fn new(len: usize) -> Self {
        KahanMatrix { sum: vec![0.0; len], comp: vec![0.0; len] }
    }

    fn add(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.sum.len());
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(values.iter()) {
            let y = v - *c;
            let t = *s + y;
            *c = (t - *s) - y;
            *s = t;
        }
    }
}

/// Offline estimate by partitioned matrix multiplication:
/// `R = (2 / (kT)) * sum_k v_k [y_k^T u_k^T]`, accumulated one period at a
/// time with compensated summation across periods.
pub fn isp_offline_matmul(samples: &[SampleRecord], system: &ExcitationSystem) -> Result<IspResult> {
    let period = system.selection().period();
    reject_nyquist(system.selection())?;
    let (n, m, p) = check_block(samples, period)?;
    let s = system.state_dim();
    let cols = p + m;

    // The regressor is T-periodic, so one period of rows serves every block.
    let regressors: Vec<Vec<f64>> =
        (0..period).map(|k| system.regressor(k).as_slice().to_vec()).collect();

    let mut acc = KahanMatrix::new(s * cols);
    let mut block = vec![0.0; s * cols];
    for chunk in samples.chunks_exact(period) {
        block.iter_mut().for_each(|x| *x = 0.0);
        for (t, rec) in chunk.iter().enumerate() {
            let v = &regressors[t];
            for (i, &vi) in v.iter().enumerate() {
                let row = &mut block[i * cols..(i + 1) * cols];
                for (j, dst) in row.iter_mut().enumerate() {
                    let z = if j < p { rec.y_measured[j] } else { rec.u_measured[j - p] };
                    *dst += vi * z;
                }
            }
        }
        acc.add(&block);
    }

    let scale = 2.0 / n as f64;
    let mut y_coeffs = DMatrix::zeros(p, s);
    let mut u_coeffs = DMatrix::zeros(m, s);
    for i in 0..s {
        for j in 0..cols {
            let val = acc.sum[i * cols + j] * scale;
            if j < p {
                y_coeffs[(j, i)] = val;
            } else {
                u_coeffs[(j - p, i)] = val;
            }
        }
    }
    Ok(IspResult { y_coeffs, u_coeffs, selection: system.selection().clone(), samples_used: n })
}

/// Streaming estimator: feeds one sample at a time and emits a snapshot of
/// the running average at every period boundary.
pub struct OnlineIsp {
    system: ExcitationSystem,
    channels: Option<(usize, usize)>,
    period_acc: DMatrix<f64>,
    running: DMatrix<f64>,
    periods_done: usize,
    next_k: usize,
}

impl OnlineIsp {
    pub fn new(system: ExcitationSystem) -> Result<Self> {
        reject_nyquist(system.selection())?;
        let s = system.state_dim();
        Ok(OnlineIsp {
            system,
            channels: None,
            period_acc: DMatrix::zeros(s, 0),
            running: DMatrix::zeros(s, 0),
            periods_done: 0,
            next_k: 0,
        })
    }

    pub fn periods_done(&self) -> usize {
        self.periods_done
    }

    /// Accepts the next sample (indices must arrive in order) and returns
    /// an owned snapshot at period boundaries, nothing in between.
    pub fn push(&mut self, record: &SampleRecord) -> Result<Option<IspResult>> {
        if record.k != self.next_k {
            return Err(Error::OutOfOrder { expected: self.next_k, got: record.k });
        }
        let (p, m) = match self.channels {
            Some(pm) => pm,
            None => {
                let pm = (record.y_measured.len(), record.u_measured.len());
                let s = self.system.state_dim();
                self.period_acc = DMatrix::zeros(s, pm.0 + pm.1);
                self.running = DMatrix::zeros(s, pm.0 + pm.1);
                self.channels = Some(pm);
                pm
            }
        };
        if record.y_measured.len() != p || record.u_measured.len() != m {
            return Err(Error::Dimension("sample channel counts vary".into()));
        }
        let v = self.system.regressor(record.k);
        for i in 0..v.len() {
            for j in 0..p + m {
                let z = if j < p { record.y_measured[j] } else { record.u_measured[j - p] };
                self.period_acc[(i, j)] += v[i] * z;
            }
        }
        self.next_k += 1;
        let period = self.system.selection().period();
        if self.next_k % period != 0 {
            return Ok(None);
        }
        let t = self.periods_done as f64;
        let scaled = &self.period_acc * (2.0 / period as f64);
        self.running = (&self.running * t + scaled) / (t + 1.0);
        self.period_acc.fill(0.0);
        self.periods_done += 1;

        let s = self.system.state_dim();
        let mut y_coeffs = DMatrix::zeros(p, s);
        let mut u_coeffs = DMatrix::zeros(m, s);
        for i in 0..s {
            for j in 0..p {
                y_coeffs[(j, i)] = self.running[(i, j)];
            }
            for j in 0..m {
                u_coeffs[(j, i)] = self.running[(i, p + j)];
            }
        }
        Ok(Some(IspResult {
            y_coeffs,
            u_coeffs,
            selection: self.system.selection().clone(),
            samples_used: self.periods_done * period,
        }))
    }
}

/// Offline estimate over the full harmonic set via per-period column-wise
/// FFTs: sine rows come from the imaginary parts, cosine rows from the
/// real parts, the constant row from the scaled DC bin. The Nyquist bin is
/// dropped for even periods.
pub fn isp_offline_fft(samples: &[SampleRecord], period: usize) -> Result<IspResult> {
    if period == 0 {
        return Err(Error::InvalidArgument("period must be positive".into()));
    }
    let (n, m, p) = check_block(samples, period)?;
    let selection = FrequencySelection::full(period)?;
    let cols = p + m;
    let plan = Fft::new(period)?;

    // Averaged per-period spectra, one column per channel (y first).
    let mut acc = KahanMatrix::new(2 * period * cols);
    let mut spectra = vec![0.0; 2 * period * cols];
    let mut buf = vec![Complex64::new(0.0, 0.0); period];
    for chunk in samples.chunks_exact(period) {
        for j in 0..cols {
            for (t, rec) in chunk.iter().enumerate() {
                let z = if j < p { rec.y_measured[j] } else { rec.u_measured[j - p] };
                buf[t] = Complex64::new(z, 0.0);
            }
            plan.forward(&mut buf)?;
            for (r, v) in buf.iter().enumerate() {
                spectra[2 * (j * period + r)] = v.re;
                spectra[2 * (j * period + r) + 1] = v.im;
            }
        }
        acc.add(&spectra);
    }
    let scale = 1.0 / n as f64;
    let spectrum_at = |j: usize, r: usize| {
        Complex64::new(acc.sum[2 * (j * period + r)] * scale, acc.sum[2 * (j * period + r) + 1] * scale)
    };

    let s = selection.state_dim();
    let mut y_coeffs = DMatrix::zeros(p, s);
    let mut u_coeffs = DMatrix::zeros(m, s);
    for j in 0..cols {
        let mut row = 0;
        for &idx in selection.indices() {
            let w = spectrum_at(j, idx);
            if idx == 0 {
                let val = std::f64::consts::SQRT_2 * w.re;
                if j < p {
                    y_coeffs[(j, row)] = val;
                } else {
                    u_coeffs[(j - p, row)] = val;
                }
                row += 1;
            } else {
                let (a, b) = (-2.0 * w.im, 2.0 * w.re);
                if j < p {
                    y_coeffs[(j, row)] = a;
                    y_coeffs[(j, row + 1)] = b;
                } else {
                    u_coeffs[(j - p, row)] = a;
                    u_coeffs[(j - p, row + 1)] = b;
                }
                row += 2;
            }
        }
    }
    Ok(IspResult { y_coeffs, u_coeffs, selection, samples_used: n })
}

/// JSON-facing form of [`IspResult`] with row-major matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IspFile {
    pub period: usize,
    pub indices: Vec<usize>,
    pub y_coeffs: Vec<Vec<f64>>,
    pub u_coeffs: Vec<Vec<f64>>,
    pub samples_used: usize,
}

impl IspFile {
    pub fn from_result(result: &IspResult) -> Self {
        IspFile {
            period: result.selection.period(),
            indices: result.selection.indices().to_vec(),
            y_coeffs: crate::lti::matrix_to_rows(&result.y_coeffs),
            u_coeffs: crate::lti::matrix_to_rows(&result.u_coeffs),
            samples_used: result.samples_used,
        }
    }

    pub fn to_result(&self) -> Result<IspResult> {
        Ok(IspResult {
            y_coeffs: crate::lti::rows_to_matrix(&self.y_coeffs)?,
            u_coeffs: crate::lti::rows_to_matrix(&self.u_coeffs)?,
            selection: FrequencySelection::new(self.period, self.indices.clone())?,
            samples_used: self.samples_used,
        })
    }
}
