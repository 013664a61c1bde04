//! Discrete Fourier transform kernel for arbitrary lengths.
//!
//! Lengths whose prime factors are 2, 3 or 5 run through a recursive
//! mixed-radix decimation-in-time plan; all other lengths fall back to
//! Bluestein's chirp-z reduction onto a power-of-two convolution, so every
//! length is O(L log L). Twiddle arguments are reduced with integer
//! arithmetic before calling into libm, which keeps long transforms exact
//! enough for round-trip errors around 1e-12 relative.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn root_of_unity(num: u64, den: u64) -> Complex64 {
    // e^{-2 pi i num / den} with num already reduced mod den.
    let angle = -2.0 * PI * (num as f64) / (den as f64);
    Complex64::new(angle.cos(), angle.sin())
}

struct Level {
    radix: usize,
    sub_len: usize,
    /// `w_n^{k1*q}` for `k1 in 0..sub_len`, `q in 1..radix`, row-major in `k1`.
    twiddles: Vec<Complex64>,
    /// `radix x radix` DFT matrix, row-major in `q`.
    small_dft: Vec<Complex64>,
}

enum Kind {
    MixedRadix { levels: Vec<Level> },
    Bluestein {
        chirp: Vec<Complex64>,
        kernel_fft: Vec<Complex64>,
        inner: Box<Fft>,
    },
}

/// A reusable transform plan for one length.
pub struct Fft {
    len: usize,
    kind: Kind,
}

fn factorize_smooth(mut n: usize) -> Option<Vec<usize>> {
    let mut factors = Vec::new();
    while n % 4 == 0 {
        factors.push(4);
        n /= 4;
    }
    while n % 2 == 0 {
        factors.push(2);
        n /= 2;
    }
    while n % 3 == 0 {
        factors.push(3);
        n /= 3;
    }
    while n % 5 == 0 {
        factors.push(5);
        n /= 5;
    }
    (n == 1).then_some(factors)
}

impl Fft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument("transform length must be positive".into()));
        }
        if let Some(factors) = factorize_smooth(len) {
            let mut levels = Vec::with_capacity(factors.len());
            let mut n = len;
            for &p in &factors {
                let m = n / p;
                let mut twiddles = Vec::with_capacity(m * (p - 1));
                for k1 in 0..m {
                    for q in 1..p {
                        twiddles.push(root_of_unity(((k1 * q) % n) as u64, n as u64));
                    }
                }
                let mut small_dft = Vec::with_capacity(p * p);
                for q in 0..p {
                    for k2 in 0..p {
                        small_dft.push(root_of_unity(((q * k2) % p) as u64, p as u64));
                    }
                }
                levels.push(Level { radix: p, sub_len: m, twiddles, small_dft });
                n = m;
            }
            Ok(Fft { len, kind: Kind::MixedRadix { levels } })
        } else {
            // Chirp-z: X[k] = w_k * sum_j (x_j w_j) conj(w)_{k-j},
            // w_j = e^{-i pi j^2 / len}, convolved cyclically at a
            // power-of-two length >= 2*len - 1.
            let m = (2 * len - 1).next_power_of_two();
            let inner = Fft::new(m)?;
            let two_len = 2 * len as u64;
            let chirp: Vec<Complex64> = (0..len)
                .map(|j| {
                    let j = j as u64;
                    root_of_unity((j * j) % two_len, two_len)
                })
                .collect();
            let mut kernel = vec![ZERO; m];
            kernel[0] = chirp[0].conj();
            for j in 1..len {
                kernel[j] = chirp[j].conj();
                kernel[m - j] = chirp[j].conj();
            }
            inner.forward(&mut kernel)?;
            Ok(Fft {
                len,
                kind: Kind::Bluestein { chirp, kernel_fft: kernel, inner: Box::new(inner) },
            })
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform, `X[r] = sum_k x[k] e^{-2 pi i r k / L}`.
    pub fn forward(&self, data: &mut [Complex64]) -> Result<()> {
        if data.len() != self.len {
            return Err(Error::Dimension(format!(
                "buffer length {} does not match plan length {}",
                data.len(),
                self.len
            )));
        }
        match &self.kind {
            Kind::MixedRadix { levels } => {
                let mut scratch = vec![ZERO; self.len];
                recurse(data, 0, 1, &mut scratch, levels, 0);
                data.copy_from_slice(&scratch);
                Ok(())
            }
            Kind::Bluestein { chirp, kernel_fft, inner } => {
                let m = inner.len();
                let mut buf = vec![ZERO; m];
                for (j, b) in buf.iter_mut().enumerate().take(self.len) {
                    *b = data[j] * chirp[j];
                }
                inner.forward(&mut buf)?;
                for (b, k) in buf.iter_mut().zip(kernel_fft.iter()) {
                    *b *= k;
                }
                inner.inverse(&mut buf)?;
                for (k, d) in data.iter_mut().enumerate() {
                    *d = buf[k] * chirp[k];
                }
                Ok(())
            }
        }
    }

    /// In-place inverse transform with the 1/L normalization.
    pub fn inverse(&self, data: &mut [Complex64]) -> Result<()> {
        for v in data.iter_mut() {
            *v = v.conj();
        }
        self.forward(data)?;
        let scale = 1.0 / self.len as f64;
        for v in data.iter_mut() {
            *v = v.conj() * scale;
        }
        Ok(())
    }
}

/// Reads `src` at `offset` with the given stride and writes the
/// sub-transform for the remaining levels into `dst` (contiguous).
fn recurse(
    src: &[Complex64],
    offset: usize,
    stride: usize,
    dst: &mut [Complex64],
    levels: &[Level],
    depth: usize,
) {
    if depth == levels.len() {
        dst[0] = src[offset];
        return;
    }
    let level = &levels[depth];
    let p = level.radix;
    let m = level.sub_len;
    for q in 0..p {
        recurse(src, offset + q * stride, stride * p, &mut dst[q * m..(q + 1) * m], levels, depth + 1);
    }
    let mut t = [ZERO; 5];
    for k1 in 0..m {
        t[0] = dst[k1];
        let tw = &level.twiddles[k1 * (p - 1)..k1 * (p - 1) + (p - 1)];
        for q in 1..p {
            t[q] = dst[q * m + k1] * tw[q - 1];
        }
        match p {
            2 => {
                dst[k1] = t[0] + t[1];
                dst[m + k1] = t[0] - t[1];
            }
            3 => {
                const SIN3: f64 = 0.866_025_403_784_438_6;
                let s = t[1] + t[2];
                let d = (t[1] - t[2]) * Complex64::new(0.0, -SIN3);
                dst[k1] = t[0] + s;
                dst[m + k1] = t[0] - s * 0.5 + d;
                dst[2 * m + k1] = t[0] - s * 0.5 - d;
            }
            4 => {
                let s02 = t[0] + t[2];
                let d02 = t[0] - t[2];
                let s13 = t[1] + t[3];
                let d13 = (t[1] - t[3]) * Complex64::new(0.0, -1.0);
                dst[k1] = s02 + s13;
                dst[m + k1] = d02 + d13;
                dst[2 * m + k1] = s02 - s13;
                dst[3 * m + k1] = d02 - d13;
            }
            _ => {
                for k2 in 0..p {
                    let mut acc = t[0];
                    for q in 1..p {
                        acc += t[q] * level.small_dft[q * p + k2];
                    }
                    dst[k2 * m + k1] = acc;
                }
            }
        }
    }
}

/// One-shot forward DFT of a complex sequence.
pub fn dft_forward(signal: &[Complex64]) -> Result<Vec<Complex64>> {
    let plan = Fft::new(signal.len())?;
    let mut data = signal.to_vec();
    plan.forward(&mut data)?;
    Ok(data)
}

/// One-shot inverse DFT (normalized by 1/L).
pub fn dft_inverse(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    let plan = Fft::new(spectrum.len())?;
    let mut data = spectrum.to_vec();
    plan.inverse(&mut data)?;
    Ok(data)
}

/// Forward DFT of a real sequence.
pub fn dft_forward_real(signal: &[f64]) -> Result<Vec<Complex64>> {
    let data: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    dft_forward(&data)
}

#[cfg(test)]
pub(crate) fn dft_direct(signal: &[Complex64]) -> Vec<Complex64> {
    let n = signal.len();
    (0..n)
        .map(|r| {
            let mut acc = ZERO;
            for (k, &x) in signal.iter().enumerate() {
                acc += x * root_of_unity(((r * k) % n) as u64, n as u64);
            }
            acc
        })
        .collect()
}
