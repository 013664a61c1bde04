//! Subspace identification of the order and the `(A, B, C, D)` quadruple
//! from estimated frequency-domain coefficients.
//!
//! `A`, `C` and the order come out of a QR/SVD factorization of the
//! coefficient matrices stacked under powers of the regressor rotation;
//! `B`, `D` from a complex least-squares fit of the per-frequency transfer
//! relation `y = G(e^{j w k}) u`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::{regressor_transition, FrequencySelection};
use crate::isp::IspResult;
use crate::linalg;
use crate::lti::StateSpaceModel;

/// How the order is picked from the singular-value profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderSelectionPolicy {
    /// Use exactly this order.
    Fixed(usize),
    /// Keep singular values above `ratio * sigma_1` (ratio in (0, 1)).
    Tolerance(f64),
}

impl OrderSelectionPolicy {
    pub fn tolerance(ratio: f64) -> Result<Self> {
        if !(0.0 < ratio && ratio < 1.0) {
            return Err(Error::InvalidArgument("tolerance ratio must lie in (0, 1)".into()));
        }
        Ok(OrderSelectionPolicy::Tolerance(ratio))
    }
}

/// `A`, `C` and order estimate together with the singular-value profile
/// the order was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct AcnEstimate {
    pub a_hat: DMatrix<f64>,
    pub c_hat: DMatrix<f64>,
    pub order: usize,
    pub singular_values: Vec<f64>,
}

/// Full identification output.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedSystem {
    pub model: StateSpaceModel,
    pub singular_values: Vec<f64>,
    pub order: usize,
}

fn select_order(sv: &[f64], scale: f64, policy: &OrderSelectionPolicy) -> usize {
    // Absolute floor: below this the residual subspace is numerical noise
    // (e.g. a purely static system) and the order is zero.
    let floor = 1e-12 * scale.max(f64::MIN_POSITIVE);
    match *policy {
        OrderSelectionPolicy::Fixed(n) => n.min(sv.len()),
        OrderSelectionPolicy::Tolerance(ratio) => {
            let sigma1 = sv.first().copied().unwrap_or(0.0);
            if sigma1 <= floor {
                return 0;
            }
            sv.iter().filter(|&&s| s > ratio * sigma1 && s > floor).count()
        }
    }
}

/// Estimates `A`, `C` and the order from the stacked coefficient matrices.
///
/// Builds `[Y; Y S; ...; Y S^{nbar-1}]` and the same stack for `U`, takes
/// the QR of `[U_stack^T, Y_stack^T]`, and reads the observability-range
/// basis from the SVD of the trailing `R22` block. The SVD sign convention
/// is fixed (largest-magnitude entry of each left singular vector positive)
/// so results are reproducible.
pub fn estimate_acn(isp: &IspResult, n_bar: usize, policy: &OrderSelectionPolicy) -> Result<AcnEstimate> {
    if n_bar == 0 {
        return Err(Error::InvalidArgument("n_bar must be positive".into()));
    }
    let s = isp.state_dim();
    let p = isp.y_coeffs.nrows();
    let m = isp.u_coeffs.nrows();
    if s < n_bar * (m + p) {
        return Err(Error::InvalidArgument(format!(
            "selection supplies {s} regressor channels but the stacked blocks need at least {}; \
             use more frequencies or a smaller n_bar",
            n_bar * (m + p)
        )));
    }
    let rot = regressor_transition(&isp.selection);
    let mut stacked = DMatrix::zeros(s, n_bar * (m + p));
    let mut u_block = isp.u_coeffs.clone();
    let mut y_block = isp.y_coeffs.clone();
    for j in 0..n_bar {
        stacked.view_mut((0, j * m), (s, m)).copy_from(&u_block.transpose());
        stacked.view_mut((0, n_bar * m + j * p), (s, p)).copy_from(&y_block.transpose());
        if j + 1 < n_bar {
            u_block = &u_block * &rot;
            y_block = &y_block * &rot;
        }
    }
    let scale = stacked.norm();

    let qr = stacked.qr();
    let r = qr.r();
    let r22 = r.view((n_bar * m, n_bar * m), (n_bar * p, n_bar * p)).into_owned();

    let svd = r22.transpose().svd(true, false);
    let mut w = svd.u.ok_or_else(|| Error::Numerical("SVD did not produce U".into()))?;
    let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    for j in 0..w.ncols() {
        let mut best = (0usize, 0.0f64);
        for i in 0..w.nrows() {
            if w[(i, j)].abs() > best.1 {
                best = (i, w[(i, j)].abs());
            }
        }
        if w[(best.0, j)] < 0.0 {
            for i in 0..w.nrows() {
                w[(i, j)] = -w[(i, j)];
            }
        }
    }

    let order = select_order(&singular_values, scale, policy);
    if order == 0 {
        return Ok(AcnEstimate {
            a_hat: DMatrix::zeros(0, 0),
            c_hat: DMatrix::zeros(p, 0),
            order: 0,
            singular_values,
        });
    }
    if p * (n_bar - 1) < order {
        return Err(Error::InvalidArgument(format!(
            "shift-invariance needs p*(n_bar-1) >= order ({} < {order}); increase n_bar",
            p * (n_bar - 1)
        )));
    }

    let mut observability = DMatrix::zeros(n_bar * p, order);
    for j in 0..order {
        let root = singular_values[j].sqrt();
        for i in 0..n_bar * p {
            observability[(i, j)] = w[(i, j)] * root;
        }
    }
    let c_hat = observability.rows(0, p).into_owned();
    let o_minus = observability.rows(0, p * (n_bar - 1)).into_owned();
    let o_plus = observability.rows(p, p * (n_bar - 1)).into_owned();

    let sv = o_minus.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= 0.0 || smax / smin > 1e12 {
        return Err(Error::InsufficientExcitation(format!(
            "shift-invariance solve is rank deficient (condition {:.3e})",
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        )));
    }
    let a_hat = linalg::lstsq(&o_minus, &o_plus)?;
    Ok(AcnEstimate { a_hat, c_hat, order, singular_values })
}

/// Complex coefficient columns of the selection in regressor order:
/// one entry per selected index; nonzero indices map the (sin, cos)
/// coefficient pair to `b - j a` (the `e^{+j w r}` side).
fn complex_columns(coeffs: &DMatrix<f64>, selection: &FrequencySelection) -> Vec<DVector<Complex64>> {
    let mut out = Vec::with_capacity(selection.indices().len());
    let mut col = 0;
    for &idx in selection.indices() {
        if idx == 0 {
            out.push(coeffs.column(col).map(|x| Complex64::new(x, 0.0)));
            col += 1;
        } else {
            let a = coeffs.column(col);
            let b = coeffs.column(col + 1);
            out.push(DVector::from_fn(coeffs.nrows(), |i, _| Complex64::new(b[i], -a[i])));
            col += 2;
        }
    }
    out
}

/// Estimates `B` and `D` given `A`, `C` by stacking the per-frequency
/// relations `y_r = [u_r^T (x) C (z_r I - A)^{-1}, u_r^T (x) I_p] [vec B; vec D]`
/// over the selection (both conjugate sides of every pair, so the solution
/// is real up to rounding). Frequencies colliding with eigenvalues of `A`
/// are skipped with a warning.
pub fn estimate_bd(
    isp: &IspResult,
    a_hat: &DMatrix<f64>,
    c_hat: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_hat.nrows();
    let p = c_hat.nrows();
    let m = isp.u_coeffs.nrows();
    if a_hat.ncols() != n || (n > 0 && c_hat.ncols() != n) || isp.y_coeffs.nrows() != p {
        return Err(Error::Dimension("A/C/coefficient dimensions are inconsistent".into()));
    }
    let period = isp.selection.period();
    let omega = 2.0 * std::f64::consts::PI / period as f64;
    let eigs = if n > 0 { a_hat.complex_eigenvalues() } else { DVector::zeros(0) };

    let y_cols = complex_columns(&isp.y_coeffs, &isp.selection);
    let u_cols = complex_columns(&isp.u_coeffs, &isp.selection);

    let unknowns = m * n + m * p;
    let mut rows: Vec<(DMatrix<Complex64>, DVector<Complex64>)> = Vec::new();
    let mut skipped = 0usize;
    let a_c = linalg::to_complex(a_hat);
    let c_c = linalg::to_complex(c_hat);

    for (pos, &idx) in isp.selection.indices().iter().enumerate() {
        let signs: &[f64] = if idx == 0 { &[1.0] } else { &[1.0, -1.0] };
        for &sign in signs {
            let theta = sign * omega * idx as f64;
            let z = Complex64::new(theta.cos(), theta.sin());
            if eigs.iter().any(|l| (l - z).norm() < 1e-9) {
                skipped += 1;
                continue;
            }
            let (u_c, y_c) = if sign >= 0.0 {
                (u_cols[pos].clone(), y_cols[pos].clone())
            } else {
                (u_cols[pos].map(|v| v.conj()), y_cols[pos].map(|v| v.conj()))
            };
            let u_row = u_c.transpose();
            let mut block = DMatrix::zeros(p, unknowns);
            if n > 0 {
                let resolvent = (DMatrix::from_diagonal_element(n, n, z) - &a_c)
                    .lu()
                    .solve(&DMatrix::identity(n, n))
                    .ok_or_else(|| Error::Numerical("resolvent solve failed".into()))?;
                let g1 = &c_c * resolvent;
                block.view_mut((0, 0), (p, m * n)).copy_from(&u_row.kronecker(&g1));
            }
            block
                .view_mut((0, m * n), (p, m * p))
                .copy_from(&u_row.kronecker(&DMatrix::identity(p, p).map(|x| Complex64::new(x, 0.0))));
            rows.push((block, y_c));
        }
    }
    if skipped > 0 {
        log::warn!("estimate_bd: skipped {skipped} frequencies colliding with eigenvalues of A");
    }
    if rows.is_empty() {
        return Err(Error::InsufficientExcitation("no usable frequencies".into()));
    }

    let total_rows: usize = rows.iter().map(|(b, _)| b.nrows()).sum();
    let mut regressor = DMatrix::zeros(total_rows, unknowns);
    let mut rhs = DVector::zeros(total_rows);
    let mut at = 0;
    for (block, y) in rows {
        regressor.view_mut((at, 0), (block.nrows(), unknowns)).copy_from(&block);
        rhs.view_mut((at, 0), (y.len(), 1)).copy_from(&y);
        at += block.nrows();
    }

    let sv = regressor.clone().singular_values();
    let rank = sv.iter().filter(|&&x| x > 1e-10 * sv.max()).count();
    if rank < unknowns {
        return Err(Error::InsufficientExcitation(format!(
            "B/D regressor rank {rank} < {unknowns}; the excitation does not satisfy the rank condition"
        )));
    }
    let sol = linalg::lstsq_complex(&regressor, &DMatrix::from_column_slice(total_rows, 1, rhs.as_slice()))?;
    let imag_norm: f64 = sol.iter().map(|v| v.im * v.im).sum::<f64>().sqrt();
    let real_norm: f64 = sol.iter().map(|v| v.re * v.re).sum::<f64>().sqrt();
    if imag_norm > 1e-6 * real_norm.max(1e-300) {
        log::warn!("estimate_bd: imaginary residual {:.3e} relative", imag_norm / real_norm);
    }
    let b_hat = DMatrix::from_fn(n, m, |i, j| sol[(j * n + i, 0)].re);
    let d_hat = DMatrix::from_fn(p, m, |i, j| sol[(m * n + j * p + i, 0)].re);
    Ok((b_hat, d_hat))
}

/// Runs both estimation stages and assembles the identified model.
pub fn identify(isp: &IspResult, n_bar: usize, policy: &OrderSelectionPolicy) -> Result<IdentifiedSystem> {
    let acn = estimate_acn(isp, n_bar, policy)?;
    let (b_hat, d_hat) = estimate_bd(isp, &acn.a_hat, &acn.c_hat)?;
    let model = StateSpaceModel::new(acn.a_hat, b_hat, acn.c_hat, d_hat)?;
    Ok(IdentifiedSystem { model, singular_values: acn.singular_values, order: acn.order })
}

/// Rank report for the persistent-excitation condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeReport {
    pub rank: usize,
    pub required: usize,
    pub pass: bool,
}

/// Checks `rank(U^i (.) V) = m (n + n_bar)` where `V` stacks powers of
/// `e^{j w k_r}` over the selected frequencies and `(.)` is the columnwise
/// Khatri-Rao product.
pub fn pe_check(u_coeffs: &DMatrix<f64>, selection: &FrequencySelection, n: usize, n_bar: usize) -> PeReport {
    let m = u_coeffs.nrows();
    let depth = n + n_bar;
    let required = m * depth;
    let u_cols = complex_columns(u_coeffs, selection);
    let omega = 2.0 * std::f64::consts::PI / selection.period() as f64;
    let q = u_cols.len();
    let mut kr = DMatrix::zeros(m * depth, q);
    for (r, (&idx, u)) in selection.indices().iter().zip(u_cols.iter()).enumerate() {
        let z = Complex64::new((omega * idx as f64).cos(), (omega * idx as f64).sin());
        let mut zi = Complex64::new(1.0, 0.0);
        for i in 0..depth {
            for row in 0..m {
                kr[(i * m + row, r)] = u[row] * zi;
            }
            zi *= z;
        }
    }
    let rank = if q == 0 {
        0
    } else {
        let sv = kr.singular_values();
        let smax = sv.max();
        if smax <= 0.0 { 0 } else { sv.iter().filter(|&&x| x > 1e-10 * smax).count() }
    };
    PeReport { rank, required, pass: rank == required }
}

/// JSON-facing form of [`IdentifiedSystem`] with row-major matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifiedFile {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub order: usize,
    pub singular_values: Vec<f64>,
}

impl IdentifiedFile {
    pub fn from_system(sys: &IdentifiedSystem) -> Self {
        IdentifiedFile {
            a: crate::lti::matrix_to_rows(&sys.model.a),
            b: crate::lti::matrix_to_rows(&sys.model.b),
            c: crate::lti::matrix_to_rows(&sys.model.c),
            d: crate::lti::matrix_to_rows(&sys.model.d),
            order: sys.order,
            singular_values: sys.singular_values.clone(),
        }
    }
}
