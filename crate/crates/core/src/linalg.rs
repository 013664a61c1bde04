//! Small dense linear-algebra helpers shared across the pipeline.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Spectral radius of a square real matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Frobenius norm of the asymmetric part, `||A - A^T||_F`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).norm()
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    let mut ev = symmetrize(a).symmetric_eigenvalues();
    ev.as_mut_slice().sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Smallest eigenvalue of the symmetrized matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(a).min()
}

/// Projects a symmetric matrix onto the PSD cone by clipping negative
/// eigenvalues at zero. Returns the projection and the magnitude of the
/// largest clipped eigenvalue.
pub fn clip_psd(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = symmetrize(a);
    let eig = sym.symmetric_eigen();
    let mut clipped = 0.0f64;
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < 0.0 {
            clipped = clipped.max(-*v);
            *v = 0.0;
        }
    }
    let q = &eig.eigenvectors;
    let proj = q * DMatrix::from_diagonal(&vals) * q.transpose();
    (symmetrize(&proj), clipped)
}

/// Factor `L` of a PSD matrix with `L L^T = A`, via symmetric
/// eigendecomposition with small negative eigenvalues clipped at zero.
/// Fails when an eigenvalue is below `-tol * max(1, ||A||)`.
pub fn psd_factor(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let sym = symmetrize(a);
    let scale = sym.norm().max(1.0);
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -tol * scale {
            return Err(Error::Numerical(format!(
                "matrix is not positive semidefinite (eigenvalue {v:e})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals))
}

/// Numerical rank: number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Least-squares solution of `A x = b` through the SVD pseudo-inverse.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-13 * svd.singular_values.max().max(1.0))
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))
}

/// Complex least-squares solution of `A x = b`.
pub fn lstsq_complex(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-13 * svd.singular_values.max().max(1.0))
        .map_err(|e| Error::Numerical(format!("complex least squares failed: {e}")))
}

/// Column-stacking vectorization.
pub fn vec_of(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec_of`] for an `r x c` matrix.
pub fn unvec(v: &DVector<f64>, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(r, c, v.as_slice())
}

/// Duplication matrix mapping the lower-triangular stack (vech) of a
/// symmetric `n x n` matrix onto its full vectorization (vec).
pub fn duplication_matrix(n: usize) -> DMatrix<f64> {
    let cols = n * (n + 1) / 2;
    let mut d = DMatrix::zeros(n * n, cols);
    let mut col = 0;
    for j in 0..n {
        for i in j..n {
            d[(i + j * n, col)] = 1.0;
            if i != j {
                d[(j + i * n, col)] = 1.0;
            }
            col += 1;
        }
    }
    d
}

/// Rebuilds the symmetric matrix from its vech stack.
pub fn unvech(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            m[(i, j)] = v[idx];
            m[(j, i)] = v[idx];
            idx += 1;
        }
    }
    m
}

/// Real matrix promoted to complex entries.
pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian sample with
/// the R diagonal sign fixed).
pub fn random_orthogonal<R: rand::Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let qr = g.qr();
    let r_diag: Vec<f64> = (0..n).map(|i| qr.r()[(i, i)]).collect();
    let mut q = qr.q();
    for (j, d) in r_diag.iter().enumerate() {
        if *d < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}
