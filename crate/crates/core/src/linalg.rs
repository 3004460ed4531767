//! Small dense linear-algebra helpers bridging `ndarray` and `nalgebra`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn to_na(m: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

pub fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigen-decomposition of a symmetric matrix. Eigenvalues ascending, with
/// the matching eigenvectors as columns.
pub fn sym_eigh(m: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = m.nrows();
    let sym = (m + &m.t()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(to_na(&sym));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigvals(m: &Array2<f64>) -> Array1<f64> {
    sym_eigh(m).0
}

/// Haar-distributed rotation in SO(n): QR of a Gaussian matrix with the
/// signs of R's diagonal absorbed into Q, then one column flipped if needed
/// so the determinant is +1.
pub fn random_rotation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    if q.determinant() < 0.0 {
        for i in 0..n {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    from_na(&q)
}

/// Largest singular value squared of `w`, i.e. the spectral norm of `w^T w`.
pub fn spectral_norm_sq(w: &Array2<f64>) -> f64 {
    let wtw = w.t().dot(w);
    sym_eigvals(&wtw).iter().copied().fold(0.0, f64::max)
}

pub fn matrix_inverse(m: &Array2<f64>) -> Option<Array2<f64>> {
    to_na(m).try_inverse().map(|inv| from_na(&inv))
}

/// 2-norm condition number via singular values.
pub fn condition_number(m: &Array2<f64>) -> f64 {
    let sv = to_na(m).singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// Ordinary least-squares line fit `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (intercept, slope, r2)
}
