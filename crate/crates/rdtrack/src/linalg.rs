//! Small dense linear-algebra helpers: balanced eigenvalues, condition
//! estimates, and numerical rank.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix};

/// Diagonal similarity scaling that equalizes row and column norms
/// (powers of two, so the spectrum is unchanged up to rounding).
pub fn balance(a: &DMatrix<f64>) -> DMatrix<f64> {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let mut b = a.clone();
    for _ in 0..100 {
        let mut done = true;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| b[(j, i)].abs()).sum();
            let r: f64 = (0..n).filter(|&j| j != i).map(|j| b[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / RADIX {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            while c > r * RADIX {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
    b
}

/// Eigenvalues of a general real matrix, computed on its balanced form by a
/// Schur decomposition with a bounded iteration count. The deflation
/// tolerance is relaxed step by step if the iteration stalls.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let b = balance(a);
    let mut eps = 4.0 * f64::EPSILON;
    loop {
        if let Some(schur) = Schur::try_new(b.clone(), eps, 1000 * n) {
            return schur.complex_eigenvalues().iter().cloned().collect();
        }
        eps *= 10.0;
        assert!(eps < 1e-6, "Schur iteration failed to converge");
    }
}

/// Smallest eigenvalue modulus.
pub fn min_abs_eigenvalue(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min)
}

/// Singular values in decreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Smallest singular value.
pub fn min_singular_value(a: &DMatrix<f64>) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// Number of singular values at most `rel_tol · σ_max`.
pub fn nullity(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    let smax = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&v| v <= rel_tol * smax).count()
}

/// Maximum absolute row sum.
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute column sum.
pub fn norm_1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
