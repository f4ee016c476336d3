//! The Blahut–Arimoto operator, its fixed-point iteration, rate and
//! distortion functionals, and its Jacobians in marginal and encoder
//! coordinates.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::problem::{embed, reduce, Encoder, Marginal, RdProblem, SupportSet};

/// Default fixed-point stopping tolerance in L∞.
pub const DEFAULT_BA_TOL: f64 = 1e-8;
/// Default iteration cap.
pub const DEFAULT_BA_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaError {
    #[error("marginal has no positive entry")]
    ZeroMarginal,
    #[error("marginal length {got} does not match reproduction alphabet size {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("marginal entry {index} is {value}; reduce the problem to the support first")]
    NotFullSupport { index: usize, value: f64 },
    #[error("tolerance must be positive")]
    BadTolerance,
}

/// Result of iterating the operator to a fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub marginal: Marginal,
    pub encoder: Encoder,
    pub iterations: usize,
    /// L∞ distance between the last two iterates.
    pub residual: f64,
    pub converged: bool,
}

/// Expected distortion and mutual information (nats) of an encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdValues {
    pub distortion: f64,
    pub rate: f64,
}

/// A point on a rate-distortion curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub beta: f64,
    pub distortion: f64,
    /// Mutual information in nats.
    pub rate: f64,
}

fn check_len(problem: &RdProblem, r: &[f64]) -> Result<(), BaError> {
    if r.len() != problem.m() {
        return Err(BaError::LengthMismatch { got: r.len(), expected: problem.m() });
    }
    Ok(())
}

/// Unnormalized encoder weights `r(x̂)e^{−β(d(x,x̂) − d_min(x))}` and their
/// column sums, where `d_min(x)` runs over letters with `r ≠ 0`.
fn encoder_weights(problem: &RdProblem, r: &[f64], beta: f64) -> Result<(DMatrix<f64>, Vec<f64>), BaError> {
    check_len(problem, r)?;
    let (n, m) = (problem.n(), problem.m());
    if !r.iter().any(|&v| v > 0.0) {
        return Err(BaError::ZeroMarginal);
    }
    let mut w = DMatrix::zeros(m, n);
    let mut z = vec![0.0; n];
    for x in 0..n {
        let dmin = (0..m)
            .filter(|&j| r[j] != 0.0)
            .map(|j| problem.d(x, j))
            .fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        for j in 0..m {
            if r[j] != 0.0 {
                let v = r[j] * (-beta * (problem.d(x, j) - dmin)).exp();
                w[(j, x)] = v;
                sum += v;
            }
        }
        z[x] = sum;
    }
    Ok((w, z))
}

/// `q(x̂|x) = r(x̂)e^{−βd(x,x̂)} / Z(x)` as an `M × N` matrix. The marginal
/// need not be normalized.
pub fn encoder_matrix(problem: &RdProblem, r: &[f64], beta: f64) -> Result<DMatrix<f64>, BaError> {
    let (mut w, z) = encoder_weights(problem, r, beta)?;
    for x in 0..problem.n() {
        let inv = 1.0 / z[x];
        w.column_mut(x).scale_mut(inv);
    }
    Ok(w)
}

/// The encoder induced by a marginal.
pub fn encoder_from_marginal(problem: &RdProblem, r: &Marginal, beta: f64) -> Result<Encoder, BaError> {
    Ok(Encoder { channel: encoder_matrix(problem, &r.weights, beta)? })
}

/// `s(x̂) = Σ_x p(x) q(x̂|x)`.
pub fn marginal_vector(problem: &RdProblem, q: &DMatrix<f64>) -> Vec<f64> {
    let p = problem.source();
    (0..q.nrows()).map(|j| (0..q.ncols()).map(|x| p[x] * q[(j, x)]).sum()).collect()
}

/// The marginal induced by an encoder.
pub fn marginal_from_encoder(problem: &RdProblem, q: &Encoder) -> Marginal {
    Marginal { weights: marginal_vector(problem, &q.channel), normalized: true }
}

/// One operator step on a raw vector.
pub fn ba_step_vec(problem: &RdProblem, r: &[f64], beta: f64) -> Result<Vec<f64>, BaError> {
    let q = encoder_matrix(problem, r, beta)?;
    Ok(marginal_vector(problem, &q))
}

/// One operator step `r ↦ BA_β[r]`.
pub fn ba_step(problem: &RdProblem, r: &Marginal, beta: f64) -> Result<Marginal, BaError> {
    Ok(Marginal { weights: ba_step_vec(problem, &r.weights, beta)?, normalized: true })
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterates the operator from `r0` until consecutive iterates differ by at
/// most `tol` in L∞, or `max_iter` steps have been taken.
pub fn ba_fixed_point(
    problem: &RdProblem,
    r0: &Marginal,
    beta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult, BaError> {
    if !(tol > 0.0) {
        return Err(BaError::BadTolerance);
    }
    let mut r = r0.weights.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let next = ba_step_vec(problem, &r, beta)?;
        residual = linf(&next, &r);
        r = next;
        iterations += 1;
        if residual <= tol {
            converged = true;
            break;
        }
    }
    let channel = encoder_matrix(problem, &r, beta)?;
    Ok(FixedPointResult {
        marginal: Marginal { weights: r, normalized: true },
        encoder: Encoder { channel },
        iterations,
        residual,
        converged,
    })
}

/// Expected distortion and mutual information (nats, `0 log 0 = 0`).
pub fn rd_functionals(problem: &RdProblem, q: &Encoder) -> RdValues {
    let p = problem.source();
    let s = marginal_vector(problem, &q.channel);
    let mut distortion = 0.0;
    let mut rate = 0.0;
    for x in 0..problem.n() {
        for j in 0..problem.m() {
            let qq = q.q(j, x);
            if qq > 0.0 {
                distortion += p[x] * qq * problem.d(x, j);
                rate += p[x] * qq * (qq / s[j]).ln();
            }
        }
    }
    RdValues { distortion, rate: rate.max(0.0) }
}

/// `I(X; X̂) + βE[d]` of an encoder.
pub fn lagrangian(problem: &RdProblem, q: &Encoder, beta: f64) -> f64 {
    let v = rd_functionals(problem, q);
    v.rate + beta * v.distortion
}

/// `c(x̂) = Σ_x p(x) e^{−βd(x,x̂)} / Z(x)`, with `Z` taken over the support
/// of `r`. Equals 1 on the support at a fixed point; a letter off the
/// support may join an optimal solution only where `c(x̂) ≥ 1`.
pub fn support_ratios(problem: &RdProblem, r: &[f64], beta: f64) -> Result<Vec<f64>, BaError> {
    check_len(problem, r)?;
    let (n, m) = (problem.n(), problem.m());
    if !r.iter().any(|&v| v > 0.0) {
        return Err(BaError::ZeroMarginal);
    }
    let p = problem.source();
    let mut c = vec![0.0; m];
    for x in 0..n {
        let dmin = (0..m)
            .filter(|&j| r[j] != 0.0)
            .map(|j| problem.d(x, j))
            .fold(f64::INFINITY, f64::min);
        let z: f64 = (0..m)
            .filter(|&j| r[j] != 0.0)
            .map(|j| r[j] * (-beta * (problem.d(x, j) - dmin)).exp())
            .sum();
        for j in 0..m {
            c[j] += p[x] * (-beta * (problem.d(x, j) - dmin)).exp() / z;
        }
    }
    Ok(c)
}

/// `D_r(Id − BA_β)` at a marginal with every entry positive:
/// entry `(i, j)` is `Σ_x p(x) q(j|x) q(i|x) / r(j) + δ_ij (r(j) − BA[r](j)) / r(j)`.
pub fn jacobian_marginal(problem: &RdProblem, r: &[f64], beta: f64) -> Result<DMatrix<f64>, BaError> {
    check_len(problem, r)?;
    if let Some((index, &value)) = r.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(BaError::NotFullSupport { index, value });
    }
    let q = encoder_matrix(problem, r, beta)?;
    let ba = marginal_vector(problem, &q);
    let p = problem.source();
    let m = problem.m();
    let mut jac = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let a: f64 = (0..problem.n()).map(|x| p[x] * q[(j, x)] * q[(i, x)]).sum();
            jac[(i, j)] = a / r[j];
        }
        jac[(i, i)] += (r[i] - ba[i]) / r[i];
    }
    Ok(jac)
}

/// Row/column index of the pair `(x̂, x)` in encoder-coordinate matrices
/// (x̂-major).
pub fn encoder_index(xhat: usize, x: usize, n: usize) -> usize {
    xhat * n + x
}

/// `D_q BA_β` in encoder coordinates, `MN × MN`, x̂-major:
/// entry `((x̂,x),(x̂′,x′))` is
/// `e^{−βd(x,x̂′)} / Σ_{x̂″} s(x̂″)e^{−βd(x,x̂″)} · [δ_{x̂x̂′} − BA[q](x̂|x)] · p(x′)`
/// with `s` the marginal of `q`. Valid when `s` has zeros.
pub fn jacobian_encoder_ba(problem: &RdProblem, q: &Encoder, beta: f64) -> Result<DMatrix<f64>, BaError> {
    let (n, m) = (problem.n(), problem.m());
    let s = marginal_vector(problem, &q.channel);
    let (w, z) = encoder_weights(problem, &s, beta)?;
    let p = problem.source();
    let mut jac = DMatrix::zeros(m * n, m * n);
    for x in 0..n {
        let dmin = (0..m)
            .filter(|&j| s[j] != 0.0)
            .map(|j| problem.d(x, j))
            .fold(f64::INFINITY, f64::min);
        for xh in 0..m {
            let baq = w[(xh, x)] / z[x];
            let row = encoder_index(xh, x, n);
            for xh2 in 0..m {
                let ratio = (-beta * (problem.d(x, xh2) - dmin)).exp() / z[x];
                let bracket = if xh == xh2 { 1.0 - baq } else { -baq };
                let f = ratio * bracket;
                if f == 0.0 {
                    continue;
                }
                for x2 in 0..n {
                    jac[(row, encoder_index(xh2, x2, n))] = f * p[x2];
                }
            }
        }
    }
    Ok(jac)
}

/// `D_q(Id − BA_β)` in encoder coordinates (x̂-major).
pub fn jacobian_encoder(problem: &RdProblem, q: &Encoder, beta: f64) -> Result<DMatrix<f64>, BaError> {
    let ba = jacobian_encoder_ba(problem, q, beta)?;
    Ok(DMatrix::identity(ba.nrows(), ba.ncols()) - ba)
}

/// `D_β(Id − BA_β)` at `r`: `Σ_x p(x) q(x̂|x) (d(x,x̂) − ⟨d⟩(x))`.
pub fn beta_derivative(problem: &RdProblem, r: &[f64], beta: f64) -> Result<DVector<f64>, BaError> {
    let q = encoder_matrix(problem, r, beta)?;
    let p = problem.source();
    let (n, m) = (problem.n(), problem.m());
    let mut out = DVector::zeros(m);
    for x in 0..n {
        let mean: f64 = (0..m).map(|j| q[(j, x)] * problem.d(x, j)).sum();
        for j in 0..m {
            out[j] += p[x] * q[(j, x)] * (problem.d(x, j) - mean);
        }
    }
    Ok(out)
}

/// Newton iteration on `r − BA_β[r] = 0` from `r0`, which must have every
/// entry positive. Stops when the Newton step is at most `tol` in L∞; reports
/// non-convergence if an iterate leaves the positive orthant, the Jacobian is
/// singular, or `max_iter` steps are exhausted.
pub fn newton_fixed_point(
    problem: &RdProblem,
    r0: &[f64],
    beta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult, BaError> {
    if !(tol > 0.0) {
        return Err(BaError::BadTolerance);
    }
    let mut r = r0.to_vec();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let jac = jacobian_marginal(problem, &r, beta)?;
        let ba = ba_step_vec(problem, &r, beta)?;
        let f = DVector::from_iterator(r.len(), r.iter().zip(&ba).map(|(a, b)| b - a));
        let Some(step) = jac.lu().solve(&f) else { break };
        iterations += 1;
        let next: Vec<f64> = r.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
        residual = step.amax();
        if next.iter().any(|&v| !(v > 0.0)) {
            break;
        }
        r = next;
        if residual <= tol {
            converged = true;
            break;
        }
    }
    let channel = encoder_matrix(problem, &r, beta)?;
    Ok(FixedPointResult {
        marginal: Marginal { weights: r, normalized: true },
        encoder: Encoder { channel },
        iterations,
        residual,
        converged,
    })
}

/// Refines an approximate fixed point by Newton's method on its support.
/// Whenever a Newton step would leave the positive orthant, the letter that
/// crosses zero first along the step is removed and the iteration restarts
/// on the smaller support. Returns the refined marginal on the full alphabet.
pub fn polish_fixed_point(
    problem: &RdProblem,
    r0: &[f64],
    beta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult, BaError> {
    check_len(problem, r0)?;
    if !(tol > 0.0) {
        return Err(BaError::BadTolerance);
    }
    let m = problem.m();
    let mut support: Vec<usize> = (0..m).filter(|&i| r0[i] > 0.0).collect();
    if support.is_empty() {
        return Err(BaError::ZeroMarginal);
    }
    let mut r: Vec<f64> = support.iter().map(|&i| r0[i]).collect();
    let mut iterations = 0;
    loop {
        let total: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= total);
        let set = SupportSet::new(support.clone(), m).expect("increasing indices");
        let reduced = reduce(problem, &set).expect("consistent support");
        let mut residual = f64::INFINITY;
        let mut converged = false;
        let mut dropped = None;
        while iterations < max_iter {
            let jac = jacobian_marginal(&reduced, &r, beta)?;
            let ba = ba_step_vec(&reduced, &r, beta)?;
            let f = DVector::from_iterator(r.len(), r.iter().zip(&ba).map(|(a, b)| b - a));
            let Some(step) = jac.lu().solve(&f) else { break };
            iterations += 1;
            residual = step.amax();
            let crossing = (0..r.len())
                .filter(|&i| r[i] + step[i] <= 0.0)
                .min_by(|&i, &j| (r[i] / -step[i]).total_cmp(&(r[j] / -step[j])));
            if let Some(i) = crossing {
                dropped = Some(i);
                break;
            }
            r.iter_mut().zip(step.iter()).for_each(|(a, s)| *a += s);
            if residual <= tol {
                converged = true;
                break;
            }
        }
        match dropped {
            Some(i) if support.len() > 1 => {
                support.remove(i);
                r.remove(i);
            }
            _ => {
                let full = embed(&r, &set, m).expect("consistent support");
                let channel = encoder_matrix(problem, &full, beta)?;
                return Ok(FixedPointResult {
                    marginal: Marginal { weights: full, normalized: true },
                    encoder: Encoder { channel },
                    iterations,
                    residual,
                    converged,
                });
            }
        }
    }
}
