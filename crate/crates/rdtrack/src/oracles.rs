//! Closed-form ground truth: the binary source with Hamming distortion and
//! the line–parabola intersection system.

use nalgebra::DVector;
use thiserror::Error;

use crate::problem::Marginal;
use crate::tensors::LineParabola;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("source probability must lie in (0, 1/2), got {0}")]
    BadSourceProbability(f64),
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("derivatives need beta > beta_c = {beta_c}, got {beta}")]
    NotAnalytic { beta: f64, beta_c: f64 },
    #[error("no real intersection at beta = {0}")]
    NoRealSolution(f64),
    #[error("closed-form derivatives are available up to order 4, got {0}")]
    OrderTooHigh(usize),
}

/// Binary source `(1 − p, p)` with Hamming distortion; letter 1 carries `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryHammingOracle {
    pub p: f64,
    pub beta_c: f64,
}

impl BinaryHammingOracle {
    pub fn new(p: f64) -> Result<Self, OracleError> {
        if !(p > 0.0 && p < 0.5) {
            return Err(OracleError::BadSourceProbability(p));
        }
        Ok(Self { p, beta_c: ((1.0 - p) / p).ln() })
    }

    /// `Pr(X̂ = 1)` at `β`; zero below `β_c`.
    pub fn r1(&self, beta: f64) -> Result<f64, OracleError> {
        if !(beta > 0.0) {
            return Err(OracleError::NonPositiveBeta(beta));
        }
        if beta <= self.beta_c {
            return Ok(0.0);
        }
        let w = 1.0 / beta.exp_m1();
        Ok((self.p - (1.0 - 2.0 * self.p) * w).max(0.0))
    }

    /// Optimal reproduction marginal at `β`.
    pub fn marginal(&self, beta: f64) -> Result<Marginal, OracleError> {
        let r1 = self.r1(beta)?;
        Ok(Marginal { weights: vec![1.0 - r1, r1], normalized: true })
    }

    /// `dᵏr/dβᵏ` for `k = 0..=order` (entry 0 is the marginal itself).
    pub fn derivatives(&self, beta: f64, order: usize) -> Result<Vec<DVector<f64>>, OracleError> {
        if !(beta > self.beta_c) {
            return Err(OracleError::NotAnalytic { beta, beta_c: self.beta_c });
        }
        // r1 = p − (1 − 2p)·w with w = 1/(e^β − 1) and dw/dβ = −(w + w²).
        let w = 1.0 / beta.exp_m1();
        let mut poly = vec![0.0, 1.0];
        let mut out = vec![DVector::from_vec(self.marginal(beta)?.weights)];
        for _ in 1..=order {
            let mut next = vec![0.0; poly.len() + 1];
            for (i, &c) in poly.iter().enumerate().skip(1) {
                let dc = c * i as f64;
                next[i] -= dc;
                next[i + 1] -= dc;
            }
            poly = next;
            let value = poly.iter().rev().fold(0.0, |acc, &c| acc * w + c);
            let d1 = -(1.0 - 2.0 * self.p) * value;
            out.push(DVector::from_vec(vec![-d1, d1]));
        }
        Ok(out)
    }
}

/// Optimal marginal of the binary Hamming problem.
pub fn binary_hamming_marginal(p: f64, beta: f64) -> Result<Marginal, OracleError> {
    BinaryHammingOracle::new(p)?.marginal(beta)
}

/// `dᵏr/dβᵏ`, `k = 1..=order`, of the binary Hamming solution.
pub fn binary_hamming_derivatives(p: f64, beta: f64, order: usize) -> Result<Vec<DVector<f64>>, OracleError> {
    let mut all = BinaryHammingOracle::new(p)?.derivatives(beta, order)?;
    all.remove(0);
    Ok(all)
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |v: f64| if v > 0.0 { -v * v.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// `R(D) = H(p) − H(D)` in nats for `D ≤ min(p, 1 − p)`, zero beyond.
pub fn binary_hamming_rd_curve(p: f64, distortion: f64) -> f64 {
    if distortion >= p.min(1.0 - p) {
        return 0.0;
    }
    binary_entropy(p) - binary_entropy(distortion.max(0.0))
}

/// Branch of the line–parabola intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// The root with the `+` square root.
    Upper,
    /// The root with the `−` square root.
    Lower,
}

/// Intersection `(x, y)` of `y = bx² + cx + d` and `y = ax + β`.
pub fn line_parabola_exact(system: &LineParabola, beta: f64, branch: Branch) -> Result<(f64, f64), OracleError> {
    let LineParabola { a, b, c, d } = *system;
    let h = (a - c) / (2.0 * b);
    let disc = h * h + (beta - d) / b;
    if disc < 0.0 {
        return Err(OracleError::NoRealSolution(beta));
    }
    let root = disc.sqrt();
    let x = match branch {
        Branch::Upper => h + root,
        Branch::Lower => h - root,
    };
    Ok((x, beta + a * x))
}

/// `β` at which the two intersections merge.
pub fn line_parabola_critical_beta(system: &LineParabola) -> f64 {
    let h = (system.a - system.c) / (2.0 * system.b);
    system.d - system.b * h * h
}

/// Closed-form `dᵏ(x, y)/dβᵏ` at a root with abscissa `x₀`, `k = 1..=order`,
/// `order ≤ 4`.
pub fn line_parabola_derivatives(system: &LineParabola, x0: f64, order: usize) -> Result<Vec<[f64; 2]>, OracleError> {
    if order > 4 {
        return Err(OracleError::OrderTooHigh(order));
    }
    let (a, b) = (system.a, system.b);
    let delta = system.delta(x0);
    let scales = [
        1.0 / delta,
        -2.0 * b / delta.powi(3),
        12.0 * b * b / delta.powi(5),
        -120.0 * b.powi(3) / delta.powi(7),
    ];
    Ok((0..order)
        .map(|k| {
            if k == 0 {
                [scales[0], scales[0] * (a + delta)]
            } else {
                [scales[k], scales[k] * a]
            }
        })
        .collect())
}
