#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdtrack::ba_core::{ba_fixed_point, ba_step_vec};
use rdtrack::problem::{Marginal, RdProblem};

/// Random problem with source weights and distortions drawn uniformly.
pub fn random_problem(seed: u64, n: usize, m: usize) -> RdProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let source = raw.iter().map(|v| v / total).collect();
    let rows = (0..n).map(|_| (0..m).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    RdProblem::checked(source, rows).expect("random problem is valid")
}

/// Random problem with every distortion multiplied by `scale`.
pub fn scaled_problem(seed: u64, n: usize, m: usize, scale: f64) -> RdProblem {
    let base = random_problem(seed, n, m);
    let rows = (0..n).map(|x| (0..m).map(|j| scale * base.d(x, j)).collect()).collect();
    RdProblem::checked(base.source().to_vec(), rows).expect("scaled problem is valid")
}

/// A seeded 3×3 problem and β whose BA fixed point has every entry at least 0.1.
pub fn interior_problem(seed: u64) -> (RdProblem, f64, Vec<f64>) {
    scaled_interior_problem(seed, 1.0)
}

/// [`interior_problem`] with distortions multiplied by `scale` and β divided by it.
pub fn scaled_interior_problem(seed: u64, scale: f64) -> (RdProblem, f64, Vec<f64>) {
    for s in seed.. {
        let problem = scaled_problem(s, 3, 3, scale);
        for beta in [4.0, 8.0, 16.0].map(|b| b / scale) {
            let res = ba_fixed_point(&problem, &Marginal::uniform(3), beta, 1e-14, 2_000_000).unwrap();
            if res.converged && res.marginal.min_entry() >= 0.1 {
                return (problem, beta, res.marginal.weights);
            }
        }
    }
    unreachable!()
}

/// `F(r, β) = r − BA_β[r]`.
pub fn residual_map(problem: &RdProblem, r: &[f64], beta: f64) -> Vec<f64> {
    let ba = ba_step_vec(problem, r, beta).unwrap();
    r.iter().zip(&ba).map(|(a, b)| a - b).collect()
}

/// Nested central differences of `F` along `vars` (`None` is β, `Some(i)`
/// is `r_i`).
pub fn nested_difference(problem: &RdProblem, r: &[f64], beta: f64, vars: &[Option<usize>], h: f64) -> Vec<f64> {
    match vars.split_first() {
        None => residual_map(problem, r, beta),
        Some((first, rest)) => {
            let shift = |sign: f64| {
                let mut r2 = r.to_vec();
                let mut b2 = beta;
                match first {
                    None => b2 += sign * h,
                    Some(i) => r2[*i] += sign * h,
                }
                nested_difference(problem, &r2, b2, rest, h)
            };
            let plus = shift(1.0);
            let minus = shift(-1.0);
            plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        }
    }
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

/// Four-letter problem with support chain 4 → 3 → 2 → 1.
pub fn fig3() -> RdProblem {
    let rows = [[0.0, 1.0, 1.0, 2.0], [4.0, 1.0, 5.0, 2.0], [4.0, 5.0, 1.0, 2.0], [8.0, 5.0, 5.0, 2.0]];
    RdProblem::checked(vec![0.4, 0.3, 0.2, 0.1], rows.iter().map(|r| r.iter().map(|v| v / 8.0).collect()).collect()).unwrap()
}

/// Binary source with an erasure-like third reproduction letter.
pub fn berger273() -> RdProblem {
    RdProblem::checked(vec![0.4, 0.6], vec![vec![1.0, 0.0, 0.3], vec![0.0, 1.0, 0.3]]).unwrap()
}
