mod common;

use common::{berger273, fig3, interior_problem, random_problem, residual_map};
use nalgebra::DMatrix;
use rdtrack::ba_core::{
    ba_fixed_point, ba_step, ba_step_vec, encoder_from_marginal, encoder_index, encoder_matrix, jacobian_encoder,
    jacobian_encoder_ba, jacobian_marginal, lagrangian, marginal_from_encoder, marginal_vector, newton_fixed_point,
    polish_fixed_point, rd_functionals, support_ratios, BaError,
};
use rdtrack::linalg::eigenvalues;
use rdtrack::oracles::{binary_entropy, binary_hamming_rd_curve, BinaryHammingOracle};
use rdtrack::problem::{Encoder, Marginal, RdProblem};

#[test]
fn encoder_examples() {
    let problem = RdProblem::binary_hamming(0.3);
    let q0 = encoder_matrix(&problem, &[0.6, 0.4], 0.0).unwrap();
    for x in 0..2 {
        assert!((q0[(0, x)] - 0.6).abs() < 1e-15 && (q0[(1, x)] - 0.4).abs() < 1e-15);
    }
    let q = encoder_matrix(&problem, &[0.75, 0.25], 9f64.ln()).unwrap();
    assert!((q[(1, 1)] - 0.75).abs() < 1e-14);
    let single = RdProblem::checked(vec![0.5, 0.5], vec![vec![0.3], vec![2.0]]).unwrap();
    assert_eq!(encoder_matrix(&single, &[1.0], 3.0).unwrap(), DMatrix::from_element(1, 2, 1.0));
    assert!(matches!(encoder_matrix(&problem, &[0.0, 0.0], 1.0), Err(BaError::ZeroMarginal)));
}

#[test]
fn large_beta_does_not_underflow() {
    let problem = fig3();
    let q = encoder_matrix(&problem, &[0.25; 4], 2000.0).unwrap();
    assert!(q.iter().all(|v| v.is_finite()));
    for x in 0..4 {
        assert!((q.column(x).sum() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn marginal_examples() {
    let problem = RdProblem::checked(vec![0.4, 0.6], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let identity = Encoder::new(DMatrix::identity(2, 2)).unwrap();
    assert_eq!(marginal_from_encoder(&problem, &identity).weights, vec![0.4, 0.6]);
    let constant = Encoder::new(DMatrix::from_row_slice(2, 2, &[0.3, 0.3, 0.7, 0.7])).unwrap();
    let s = marginal_from_encoder(&problem, &constant).weights;
    assert!((s[0] - 0.3).abs() < 1e-15 && (s[1] - 0.7).abs() < 1e-15);
    let collapse = Encoder::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0])).unwrap();
    assert_eq!(marginal_from_encoder(&problem, &collapse).weights, vec![1.0, 0.0]);
}

#[test]
fn operator_examples() {
    let problem = random_problem(3, 3, 3);
    let r = Marginal::normalized(vec![0.2, 0.5, 0.3]).unwrap();
    let same = ba_step(&problem, &r, 0.0).unwrap();
    assert!(same.weights.iter().zip(&r.weights).all(|(a, b)| (a - b).abs() < 1e-15));
    let point = Marginal::point_mass(3, 1);
    let stepped = ba_step(&problem, &point, 2.0).unwrap().weights;
    assert_eq!((stepped[0], stepped[2]), (0.0, 0.0));
    assert!((stepped[1] - 1.0).abs() <= 1e-15);
    let bh = RdProblem::binary_hamming(0.3);
    let fixed = ba_step_vec(&bh, &[0.75, 0.25], 9f64.ln()).unwrap();
    assert!((fixed[0] - 0.75).abs() <= 1e-12 && (fixed[1] - 0.25).abs() <= 1e-12, "{fixed:?}");
}

#[test]
fn fixed_point_examples() {
    let bh = RdProblem::binary_hamming(0.3);
    let oracle = BinaryHammingOracle::new(0.3).unwrap();
    let res = ba_fixed_point(&bh, &Marginal::uniform(2), 32.0, 1e-8, 1_000_000).unwrap();
    assert!(res.converged);
    assert!((res.marginal.weights[1] - oracle.r1(32.0).unwrap()).abs() <= 1e-6);
    let point = ba_fixed_point(&bh, &Marginal::point_mass(2, 0), 5.0, 1e-8, 10).unwrap();
    assert!(point.converged && point.iterations == 1);
    assert_eq!(point.marginal.weights, vec![1.0, 0.0]);
    let f3 = ba_fixed_point(&fig3(), &Marginal::uniform(4), 20.0, 1e-10, 1_000_000).unwrap();
    assert!(f3.converged && f3.residual <= 1e-10);
    assert!(f3.marginal.min_entry() > 0.0);
    assert!(matches!(ba_fixed_point(&bh, &Marginal::uniform(2), 1.0, 0.0, 10), Err(BaError::BadTolerance)));
}

#[test]
fn non_convergence_is_reported() {
    let bh = RdProblem::binary_hamming(0.3);
    let beta_c = (7.0f64 / 3.0).ln();
    let res = ba_fixed_point(&bh, &Marginal::uniform(2), beta_c + 1e-4, 1e-14, 1000).unwrap();
    assert!(!res.converged);
    assert_eq!(res.iterations, 1000);
    assert!(res.residual > 1e-14);
}

#[test]
fn functional_examples() {
    let bh = RdProblem::binary_hamming(0.3);
    let product = Encoder::new(DMatrix::from_row_slice(2, 2, &[0.6, 0.6, 0.4, 0.4])).unwrap();
    assert!(rd_functionals(&bh, &product).rate.abs() < 1e-15);
    let identity = Encoder::new(DMatrix::identity(2, 2)).unwrap();
    let v = rd_functionals(&bh, &identity);
    assert_eq!(v.distortion, 0.0);
    assert!((v.rate - binary_entropy(0.3)).abs() < 1e-15);
    // The achiever at D = 0.1 sits at β = ln 9.
    let beta = 9f64.ln();
    let oracle = BinaryHammingOracle::new(0.3).unwrap();
    let q = encoder_from_marginal(&bh, &oracle.marginal(beta).unwrap(), beta).unwrap();
    let v = rd_functionals(&bh, &q);
    assert!((v.distortion - 0.1).abs() < 1e-14);
    assert!((v.rate - 0.2858).abs() < 5e-5);
    assert!((v.rate - binary_hamming_rd_curve(0.3, 0.1)).abs() < 1e-13);
    assert!((v.rate / 2f64.ln() - 0.4123).abs() < 5e-5);
}

#[test]
fn curve_points_lie_on_the_analytic_curve() {
    let bh = RdProblem::binary_hamming(0.3);
    for beta in [1.0, 1.5, 2.5, 4.0, 8.0] {
        let res = ba_fixed_point(&bh, &Marginal::uniform(2), beta, 1e-14, 1_000_000).unwrap();
        let v = rd_functionals(&bh, &res.encoder);
        assert!((v.rate - binary_hamming_rd_curve(0.3, v.distortion)).abs() < 1e-9, "beta {beta}");
    }
}

#[test]
fn marginal_jacobian_examples() {
    let single = RdProblem::checked(vec![0.5, 0.5], vec![vec![0.3], vec![2.0]]).unwrap();
    assert!((jacobian_marginal(&single, &[1.0], 2.0).unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
    let problem = random_problem(12, 3, 3);
    let r = [0.2, 0.3, 0.5];
    let beta = 1.7;
    let jac = jacobian_marginal(&problem, &r, beta).unwrap();
    let h = 1e-5;
    for j in 0..3 {
        let mut up = r.to_vec();
        let mut down = r.to_vec();
        up[j] += h;
        down[j] -= h;
        let (fu, fd) = (residual_map(&problem, &up, beta), residual_map(&problem, &down, beta));
        for i in 0..3 {
            assert!((jac[(i, j)] - (fu[i] - fd[i]) / (2.0 * h)).abs() <= 1e-6);
        }
    }
    assert!(matches!(jacobian_marginal(&problem, &[0.5, 0.0, 0.5], beta), Err(BaError::NotFullSupport { index: 1, .. })));
}

#[test]
fn marginal_jacobian_eigenvalue_vanishes_at_critical_beta() {
    let bh = RdProblem::binary_hamming(0.3);
    let oracle = BinaryHammingOracle::new(0.3).unwrap();
    let mut last = f64::INFINITY;
    for offset in [1.0, 0.3, 0.1, 0.03, 0.01, 0.003] {
        let beta = oracle.beta_c + offset;
        let r = oracle.marginal(beta).unwrap().weights;
        let jac = jacobian_marginal(&bh, &r, beta).unwrap();
        let min = eigenvalues(&jac).iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        assert!(min < last, "offset {offset}");
        last = min;
    }
    assert!(last < 1e-2);
}

/// `q ↦ BA[q]` in encoder coordinates, flattened x̂-major.
fn encoder_map(problem: &RdProblem, q: &DMatrix<f64>, beta: f64) -> Vec<f64> {
    let s = marginal_vector(problem, q);
    let next = encoder_matrix(problem, &s, beta).unwrap();
    let (m, n) = (problem.m(), problem.n());
    let mut out = vec![0.0; m * n];
    for j in 0..m {
        for x in 0..n {
            out[encoder_index(j, x, n)] = next[(j, x)];
        }
    }
    out
}

#[test]
fn encoder_jacobian_matches_differences() {
    let problem = random_problem(21, 2, 2);
    let beta = 2.2;
    let q = DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.3, 0.8]);
    let jac = jacobian_encoder_ba(&problem, &Encoder::new(q.clone()).unwrap(), beta).unwrap();
    let h = 1e-5;
    for j in 0..2 {
        for x in 0..2 {
            let mut up = q.clone();
            let mut down = q.clone();
            up[(j, x)] += h;
            down[(j, x)] -= h;
            let (fu, fd) = (encoder_map(&problem, &up, beta), encoder_map(&problem, &down, beta));
            let col = encoder_index(j, x, 2);
            for row in 0..4 {
                assert!((jac[(row, col)] - (fu[row] - fd[row]) / (2.0 * h)).abs() <= 1e-6, "({row}, {col})");
            }
        }
    }
}

#[test]
fn encoder_jacobian_single_letter_is_identity() {
    let single = RdProblem::checked(vec![0.2, 0.3, 0.5], vec![vec![0.3], vec![2.0], vec![1.0]]).unwrap();
    let q = Encoder::new(DMatrix::from_element(1, 3, 1.0)).unwrap();
    assert_eq!(jacobian_encoder(&single, &q, 1.5).unwrap(), DMatrix::identity(3, 3));
}

#[test]
fn blockwise_trace_identity() {
    for seed in [2u64, 13, 31] {
        let (problem, beta, r) = interior_problem(seed);
        let polished = newton_fixed_point(&problem, &r, beta, 1e-15, 50).unwrap();
        let r = polished.marginal.weights;
        let (m, n) = (problem.m(), problem.n());
        let enc = jacobian_encoder_ba(&problem, &polished.encoder, beta).unwrap();
        let marg_ba = DMatrix::identity(m, m) - jacobian_marginal(&problem, &r, beta).unwrap();
        for i in 0..m {
            for j in 0..m {
                let trace: f64 = (0..n).map(|x| enc[(encoder_index(i, x, n), encoder_index(j, x, n))]).sum();
                assert!((trace - marg_ba[(i, j)]).abs() <= 1e-10, "seed {seed}, ({i}, {j})");
            }
        }
    }
}

#[test]
fn spectrum_at_fixed_points_is_real_and_non_negative() {
    for seed in 0..8u64 {
        let problem = random_problem(seed, 4, 3);
        for beta in [1.0, 3.0, 9.0] {
            let res = ba_fixed_point(&problem, &Marginal::uniform(3), beta, 1e-13, 2_000_000).unwrap();
            let polished = polish_fixed_point(&problem, &res.marginal.weights, beta, 1e-14, 100).unwrap();
            let support = polished.marginal.support();
            if support.len() < 3 {
                continue;
            }
            let jac = jacobian_marginal(&problem, &polished.marginal.weights, beta).unwrap();
            for z in eigenvalues(&jac) {
                assert!(z.im.abs() <= 1e-8 && z.re >= -1e-10, "seed {seed}, beta {beta}: {z}");
            }
        }
    }
}

#[test]
fn lagrangian_decreases_along_iterates() {
    for seed in 0..5u64 {
        let problem = random_problem(seed, 3, 4);
        let beta = 0.5 + seed as f64;
        let mut r = Marginal::uniform(4);
        let mut q = encoder_from_marginal(&problem, &r, beta).unwrap();
        let mut value = lagrangian(&problem, &q, beta);
        for _ in 0..200 {
            r = ba_step(&problem, &r, beta).unwrap();
            q = encoder_from_marginal(&problem, &r, beta).unwrap();
            let next = lagrangian(&problem, &q, beta);
            assert!(next <= value + 1e-12, "seed {seed}");
            value = next;
        }
    }
}

#[test]
fn support_ratios_are_one_on_the_support() {
    let problem = berger273();
    let res = ba_fixed_point(&problem, &Marginal::uniform(3), 4.0, 1e-14, 1_000_000).unwrap();
    let polished = polish_fixed_point(&problem, &res.marginal.weights, 4.0, 1e-15, 100).unwrap();
    let c = support_ratios(&problem, &polished.marginal.weights, 4.0).unwrap();
    for i in polished.marginal.support() {
        assert!((c[i] - 1.0).abs() < 1e-12);
    }
    for (i, &v) in polished.marginal.weights.iter().enumerate() {
        if v == 0.0 {
            assert!(c[i] <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn polish_drops_letters_that_cross_zero() {
    let problem = berger273();
    let beta = 1.5;
    let res = ba_fixed_point(&problem, &Marginal::uniform(3), beta, 1e-6, 1_000_000).unwrap();
    let polished = polish_fixed_point(&problem, &res.marginal.weights, beta, 1e-14, 200).unwrap();
    assert!(polished.converged);
    assert_eq!(polished.marginal.support(), vec![0, 2]);
    let next = ba_step_vec(&problem, &polished.marginal.weights, beta).unwrap();
    assert!(next.iter().zip(&polished.marginal.weights).all(|(a, b)| (a - b).abs() <= 1e-13));
}

#[test]
fn encoder_jacobian_detects_the_support_switch() {
    let problem = berger273();
    let beta = 1.801071775389 + 1e-6;
    let res = ba_fixed_point(&problem, &Marginal::uniform(3), beta, 1e-10, 100_000).unwrap();
    let polished = polish_fixed_point(&problem, &res.marginal.weights, beta, 1e-14, 200).unwrap();
    let enc = jacobian_encoder(&problem, &polished.encoder, beta).unwrap();
    let min_enc = eigenvalues(&enc).iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let support = polished.marginal.support();
    let reduced = rdtrack::problem::reduce(&problem, &rdtrack::problem::SupportSet::new(support.clone(), 3).unwrap()).unwrap();
    let rs: Vec<f64> = support.iter().map(|&i| polished.marginal.weights[i]).collect();
    let marg = jacobian_marginal(&reduced, &rs, beta).unwrap();
    let min_marg = eigenvalues(&marg).iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    assert!(min_enc < 1e-6, "{min_enc}");
    assert!(min_marg >= 1e-5, "{min_marg}");
}
