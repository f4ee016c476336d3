//! Derivative tensors `D^{b+k}_{β^b, x^k} F` behind a provider interface,
//! with closed-form tensors for `F = Id − BA_β` in marginal coordinates and
//! for the line–parabola system.
//!
//! For the rate-distortion operator, per-point quantities are gathered once
//! in a [`PointScratch`]: the encoder, the expectations `⟨d^k⟩(x)`, the
//! matrices `P_k(x̂, x)` and the grid `G(k, a)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::ba_core::{encoder_matrix, BaError};
use crate::combinatorics::{binomial, counts, factorial_table, multisets, partition_count, partitions_with_empty};
use crate::problem::RdProblem;
use crate::sympoly::generate_p;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error(transparent)]
    Ba(#[from] BaError),
    #[error("marginal entry {index} is {value}; tensors need every entry positive")]
    ZeroSupport { index: usize, value: f64 },
    #[error("line-parabola system needs b != 0")]
    DegenerateParabola,
    #[error("state has length {got}, expected {expected}")]
    StateLength { got: usize, expected: usize },
}

/// A tensor with one output axis and `k` symmetric state axes, stored
/// row-major with the output axis first and the last state axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeTensor {
    /// Number of β-differentiations.
    pub b: usize,
    /// Number of state axes.
    pub k: usize,
    /// State dimension `T`.
    pub dim: usize,
    pub data: Vec<f64>,
}

impl DerivativeTensor {
    pub fn zeros(b: usize, k: usize, dim: usize) -> Self {
        Self { b, k, dim, data: vec![0.0; dim.pow(k as u32 + 1)] }
    }

    /// Total order `b + k`.
    pub fn order(&self) -> usize {
        self.b + self.k
    }

    fn offset(&self, out: usize, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.k);
        idx.iter().fold(out, |acc, &i| acc * self.dim + i)
    }

    /// Entry at output `out` and state multi-index `idx`.
    pub fn get(&self, out: usize, idx: &[usize]) -> f64 {
        self.data[self.offset(out, idx)]
    }

    pub fn set(&mut self, out: usize, idx: &[usize], v: f64) {
        let o = self.offset(out, idx);
        self.data[o] = v;
    }

    /// Contracts the last state axis with `v`.
    pub fn contract_last(&self, v: &DVector<f64>) -> DerivativeTensor {
        assert!(self.k > 0, "no state axis to contract");
        let dim = self.dim;
        let data = self
            .data
            .chunks_exact(dim)
            .map(|chunk| chunk.iter().zip(v.iter()).map(|(a, b)| a * b).sum())
            .collect();
        DerivativeTensor { b: self.b, k: self.k - 1, dim, data }
    }

    /// Applies the tensor to `k` vectors, giving a vector.
    pub fn apply(&self, vectors: &[&DVector<f64>]) -> DVector<f64> {
        assert_eq!(vectors.len(), self.k, "tensor needs {} arguments", self.k);
        let mut t = self.clone();
        for v in vectors.iter().rev() {
            t = t.contract_last(v);
        }
        DVector::from_vec(t.data)
    }

    /// Applies the tensor to `k − 1` vectors, leaving the first state axis
    /// free; the result is a `T × T` matrix.
    pub fn apply_partial(&self, vectors: &[&DVector<f64>]) -> DMatrix<f64> {
        assert_eq!(vectors.len() + 1, self.k, "tensor needs {} arguments", self.k - 1);
        let mut t = self.clone();
        for v in vectors.iter().rev() {
            t = t.contract_last(v);
        }
        DMatrix::from_row_slice(self.dim, self.dim, &t.data)
    }

    /// The tensor for `k = 1` as a `T × T` matrix.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.k, 1);
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    /// The tensor for `k = 0` as a vector.
    pub fn as_vector(&self) -> DVector<f64> {
        assert_eq!(self.k, 0);
        DVector::from_vec(self.data.clone())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Whether every entry equals its images under permutations of the
    /// state axes (exact comparison).
    pub fn is_symmetric(&self) -> bool {
        let total = self.dim.pow(self.k as u32);
        for out in 0..self.dim {
            for flat in 0..total {
                let idx = decode(flat, self.k, self.dim);
                let mut sorted = idx.clone();
                sorted.sort_unstable();
                if self.get(out, &idx) != self.get(out, &sorted) {
                    return false;
                }
            }
        }
        true
    }
}

fn decode(mut flat: usize, k: usize, dim: usize) -> Vec<usize> {
    let mut idx = vec![0; k];
    for slot in idx.iter_mut().rev() {
        *slot = flat % dim;
        flat /= dim;
    }
    idx
}

/// Fills a tensor from values at canonical (sorted) multi-indices.
fn fan_out(b: usize, k: usize, dim: usize, canonical: &HashMap<Vec<usize>, DVector<f64>>) -> DerivativeTensor {
    let mut t = DerivativeTensor::zeros(b, k, dim);
    let total = dim.pow(k as u32);
    for flat in 0..total {
        let idx = decode(flat, k, dim);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        let v = &canonical[&sorted];
        for out in 0..dim {
            t.set(out, &idx, v[out]);
        }
    }
    t
}

/// Source of derivative tensors of an operator `F(x, β)` at a fixed point
/// `(x, β)` of evaluation.
pub trait TensorProvider {
    /// State dimension `T`.
    fn dim(&self) -> usize;
    /// The state `x` at which tensors are evaluated.
    fn state(&self) -> &DVector<f64>;
    /// The β at which tensors are evaluated.
    fn beta(&self) -> f64;
    /// `D^{b+k}_{β^b, x^k} F`, for `b + k ≥ 1`.
    fn tensor(&self, b: usize, k: usize) -> DerivativeTensor;
    /// `D_x F`.
    fn jacobian(&self) -> DMatrix<f64> {
        self.tensor(0, 1).as_matrix()
    }
}

/// Per-point quantities shared by all rate-distortion tensors at a point.
#[derive(Debug, Clone)]
pub struct PointScratch {
    /// Encoder `q(x̂|x)`, `M × N`.
    pub q: DMatrix<f64>,
    /// `⟨d^k⟩(x)` for `k = 0..=order` (entry 0 is all ones).
    pub expectations: Vec<DVector<f64>>,
    /// `P_k(x̂, x)` for `k = 0..=order`, each `M × N`.
    pub p_mats: Vec<DMatrix<f64>>,
    /// `G(k, a)` for `k = 0..=order`, `a = 0..=order+1`, each `M × N`.
    pub g: Vec<Vec<DMatrix<f64>>>,
    /// Largest total tensor order supported.
    pub order: usize,
}

/// `⟨d^k⟩(x) = Σ_x̂ q(x̂|x) d(x, x̂)^k` for `k = 0..=k_max`.
pub fn expected_distortion_powers(q: &DMatrix<f64>, d: &DMatrix<f64>, k_max: usize) -> Vec<DVector<f64>> {
    let (m, n) = (q.nrows(), q.ncols());
    (0..=k_max)
        .map(|k| DVector::from_fn(n, |x, _| (0..m).map(|j| q[(j, x)] * d[(x, j)].powi(k as i32)).sum()))
        .collect()
}

/// `P_k(x̂, x)` with `x₀ = d(x, x̂)` and `x_j = ⟨d^j⟩(x)`, for `k = 0..=k_max`.
pub fn eval_p_matrices(d: &DMatrix<f64>, expectations: &[DVector<f64>], k_max: usize) -> Vec<DMatrix<f64>> {
    let polys = generate_p(k_max);
    let (n, m) = (d.nrows(), d.ncols());
    let mut values = vec![0.0; k_max + 1];
    let mut out = vec![DMatrix::zeros(m, n); k_max + 1];
    for x in 0..n {
        for (j, e) in expectations.iter().enumerate().take(k_max + 1).skip(1) {
            values[j] = e[x];
        }
        for xh in 0..m {
            values[0] = d[(x, xh)];
            for k in 0..=k_max {
                out[k][(xh, x)] = polys[k].evaluate(&values[..=k]).expect("P_k uses x_0..x_k");
            }
        }
    }
    out
}

/// `G(k, a)` for `k = 0..=l_max` and `a = 0..=l_max+1`, accumulated in one
/// pass over the partitions of each `k`.
pub fn eval_g(p_mats: &[DMatrix<f64>], l_max: usize) -> Vec<Vec<DMatrix<f64>>> {
    let (m, n) = p_mats[0].shape();
    let fact = factorial_table(l_max + 2);
    let mut g = vec![vec![DMatrix::zeros(m, n); l_max + 2]; l_max + 1];
    for (k, row) in g.iter_mut().enumerate() {
        for t in partitions_with_empty(k) {
            let size = t.total_multiplicity();
            if size > l_max + 1 {
                continue;
            }
            let mut term = DMatrix::from_element(m, n, 1.0);
            for (&j, &tj) in t.parts.iter().zip(&t.multiplicities) {
                let base = &p_mats[j] / fact[j];
                for _ in 0..tj {
                    term.component_mul_assign(&base);
                }
                term /= fact[tj];
            }
            for (a, cell) in row.iter_mut().enumerate().skip(size) {
                *cell += &term / fact[a - size];
            }
        }
    }
    g
}

impl PointScratch {
    /// Builds the scratch for tensors of total order up to `order`.
    pub fn build(problem: &RdProblem, r: &[f64], beta: f64, order: usize) -> Result<Self, TensorError> {
        let q = encoder_matrix(problem, r, beta)?;
        let expectations = expected_distortion_powers(&q, problem.distortion(), order);
        let p_mats = eval_p_matrices(problem.distortion(), &expectations, order);
        let g = eval_g(&p_mats, order);
        Ok(Self { q, expectations, p_mats, g, order })
    }
}

/// `D^b_{β^b}(Id − BA_β)[r](x̂) = −Σ_x p(x) q(x̂|x) P_b(x̂, x)`, `b ≥ 1`.
pub fn tensor_beta_only(problem: &RdProblem, scratch: &PointScratch, b: usize) -> DVector<f64> {
    assert!(b >= 1 && b <= scratch.order, "beta order {b} outside 1..={}", scratch.order);
    let p = problem.source();
    let (m, n) = scratch.q.shape();
    DVector::from_fn(m, |xh, _| -(0..n).map(|x| p[x] * scratch.q[(xh, x)] * scratch.p_mats[b][(xh, x)]).sum::<f64>())
}

/// Truncated product of two coefficient sequences (indices `0..=len-1`).
fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len();
    let mut out = vec![0.0; len];
    for i in 0..len {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..len - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

/// All `M` partial derivatives `∂^{b+|α₊|} / ∂β^b ∂r^{α₊} (Id − BA_β)[r](x̂)`
/// for a non-zero `α₊`, at a marginal with every entry positive.
pub fn tensor_mixed(
    problem: &RdProblem,
    r: &[f64],
    scratch: &PointScratch,
    b: usize,
    alpha_plus: &[usize],
) -> DVector<f64> {
    let (m, n) = scratch.q.shape();
    let k: usize = alpha_plus.iter().sum();
    assert!(k >= 1, "alpha_plus must be non-zero");
    assert!(b + k <= scratch.order, "order {} exceeds scratch order {}", b + k, scratch.order);
    let fact = factorial_table(scratch.order + 2);
    let alpha_fact = fact[b] * alpha_plus.iter().map(|&a| fact[a]).product::<f64>();
    let sign = if (k - 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let prefactor = sign * fact[k - 1] * alpha_fact;
    let p = problem.source();
    let g = &scratch.g;
    let mut out = DVector::zeros(m);
    for x in 0..n {
        let mut weight = p[x];
        for (j, &a) in alpha_plus.iter().enumerate() {
            if a > 0 {
                weight *= (scratch.q[(j, x)] / r[j]).powi(a as i32);
            }
        }
        if weight == 0.0 {
            continue;
        }
        // Per-letter generating sequences in the β-split index κ = 0..=b.
        let seqs: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..=b).map(|kap| g[kap][alpha_plus[i]][(i, x)]).collect())
            .collect();
        for xh in 0..m {
            let a = alpha_plus[xh];
            let h: Vec<f64> = (0..=b)
                .map(|kap| {
                    a as f64 * g[kap][a][(xh, x)]
                        - (k * (1 + a)) as f64 * scratch.q[(xh, x)] * g[kap][a + 1][(xh, x)]
                })
                .collect();
            let mut acc = h;
            for (i, s) in seqs.iter().enumerate() {
                if i != xh {
                    acc = convolve(&acc, s);
                }
            }
            out[xh] -= prefactor * weight * acc[b];
        }
    }
    if b == 0 && k == 1 {
        let j = alpha_plus.iter().position(|&a| a == 1).expect("unit multi-index");
        out[j] += 1.0;
    }
    out
}

/// Tensor provider for `F = Id − BA_β` in marginal coordinates on a problem
/// whose marginal has full positive support.
#[derive(Debug, Clone)]
pub struct RdTensorProvider {
    problem: RdProblem,
    state: DVector<f64>,
    beta: f64,
    scratch: PointScratch,
}

impl RdTensorProvider {
    /// Builds the scratch at `(r, β)` for tensors of total order up to `order`.
    pub fn new(problem: &RdProblem, r: &[f64], beta: f64, order: usize) -> Result<Self, TensorError> {
        if r.len() != problem.m() {
            return Err(TensorError::StateLength { got: r.len(), expected: problem.m() });
        }
        if let Some((index, &value)) = r.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(TensorError::ZeroSupport { index, value });
        }
        let scratch = PointScratch::build(problem, r, beta, order.max(1))?;
        Ok(Self { problem: problem.clone(), state: DVector::from_column_slice(r), beta, scratch })
    }

    pub fn scratch(&self) -> &PointScratch {
        &self.scratch
    }

    pub fn problem(&self) -> &RdProblem {
        &self.problem
    }

    /// Largest total order available.
    pub fn order(&self) -> usize {
        self.scratch.order
    }
}

impl TensorProvider for RdTensorProvider {
    fn dim(&self) -> usize {
        self.problem.m()
    }

    fn state(&self) -> &DVector<f64> {
        &self.state
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn tensor(&self, b: usize, k: usize) -> DerivativeTensor {
        assert!(b + k >= 1, "tensor order must be positive");
        let m = self.dim();
        if k == 0 {
            let v = tensor_beta_only(&self.problem, &self.scratch, b);
            return DerivativeTensor { b, k, dim: m, data: v.iter().cloned().collect() };
        }
        let r: Vec<f64> = self.state.iter().cloned().collect();
        let mut canonical = HashMap::new();
        for idx in multisets(m, k) {
            let alpha = counts(&idx, m);
            let v = tensor_mixed(&self.problem, &r, &self.scratch, b, &alpha);
            canonical.insert(idx, v);
        }
        fan_out(b, k, m, &canonical)
    }
}

/// The line–parabola system `F(x, y; β) = (−y + bx² + cx + d, −y + ax + β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParabola {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl LineParabola {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, TensorError> {
        if b == 0.0 {
            return Err(TensorError::DegenerateParabola);
        }
        Ok(Self { a, b, c, d })
    }

    /// `F(x, y; β)`.
    pub fn residual(&self, x: f64, y: f64, beta: f64) -> [f64; 2] {
        [-y + self.b * x * x + self.c * x + self.d, -y + self.a * x + beta]
    }

    /// `Δ(x₀) = 2bx₀ + c − a`.
    pub fn delta(&self, x: f64) -> f64 {
        2.0 * self.b * x + self.c - self.a
    }
}

/// Tensor provider for the line–parabola system at a state `(x, y)` and β.
#[derive(Debug, Clone)]
pub struct LineParabolaProvider {
    system: LineParabola,
    state: DVector<f64>,
    beta: f64,
}

/// Provider for the line–parabola system at `(x, y; β)`.
pub fn line_parabola_provider(
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    state: [f64; 2],
    beta: f64,
) -> Result<LineParabolaProvider, TensorError> {
    Ok(LineParabolaProvider {
        system: LineParabola::new(a, b, c, d)?,
        state: DVector::from_column_slice(&state),
        beta,
    })
}

impl LineParabolaProvider {
    pub fn system(&self) -> &LineParabola {
        &self.system
    }
}

impl TensorProvider for LineParabolaProvider {
    fn dim(&self) -> usize {
        2
    }

    fn state(&self) -> &DVector<f64> {
        &self.state
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn tensor(&self, b: usize, k: usize) -> DerivativeTensor {
        let s = &self.system;
        let mut t = DerivativeTensor::zeros(b, k, 2);
        match (b, k) {
            (0, 1) => {
                let x = self.state[0];
                t.set(0, &[0], 2.0 * s.b * x + s.c);
                t.set(0, &[1], -1.0);
                t.set(1, &[0], s.a);
                t.set(1, &[1], -1.0);
            }
            (1, 0) => {
                t.set(1, &[], 1.0);
            }
            (0, 2) => {
                t.set(0, &[0, 0], 2.0 * s.b);
            }
            _ => {}
        }
        t
    }
}

/// `C(b, m; d, M)` of the uniform tensor bound
/// `|entry| ≤ 1 + δ^{−m} C` on the δ-interior of the simplex, with
/// `d_max = max(1, max d)`. The leading factor uses `b!` so that the bound
/// also covers `b = 0`; it coincides with `2b` for `b ∈ {1, 2}`.
pub fn uniform_bound_constant(b: usize, m: usize, d_max: f64, alphabet: usize) -> f64 {
    let fact = factorial_table(b.max(m) + 1);
    let dm = d_max.max(1.0);
    let pb = partition_count(b) as f64;
    let inner = fact[m] * pb * (2f64.powi(b as i32) * fact[b] * dm.powi((b * b) as i32)).powi(1 + m as i32);
    2.0 * fact[b] * fact[m + 1] * binomial(b + alphabet - 1, b) * inner.powi(alphabet as i32)
}

/// `1 + δ^{−m} C(b, m; d, M)`.
pub fn uniform_tensor_bound(b: usize, m: usize, d_max: f64, alphabet: usize, delta: f64) -> f64 {
    1.0 + uniform_bound_constant(b, m, d_max, alphabet) / delta.powi(m as i32)
}
