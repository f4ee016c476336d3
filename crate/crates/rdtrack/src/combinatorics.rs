//! Integer partitions, multi-indices, and the coefficients of the
//! implicit-derivative recursion.

use thiserror::Error;

/// Largest order for which coefficients are computed in exact integer
/// arithmetic; above it log-factorials are used.
pub const EXACT_COEFFICIENT_MAX_ORDER: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CombinatoricsError {
    #[error("partitions are enumerated for n >= 1; use partitions_with_empty for n = 0")]
    ZeroNotAllowed,
    #[error("beta-order b = {b} out of range 0..={max}")]
    BetaOrderOutOfRange { b: usize, max: usize },
    #[error("partition sums to {got}, expected {expected}")]
    WrongSum { got: usize, expected: usize },
}

/// A partition `n = m₁·p₁ + … + m_s·p_s` with distinct parts `p₁ < … < p_s`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntPartition {
    /// Distinct parts, strictly increasing.
    pub parts: Vec<usize>,
    /// Multiplicity of each part.
    pub multiplicities: Vec<usize>,
    /// The partitioned integer.
    pub n: usize,
}

impl IntPartition {
    /// Builds a partition from a multiset of positive parts in any order.
    pub fn from_parts(raw: &[usize]) -> Self {
        let mut sorted = raw.to_vec();
        sorted.sort_unstable();
        let mut parts = Vec::new();
        let mut multiplicities = Vec::new();
        for p in sorted {
            assert!(p > 0, "partition parts must be positive");
            if parts.last() == Some(&p) {
                *multiplicities.last_mut().unwrap() += 1;
            } else {
                parts.push(p);
                multiplicities.push(1);
            }
        }
        let n = parts.iter().zip(&multiplicities).map(|(p, m)| p * m).sum();
        Self { parts, multiplicities, n }
    }

    /// Total multiplicity `m = Σ mᵢ` (the number of parts).
    pub fn total_multiplicity(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Multiplicity of the part 1 (zero when 1 is not a part).
    pub fn ones(&self) -> usize {
        if self.parts.first() == Some(&1) {
            self.multiplicities[0]
        } else {
            0
        }
    }

    /// Whether this is the single-part partition `n = n`.
    pub fn is_trivial(&self) -> bool {
        self.parts.len() == 1 && self.multiplicities[0] == 1
    }

    /// Parts in non-increasing order, with repetition.
    pub fn to_vec_desc(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.total_multiplicity());
        for (p, m) in self.parts.iter().zip(&self.multiplicities).rev() {
            v.extend(std::iter::repeat_n(*p, *m));
        }
        v
    }
}

fn enumerate_desc(n: usize, max_part: usize, prefix: &mut Vec<usize>, out: &mut Vec<IntPartition>) {
    if n == 0 {
        out.push(IntPartition::from_parts(prefix));
        return;
    }
    for p in (1..=max_part.min(n)).rev() {
        prefix.push(p);
        enumerate_desc(n - p, p, prefix, out);
        prefix.pop();
    }
}

/// All partitions of `n ≥ 1`, ordered by their non-increasing part
/// sequences in descending lexicographic order: `(n), (n−1, 1), …, (1, …, 1)`.
pub fn partitions(n: usize) -> Result<Vec<IntPartition>, CombinatoricsError> {
    if n == 0 {
        return Err(CombinatoricsError::ZeroNotAllowed);
    }
    Ok(partitions_with_empty(n))
}

/// As [`partitions`], but `n = 0` yields the single empty partition.
pub fn partitions_with_empty(n: usize) -> Vec<IntPartition> {
    let mut out = Vec::new();
    enumerate_desc(n, n, &mut Vec::new(), &mut out);
    out
}

/// Number of partitions `p(n)`, with `p(0) = 1`.
pub fn partition_count(n: usize) -> u128 {
    partitions_bounded(n, n)
}

/// Number of partitions of `n` into exactly `k` parts, `p_k(n)`, via
/// `p_k(n) = p_{k−1}(n−1) + p_k(n−k)` with `p₀(0) = 1`.
pub fn partitions_exact(n: usize, k: usize) -> u128 {
    // table[j][i] = p_j(i)
    let mut table = vec![vec![0u128; n + 1]; k + 1];
    table[0][0] = 1;
    for j in 1..=k {
        for i in j..=n {
            table[j][i] = table[j - 1][i - 1] + table[j][i - j];
        }
    }
    table[k][n]
}

/// Number of partitions of `n` into at most `k` parts, `p_{≤k}(n)`.
pub fn partitions_bounded(n: usize, k: usize) -> u128 {
    (0..=k.min(n)).map(|j| partitions_exact(n, j)).sum()
}

/// `n!` as an exact integer; `None` on overflow.
pub fn factorial_u128(n: usize) -> Option<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
}

/// `ln n!` by direct summation.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Double-precision factorials `0!, …, n!`.
pub fn factorial_table(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    let mut acc = 1.0;
    t.push(acc);
    for k in 1..=n {
        acc *= k as f64;
        t.push(acc);
    }
    t
}

/// Binomial coefficient as a double.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Coefficient `l! / (b! (m₁−b)! m₂!⋯m_s! · (p₁!)^{m₁}⋯(p_s!)^{m_s})` of the
/// implicit-derivative recursion, where `b` of the unit parts are taken as
/// β-differentiations.
pub fn taylor_coefficient(l: usize, b: usize, partition: &IntPartition) -> Result<f64, CombinatoricsError> {
    if partition.n != l {
        return Err(CombinatoricsError::WrongSum { got: partition.n, expected: l });
    }
    let max_b = partition.ones();
    if b > max_b {
        return Err(CombinatoricsError::BetaOrderOutOfRange { b, max: max_b });
    }
    // Denominator factors as a list of factorial arguments.
    let mut denom_factorials: Vec<usize> = vec![b];
    for (i, (&p, &m)) in partition.parts.iter().zip(&partition.multiplicities).enumerate() {
        if i == 0 && p == 1 {
            denom_factorials.push(m - b);
        } else {
            denom_factorials.push(m);
        }
        denom_factorials.extend(std::iter::repeat_n(p, m));
    }
    if l <= EXACT_COEFFICIENT_MAX_ORDER {
        let num = factorial_u128(l).expect("l! fits in 128 bits");
        let den = denom_factorials
            .iter()
            .map(|&f| factorial_u128(f).expect("factor <= l"))
            .product::<u128>();
        Ok((num / den) as f64)
    } else {
        let ln = ln_factorial(l) - denom_factorials.iter().map(|&f| ln_factorial(f)).sum::<f64>();
        Ok(ln.exp().round())
    }
}

/// One summand pattern of the order-`l` recursion: a partition of `l` and
/// the number `b` of unit parts taken as β-differentiations.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionTerm {
    pub partition: IntPartition,
    pub b: usize,
    pub coefficient: f64,
}

impl RecursionTerm {
    /// Total order `m` of the derivative tensor involved.
    pub fn total_order(&self) -> usize {
        self.partition.total_multiplicity()
    }

    /// Number of state axes `m − b` of the tensor involved.
    pub fn state_order(&self) -> usize {
        self.total_order() - self.b
    }
}

/// All summands on the right-hand side of the order-`l` recursion, i.e.
/// every (partition, b) pair except the one whose tensor is the Jacobian
/// applied to the unknown (`m = 1`, `b = 0`).
pub fn recursion_terms(l: usize) -> Result<Vec<RecursionTerm>, CombinatoricsError> {
    let mut out = Vec::new();
    for partition in partitions(l)? {
        for b in 0..=partition.ones() {
            if partition.total_multiplicity() == 1 && b == 0 {
                continue;
            }
            let coefficient = taylor_coefficient(l, b, &partition)?;
            out.push(RecursionTerm { partition: partition.clone(), b, coefficient });
        }
    }
    Ok(out)
}

/// A multi-index `α ∈ N₀^{M+1}`: `alpha[0]` counts β-differentiations and
/// the rest count marginal-coordinate differentiations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    pub alpha: Vec<usize>,
}

impl MultiIndex {
    pub fn new(beta_order: usize, plus: &[usize]) -> Self {
        let mut alpha = Vec::with_capacity(plus.len() + 1);
        alpha.push(beta_order);
        alpha.extend_from_slice(plus);
        Self { alpha }
    }

    pub fn beta_order(&self) -> usize {
        self.alpha[0]
    }

    /// The marginal-coordinate part `α₊`.
    pub fn plus(&self) -> &[usize] {
        &self.alpha[1..]
    }

    /// `|α|`.
    pub fn order(&self) -> usize {
        self.alpha.iter().sum()
    }

    /// `|α₊|`.
    pub fn plus_order(&self) -> usize {
        self.plus().iter().sum()
    }

    /// `α! = Π αⱼ!` including `α₀!`.
    pub fn factorial(&self) -> f64 {
        self.alpha.iter().map(|&a| factorial_u128(a).map_or_else(|| ln_factorial(a).exp(), |f| f as f64)).product()
    }
}

/// Non-decreasing index tuples of length `k` over `0..m` (combinations with
/// repetition) in lexicographic order.
pub fn multisets(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if m == 0 {
        if k == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    let mut cur = vec![0usize; k];
    loop {
        out.push(cur.clone());
        // Advance to the next non-decreasing tuple.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] + 1 < m {
                let v = cur[i] + 1;
                for c in cur.iter_mut().skip(i) {
                    *c = v;
                }
                break;
            }
        }
    }
}

/// Count vector of an index tuple over `0..m`.
pub fn counts(indices: &[usize], m: usize) -> Vec<usize> {
    let mut c = vec![0; m];
    for &i in indices {
        c[i] += 1;
    }
    c
}

/// All vectors in `N₀^parts` summing to `total`, in lexicographic order.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=total {
            prefix.push(first);
            rec(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(total, parts, &mut Vec::new(), &mut out);
    out
}
