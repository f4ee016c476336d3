//! Rate-distortion problem instances, probability-vector types, and
//! support reduction.
//!
//! Letters are indexed from zero throughout the library. A problem with
//! source alphabet of size `N` and reproduction alphabet of size `M` stores
//! its distortion as an `N × M` matrix `d(x, x̂)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the source normalization and on marginal/encoder sums.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Max-norm distance under which two distinct distortion columns trigger a
/// near-degeneracy warning.
pub const NEAR_DUPLICATE_TOL: f64 = 1e-10;

/// Errors raised by problem construction and support manipulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("distortion matrix has {rows} rows but the source has {source_len} letters")]
    ShapeMismatch { rows: usize, source_len: usize },
    #[error("distortion row {row} has {len} entries, expected {expected}")]
    RaggedRow { row: usize, len: usize, expected: usize },
    #[error("problem must have at least one source and one reproduction letter")]
    Empty,
    #[error("problem failed validation: {0}")]
    Invalid(String),
    #[error("empty support: the reduced problem would be trivial")]
    EmptySupport,
    #[error("support index {index} out of range for alphabet of size {size}")]
    SupportOutOfRange { index: usize, size: usize },
    #[error("support indices must be strictly increasing")]
    SupportNotIncreasing,
    #[error("vector of length {got} does not match support of size {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("labels: expected {expected} names, got {got}")]
    LabelCount { expected: usize, got: usize },
}

/// Optional letter names for both alphabets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub source: Vec<String>,
    pub reproduction: Vec<String>,
}

/// A finite rate-distortion problem: source distribution and distortion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RdProblem {
    source: Vec<f64>,
    distortion: DMatrix<f64>,
    labels: Option<Labels>,
}

/// One failed check of [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeSource { index: usize, value: f64 },
    SourceNotNormalized { sum: f64 },
    NonFiniteSource { index: usize },
    NonFiniteDistortion { row: usize, col: usize },
    NegativeDistortion { row: usize, col: usize, value: f64 },
    DuplicateColumns { first: usize, second: usize },
}

/// Non-fatal findings of [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    NearDuplicateColumns { first: usize, second: usize, distance: f64 },
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            return write!(f, "pass");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| format!("{v:?}")).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl RdProblem {
    /// Builds a problem from a source vector and row-major distortion rows
    /// (one row per source letter). Only the shape is checked here; use
    /// [`validate`] or [`RdProblem::checked`] for the value invariants.
    pub fn new(source: Vec<f64>, distortion_rows: Vec<Vec<f64>>) -> Result<Self, ProblemError> {
        if source.is_empty() || distortion_rows.is_empty() || distortion_rows[0].is_empty() {
            return Err(ProblemError::Empty);
        }
        if distortion_rows.len() != source.len() {
            return Err(ProblemError::ShapeMismatch {
                rows: distortion_rows.len(),
                source_len: source.len(),
            });
        }
        let m = distortion_rows[0].len();
        for (row, r) in distortion_rows.iter().enumerate() {
            if r.len() != m {
                return Err(ProblemError::RaggedRow { row, len: r.len(), expected: m });
            }
        }
        let n = source.len();
        let distortion = DMatrix::from_fn(n, m, |i, j| distortion_rows[i][j]);
        Ok(Self { source, distortion, labels: None })
    }

    /// Builds a problem from a source vector and an `N × M` matrix.
    pub fn from_matrix(source: Vec<f64>, distortion: DMatrix<f64>) -> Result<Self, ProblemError> {
        if source.is_empty() || distortion.ncols() == 0 {
            return Err(ProblemError::Empty);
        }
        if distortion.nrows() != source.len() {
            return Err(ProblemError::ShapeMismatch {
                rows: distortion.nrows(),
                source_len: source.len(),
            });
        }
        Ok(Self { source, distortion, labels: None })
    }

    /// [`RdProblem::new`] followed by [`validate`]; violations become an error.
    pub fn checked(source: Vec<f64>, distortion_rows: Vec<Vec<f64>>) -> Result<Self, ProblemError> {
        let p = Self::new(source, distortion_rows)?;
        let report = validate(&p);
        if !report.passed() {
            return Err(ProblemError::Invalid(report.to_string()));
        }
        Ok(p)
    }

    /// Attaches letter names.
    pub fn with_labels(mut self, labels: Labels) -> Result<Self, ProblemError> {
        if labels.source.len() != self.n() {
            return Err(ProblemError::LabelCount { expected: self.n(), got: labels.source.len() });
        }
        if labels.reproduction.len() != self.m() {
            return Err(ProblemError::LabelCount {
                expected: self.m(),
                got: labels.reproduction.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Source alphabet size `N`.
    pub fn n(&self) -> usize {
        self.source.len()
    }

    /// Reproduction alphabet size `M`.
    pub fn m(&self) -> usize {
        self.distortion.ncols()
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    /// The `N × M` distortion matrix `d(x, x̂)`.
    pub fn distortion(&self) -> &DMatrix<f64> {
        &self.distortion
    }

    /// `d(x, x̂)`.
    pub fn d(&self, x: usize, xhat: usize) -> f64 {
        self.distortion[(x, xhat)]
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    /// Largest distortion entry.
    pub fn d_max(&self) -> f64 {
        self.distortion.iter().cloned().fold(0.0, f64::max)
    }

    /// Index of a reproduction letter minimizing `E[d(X, x̂)]` (first on ties).
    pub fn argmin_expected_distortion(&self) -> usize {
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for j in 0..self.m() {
            let v: f64 = (0..self.n()).map(|x| self.source[x] * self.d(x, j)).sum();
            if v < best_val {
                best_val = v;
                best = j;
            }
        }
        best
    }

    /// Binary source with Hamming distortion; letter 1 has probability `p`.
    pub fn binary_hamming(p: f64) -> Self {
        Self::new(vec![1.0 - p, p], vec![vec![0.0, 1.0], vec![1.0, 0.0]])
            .expect("fixed shape")
    }
}

/// Checks the value invariants of a problem.
pub fn validate(problem: &RdProblem) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut sum = 0.0;
    for (i, &v) in problem.source.iter().enumerate() {
        if !v.is_finite() {
            report.violations.push(Violation::NonFiniteSource { index: i });
        } else if v < 0.0 {
            report.violations.push(Violation::NegativeSource { index: i, value: v });
        }
        sum += v;
    }
    if sum.is_finite() && (sum - 1.0).abs() > PROB_SUM_TOL {
        report.violations.push(Violation::SourceNotNormalized { sum });
    }
    let d = &problem.distortion;
    for row in 0..d.nrows() {
        for col in 0..d.ncols() {
            let v = d[(row, col)];
            if !v.is_finite() {
                report.violations.push(Violation::NonFiniteDistortion { row, col });
            } else if v < 0.0 {
                report.violations.push(Violation::NegativeDistortion { row, col, value: v });
            }
        }
    }
    for first in 0..d.ncols() {
        for second in first + 1..d.ncols() {
            let distance = (0..d.nrows())
                .map(|x| (d[(x, first)] - d[(x, second)]).abs())
                .fold(0.0, f64::max);
            if distance == 0.0 {
                report.violations.push(Violation::DuplicateColumns { first, second });
            } else if distance < NEAR_DUPLICATE_TOL {
                report.warnings.push(Warning::NearDuplicateColumns { first, second, distance });
            }
        }
    }
    report
}

/// A reproduction marginal `r(x̂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub weights: Vec<f64>,
    /// Set when the weights are a probability vector; tracked approximations
    /// carry it off.
    pub normalized: bool,
}

impl Marginal {
    /// A normalized marginal; fails unless the weights are a probability vector.
    pub fn normalized(weights: Vec<f64>) -> Result<Self, ProblemError> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(ProblemError::Invalid(format!(
                "marginal is not a probability vector (sum {sum})"
            )));
        }
        Ok(Self { weights, normalized: true })
    }

    /// A marginal without the normalization guarantee.
    pub fn unnormalized(weights: Vec<f64>) -> Self {
        Self { weights, normalized: false }
    }

    /// The uniform distribution on `m` letters.
    pub fn uniform(m: usize) -> Self {
        Self { weights: vec![1.0 / m as f64; m], normalized: true }
    }

    /// Point mass on letter `j` of `m`.
    pub fn point_mass(m: usize, j: usize) -> Self {
        let mut w = vec![0.0; m];
        w[j] = 1.0;
        Self { weights: w, normalized: true }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Smallest entry.
    pub fn min_entry(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Indices of the strictly positive entries.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }
}

/// A test channel `q(x̂|x)` stored as an `M × N` matrix whose columns are
/// conditional distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub channel: DMatrix<f64>,
}

impl Encoder {
    /// Wraps a channel, checking column sums and non-negativity.
    pub fn new(channel: DMatrix<f64>) -> Result<Self, ProblemError> {
        for x in 0..channel.ncols() {
            let col = channel.column(x);
            if col.iter().any(|&v| !(v >= 0.0)) {
                return Err(ProblemError::Invalid(format!("encoder column {x} has a negative entry")));
            }
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > PROB_SUM_TOL {
                return Err(ProblemError::Invalid(format!("encoder column {x} sums to {s}")));
            }
        }
        Ok(Self { channel })
    }

    /// `q(x̂|x)`.
    pub fn q(&self, xhat: usize, x: usize) -> f64 {
        self.channel[(xhat, x)]
    }

    pub fn m(&self) -> usize {
        self.channel.nrows()
    }

    pub fn n(&self) -> usize {
        self.channel.ncols()
    }
}

/// An ordered subset of the reproduction alphabet of a parent problem.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupportSet {
    indices: Vec<usize>,
    parent_size: usize,
}

impl SupportSet {
    /// Builds a support set; indices must be non-empty, strictly increasing
    /// and below `parent_size`.
    pub fn new(indices: Vec<usize>, parent_size: usize) -> Result<Self, ProblemError> {
        if indices.is_empty() {
            return Err(ProblemError::EmptySupport);
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProblemError::SupportNotIncreasing);
        }
        if let Some(&last) = indices.last() {
            if last >= parent_size {
                return Err(ProblemError::SupportOutOfRange { index: last, size: parent_size });
            }
        }
        Ok(Self { indices, parent_size })
    }

    /// The whole alphabet of size `m`.
    pub fn full(m: usize) -> Self {
        Self { indices: (0..m).collect(), parent_size: m }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn parent_size(&self) -> usize {
        self.parent_size
    }

    /// Parent index of the `i`-th retained letter.
    pub fn parent_index(&self, i: usize) -> usize {
        self.indices[i]
    }

    /// Composes a support of the reduced alphabet with this one, giving a
    /// support of the parent alphabet.
    pub fn compose(&self, inner: &SupportSet) -> Result<SupportSet, ProblemError> {
        if inner.parent_size != self.len() {
            return Err(ProblemError::LengthMismatch { got: inner.parent_size, expected: self.len() });
        }
        let indices = inner.indices.iter().map(|&i| self.indices[i]).collect();
        SupportSet::new(indices, self.parent_size)
    }

    /// Whether `self` is a subset of `other` (same parent alphabet).
    pub fn is_subset_of(&self, other: &SupportSet) -> bool {
        self.parent_size == other.parent_size
            && self.indices.iter().all(|i| other.indices.binary_search(i).is_ok())
    }
}

/// Deletes the reproduction letters outside `support`, keeping column order.
pub fn reduce(problem: &RdProblem, support: &SupportSet) -> Result<RdProblem, ProblemError> {
    if support.is_empty() {
        return Err(ProblemError::EmptySupport);
    }
    if support.parent_size() != problem.m() {
        return Err(ProblemError::LengthMismatch { got: support.parent_size(), expected: problem.m() });
    }
    let cols: Vec<usize> = support.indices().to_vec();
    let distortion = problem.distortion.select_columns(cols.iter());
    let labels = problem.labels.as_ref().map(|l| Labels {
        source: l.source.clone(),
        reproduction: cols.iter().map(|&c| l.reproduction[c].clone()).collect(),
    });
    Ok(RdProblem { source: problem.source.clone(), distortion, labels })
}

/// Restricts a full-alphabet vector to the letters of `support`.
pub fn restrict(values: &[f64], support: &SupportSet) -> Result<Vec<f64>, ProblemError> {
    if values.len() != support.parent_size() {
        return Err(ProblemError::LengthMismatch { got: values.len(), expected: support.parent_size() });
    }
    Ok(support.indices().iter().map(|&i| values[i]).collect())
}

/// Embeds a vector on a reduced alphabet into the full alphabet of size `m`,
/// with zeros off the support.
pub fn embed(values: &[f64], support: &SupportSet, m: usize) -> Result<Vec<f64>, ProblemError> {
    if values.len() != support.len() {
        return Err(ProblemError::LengthMismatch { got: values.len(), expected: support.len() });
    }
    if m != support.parent_size() {
        return Err(ProblemError::LengthMismatch { got: m, expected: support.parent_size() });
    }
    let mut out = vec![0.0; m];
    for (k, &i) in support.indices().iter().enumerate() {
        out[i] = values[k];
    }
    Ok(out)
}

/// [`embed`] for marginals, preserving the normalization flag.
pub fn embed_marginal(
    marginal: &Marginal,
    support: &SupportSet,
    m: usize,
) -> Result<Marginal, ProblemError> {
    Ok(Marginal { weights: embed(&marginal.weights, support, m)?, normalized: marginal.normalized })
}
