//! Sparse integer polynomials in `x₀, x₁, …`, the derivation `d̄`, and the
//! family `P_k` encoding repeated β-derivatives of the encoder.
//!
//! `d̄x₀ = 0`, `d̄x_k = x₁x_k − x_{k+1}` extended by linearity and the product
//! rule; `P₀ = 1` and `P_{k+1} = (x₁ − x₀)P_k + d̄P_k`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

/// Environment variable naming a directory for serialized `P_k` files.
pub const PK_CACHE_ENV: &str = "RDTRACK_PK_CACHE_DIR";

#[derive(Debug, Error)]
pub enum SymPolyError {
    #[error("no value supplied for variable x{0}")]
    MissingVariable(usize),
    #[error("cannot parse monomial line {line:?}: {reason}")]
    Parse { line: String, reason: String },
    #[error("cache I/O error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Exponent vector: `(variable, exponent)` pairs with increasing variable
/// index and positive exponents.
pub type Monomial = Vec<(usize, u32)>;

/// A polynomial with integer coefficients; zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymbolicPolynomial {
    terms: BTreeMap<Monomial, i128>,
}

fn mono_mul(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

impl SymbolicPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The constant `c`.
    pub fn constant(c: i128) -> Self {
        let mut p = Self::zero();
        p.add_term(Vec::new(), c);
        p
    }

    pub fn one() -> Self {
        Self::constant(1)
    }

    /// The variable `x_i`.
    pub fn var(i: usize) -> Self {
        let mut p = Self::zero();
        p.add_term(vec![(i, 1)], 1);
        p
    }

    /// Builds a polynomial from `(coefficient, monomial)` pairs; like terms
    /// are merged and the monomials canonicalized.
    pub fn from_terms(terms: impl IntoIterator<Item = (i128, Monomial)>) -> Self {
        let mut p = Self::zero();
        for (c, m) in terms {
            let mut canon: Monomial = Vec::new();
            for (v, e) in m {
                if e > 0 {
                    canon = mono_mul(&canon, &vec![(v, e)]);
                }
            }
            p.add_term(canon, c);
        }
        p
    }

    fn add_term(&mut self, mono: Monomial, coeff: i128) {
        if coeff == 0 {
            return;
        }
        let entry = self.terms.entry(mono);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + coeff;
                if s == 0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    /// Monomials with their coefficients, in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, i128)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    /// Coefficient of a canonical monomial.
    pub fn coefficient(&self, mono: &Monomial) -> i128 {
        self.terms.get(mono).copied().unwrap_or(0)
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; zero for constants and for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.iter().map(|&(_, e)| e).sum()).max().unwrap_or(0)
    }

    /// Largest variable index appearing, if any.
    pub fn max_variable(&self) -> Option<usize> {
        self.terms.keys().filter_map(|m| m.last().map(|&(v, _)| v)).max()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1))
    }

    pub fn scale(&self, k: i128) -> Self {
        let mut out = Self::zero();
        for (m, &c) in &self.terms {
            out.add_term(m.clone(), c * k);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(mono_mul(ma, mb), ca * cb);
            }
        }
        out
    }

    /// Applies `d̄`.
    pub fn derive(&self) -> Self {
        let mut out = Self::zero();
        for (mono, &c) in &self.terms {
            for (pos, &(v, e)) in mono.iter().enumerate() {
                if v == 0 {
                    continue;
                }
                // Monomial with x_v^{e-1}.
                let mut rest: Monomial = mono.clone();
                if e == 1 {
                    rest.remove(pos);
                } else {
                    rest[pos].1 = e - 1;
                }
                let coeff = c * i128::from(e);
                // d̄x_v = x₁x_v − x_{v+1}
                let plus = mono_mul(&mono_mul(&rest, &vec![(1, 1)]), &vec![(v, 1)]);
                let minus = mono_mul(&rest, &vec![(v + 1, 1)]);
                out.add_term(plus, coeff);
                out.add_term(minus, -coeff);
            }
        }
        out
    }

    /// Evaluates at `values[i] = x_i`, summing monomials in canonical order.
    pub fn evaluate(&self, values: &[f64]) -> Result<f64, SymPolyError> {
        if let Some(v) = self.max_variable() {
            if v >= values.len() {
                return Err(SymPolyError::MissingVariable(v));
            }
        }
        let mut sum = 0.0;
        for (mono, &c) in &self.terms {
            let mut t = c as f64;
            for &(v, e) in mono {
                t *= values[v].powi(e as i32);
            }
            sum += t;
        }
        Ok(sum)
    }

    /// One line per monomial: `coefficient var:exp var:exp …`.
    pub fn to_cache_string(&self) -> String {
        let mut s = String::new();
        for (mono, &c) in &self.terms {
            s.push_str(&c.to_string());
            for &(v, e) in mono {
                s.push_str(&format!(" {v}:{e}"));
            }
            s.push('\n');
        }
        s
    }

    /// Parses the output of [`SymbolicPolynomial::to_cache_string`].
    pub fn from_cache_string(text: &str) -> Result<Self, SymPolyError> {
        let mut terms = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let err = |reason: &str| SymPolyError::Parse { line: line.to_string(), reason: reason.into() };
            let mut it = line.split_whitespace();
            let c: i128 = it.next().ok_or_else(|| err("empty"))?.parse().map_err(|_| err("coefficient"))?;
            let mut mono = Vec::new();
            for pair in it {
                let (v, e) = pair.split_once(':').ok_or_else(|| err("expected var:exp"))?;
                let v: usize = v.parse().map_err(|_| err("variable"))?;
                let e: u32 = e.parse().map_err(|_| err("exponent"))?;
                mono.push((v, e));
            }
            terms.push((c, mono));
        }
        Ok(Self::from_terms(terms))
    }
}

impl fmt::Display for SymbolicPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (mono, &c) in &self.terms {
            let sign = if c < 0 { "-" } else if first { "" } else { "+" };
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{sign}")?;
            if !first {
                write!(f, " ")?;
            }
            let a = c.unsigned_abs();
            if a != 1 || mono.is_empty() {
                write!(f, "{a}")?;
            }
            for &(v, e) in mono {
                if e == 1 {
                    write!(f, "x{v}")?;
                } else {
                    write!(f, "x{v}^{e}")?;
                }
            }
            first = false;
        }
        Ok(())
    }
}

/// `d̄p`.
pub fn derive(p: &SymbolicPolynomial) -> SymbolicPolynomial {
    p.derive()
}

/// Evaluates `p` at `values[i] = x_i`.
pub fn evaluate(p: &SymbolicPolynomial, values: &[f64]) -> Result<f64, SymPolyError> {
    p.evaluate(values)
}

fn p_cache() -> &'static Mutex<Arc<Vec<SymbolicPolynomial>>> {
    static CACHE: OnceLock<Mutex<Arc<Vec<SymbolicPolynomial>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(Arc::new(vec![SymbolicPolynomial::one()])))
}

/// Next member of the family: `(x₁ − x₀)P + d̄P`.
pub fn next_p(p: &SymbolicPolynomial) -> SymbolicPolynomial {
    let factor = SymbolicPolynomial::var(1).sub(&SymbolicPolynomial::var(0));
    factor.mul(p).add(&p.derive())
}

/// `P₀, …, P_{k_max}`, generated once per process and extended on demand.
/// When [`PK_CACHE_ENV`] names a directory, missing orders are read from it
/// if present and newly generated ones are written to it.
pub fn generate_p(k_max: usize) -> Arc<Vec<SymbolicPolynomial>> {
    let mut guard = p_cache().lock().unwrap_or_else(|e| e.into_inner());
    if guard.len() > k_max {
        return Arc::clone(&guard);
    }
    let dir = std::env::var_os(PK_CACHE_ENV).map(PathBuf::from);
    let mut polys: Vec<SymbolicPolynomial> = guard.as_ref().clone();
    while polys.len() <= k_max {
        let k = polys.len();
        let loaded = dir.as_deref().and_then(|d| load_cached(d, k).ok());
        let next = match loaded {
            Some(p) => p,
            None => {
                let p = next_p(&polys[k - 1]);
                if let Some(d) = dir.as_deref() {
                    // Cache writes are best effort.
                    let _ = save_cached(d, k, &p);
                }
                p
            }
        };
        polys.push(next);
    }
    *guard = Arc::new(polys);
    Arc::clone(&guard)
}

/// Generates `P₀, …, P_{k_max}` without touching the process cache or disk.
pub fn generate_p_uncached(k_max: usize) -> Vec<SymbolicPolynomial> {
    let mut polys = vec![SymbolicPolynomial::one()];
    while polys.len() <= k_max {
        let p = next_p(polys.last().unwrap());
        polys.push(p);
    }
    polys
}

fn cache_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("P_{k}.txt"))
}

/// Reads `P_k` from `dir`.
pub fn load_cached(dir: &Path, k: usize) -> Result<SymbolicPolynomial, SymPolyError> {
    let path = cache_path(dir, k);
    let text = std::fs::read_to_string(&path).map_err(|source| SymPolyError::Io { path, source })?;
    SymbolicPolynomial::from_cache_string(&text)
}

/// Writes `P_k` to `dir`, creating it if needed.
pub fn save_cached(dir: &Path, k: usize, p: &SymbolicPolynomial) -> Result<(), SymPolyError> {
    std::fs::create_dir_all(dir).map_err(|source| SymPolyError::Io { path: dir.to_path_buf(), source })?;
    let path = cache_path(dir, k);
    std::fs::write(&path, p.to_cache_string()).map_err(|source| SymPolyError::Io { path, source })
}
