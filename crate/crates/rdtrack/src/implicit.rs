//! Implicit derivatives `dˡx/dβˡ` of a root of `F(x, β) = 0`, computed
//! bottom-up from derivative tensors via the integer-partition recursion,
//! together with their Jacobians in `x` for Lipschitz estimation.
//!
//! At order `l` the unknown solves `D_x F[x_l] = −Σ coef · D^m_{β^b, x^{m−b}} F[…]`,
//! the sum running over the partitions of `l` and the number `b` of unit parts
//! taken as β-differentiations, except the pair giving `D_x F[x_l]` itself.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use thiserror::Error;

use crate::combinatorics::{factorial_table, recursion_terms, RecursionTerm};
use crate::linalg::{norm_1, norm_inf, nullity};
use crate::tensors::{DerivativeTensor, TensorProvider};

/// Reciprocal condition number below which the Jacobian counts as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImplicitError {
    #[error("Jacobian is singular (reciprocal condition {rcond:.3e}, null space dimension {nullity})")]
    SingularJacobian { rcond: f64, nullity: usize },
    #[error("derivative order must be at least 1")]
    ZeroOrder,
    #[error("derivatives up to order {needed} required, only {available} available")]
    MissingOrders { needed: usize, available: usize },
}

/// Implicit derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitDerivSet {
    pub state: DVector<f64>,
    pub beta: f64,
    /// `derivs[k − 1] = dᵏx/dβᵏ`.
    pub derivs: Vec<DVector<f64>>,
    /// Reciprocal 1-norm condition number of `D_x F`.
    pub rcond: f64,
    /// `‖D_x F[x_k] + RHS_k‖∞` per order.
    pub residuals: Vec<f64>,
    /// `‖RHS_k‖∞` per order.
    pub rhs_norms: Vec<f64>,
}

impl ImplicitDerivSet {
    /// Highest order present.
    pub fn order(&self) -> usize {
        self.derivs.len()
    }

    /// `dᵏx/dβᵏ` for `k ≥ 1`.
    pub fn deriv(&self, k: usize) -> &DVector<f64> {
        &self.derivs[k - 1]
    }
}

/// A polynomial in `Δβ` with vector coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorPolynomial {
    /// `coeffs[k] = dᵏx/dβᵏ / k!`, with `coeffs[0]` the base value.
    pub coeffs: Vec<DVector<f64>>,
}

impl TaylorPolynomial {
    /// Degree of the polynomial.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Value at `Δβ` (Horner); `Δβ = 0` returns the base value exactly.
    pub fn eval(&self, dbeta: f64) -> DVector<f64> {
        if dbeta == 0.0 {
            return self.coeffs[0].clone();
        }
        let mut acc = self.coeffs.last().unwrap().clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = acc * dbeta + c;
        }
        acc
    }
}

/// `Σ_{k≤L} Δβᵏ/k! · dᵏx/dβᵏ` around `base`.
pub fn taylor_polynomial(set: &ImplicitDerivSet, base: &DVector<f64>, order: usize) -> Result<TaylorPolynomial, ImplicitError> {
    if order > set.order() {
        return Err(ImplicitError::MissingOrders { needed: order, available: set.order() });
    }
    let fact = factorial_table(order);
    let mut coeffs = vec![base.clone()];
    for k in 1..=order {
        coeffs.push(set.deriv(k) / fact[k]);
    }
    Ok(TaylorPolynomial { coeffs })
}

/// State-argument part indices of a recursion term: `m₁ − b` copies of 1,
/// then `mᵢ` copies of each further part.
fn state_parts(term: &RecursionTerm) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, (&p, &m)) in term.partition.parts.iter().zip(&term.partition.multiplicities).enumerate() {
        let copies = if i == 0 && p == 1 { m - term.b } else { m };
        out.extend(std::iter::repeat_n(p, copies));
    }
    out
}

/// Evaluates implicit derivatives at the provider's point, memoizing
/// tensors by `(b, k)` and reusing one factorization of `D_x F`.
pub struct ImplicitEngine<'a, P: TensorProvider + ?Sized> {
    provider: &'a P,
    lu: LU<f64, Dyn, Dyn>,
    inverse: DMatrix<f64>,
    rcond: f64,
    tensors: RefCell<HashMap<(usize, usize), Rc<DerivativeTensor>>>,
    queries: RefCell<Vec<(usize, usize)>>,
    terms_per_order: RefCell<Vec<usize>>,
    derivs: RefCell<Vec<DVector<f64>>>,
    residuals: RefCell<Vec<f64>>,
    rhs_norms: RefCell<Vec<f64>>,
    jacobians: RefCell<Vec<DMatrix<f64>>>,
}

impl<'a, P: TensorProvider + ?Sized> ImplicitEngine<'a, P> {
    /// Factorizes `D_x F`; fails when its reciprocal condition number is
    /// below [`SINGULAR_RCOND`].
    pub fn new(provider: &'a P) -> Result<Self, ImplicitError> {
        let jac = provider.jacobian();
        let lu = jac.clone().lu();
        let inverse = lu.try_inverse();
        let rcond = match &inverse {
            Some(inv) => {
                let v = 1.0 / (norm_1(&jac) * norm_1(inv));
                if v.is_finite() { v } else { 0.0 }
            }
            None => 0.0,
        };
        if !(rcond >= SINGULAR_RCOND) {
            return Err(ImplicitError::SingularJacobian { rcond, nullity: nullity(&jac, 1e-10).max(1) });
        }
        Ok(Self {
            provider,
            lu,
            inverse: inverse.expect("checked above"),
            rcond,
            tensors: RefCell::new(HashMap::new()),
            queries: RefCell::new(Vec::new()),
            terms_per_order: RefCell::new(Vec::new()),
            derivs: RefCell::new(Vec::new()),
            residuals: RefCell::new(Vec::new()),
            rhs_norms: RefCell::new(Vec::new()),
            jacobians: RefCell::new(Vec::new()),
        })
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    /// `(D_x F)⁻¹`.
    pub fn jacobian_inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Memoized tensor; every request is logged.
    pub fn tensor(&self, b: usize, k: usize) -> Rc<DerivativeTensor> {
        self.queries.borrow_mut().push((b, k));
        if let Some(t) = self.tensors.borrow().get(&(b, k)) {
            return Rc::clone(t);
        }
        let t = Rc::new(self.provider.tensor(b, k));
        self.tensors.borrow_mut().insert((b, k), Rc::clone(&t));
        t
    }

    /// Every `(b, k)` tensor request made while assembling right-hand sides.
    pub fn tensor_queries(&self) -> Vec<(usize, usize)> {
        self.queries.borrow().clone()
    }

    /// Distinct `(b, k)` tensors computed so far.
    pub fn computed_tensors(&self) -> usize {
        self.tensors.borrow().len()
    }

    /// Number of right-hand-side summands evaluated at each order.
    pub fn terms_per_order(&self) -> Vec<usize> {
        self.terms_per_order.borrow().clone()
    }

    /// Computes derivatives up to `order` (continuing from those already known).
    pub fn derivatives(&self, order: usize) -> Result<ImplicitDerivSet, ImplicitError> {
        if order == 0 {
            return Err(ImplicitError::ZeroOrder);
        }
        while self.derivs.borrow().len() < order {
            let l = self.derivs.borrow().len() + 1;
            let dim = self.provider.dim();
            let mut rhs = DVector::zeros(dim);
            let terms = recursion_terms(l).expect("l >= 1");
            for term in &terms {
                let parts = state_parts(term);
                let t = self.tensor(term.b, parts.len());
                let value = {
                    let derivs = self.derivs.borrow();
                    let args: Vec<&DVector<f64>> = parts.iter().map(|&p| &derivs[p - 1]).collect();
                    t.apply(&args)
                };
                rhs.axpy(term.coefficient, &value, 1.0);
            }
            self.terms_per_order.borrow_mut().push(terms.len());
            let x = self.lu.solve(&(-&rhs)).ok_or(ImplicitError::SingularJacobian { rcond: self.rcond, nullity: 1 })?;
            let jac = self.provider.jacobian();
            let residual = (&jac * &x + &rhs).amax();
            self.residuals.borrow_mut().push(residual);
            self.rhs_norms.borrow_mut().push(rhs.amax());
            self.derivs.borrow_mut().push(x);
        }
        Ok(ImplicitDerivSet {
            state: self.provider.state().clone(),
            beta: self.provider.beta(),
            derivs: self.derivs.borrow()[..order].to_vec(),
            rcond: self.rcond,
            residuals: self.residuals.borrow()[..order].to_vec(),
            rhs_norms: self.rhs_norms.borrow()[..order].to_vec(),
        })
    }

    /// `D_x(dˡx/dβˡ)`, the Jacobian of the order-`l` derivative as a function
    /// of the base state. Needs tensors of total order up to `l + 1`.
    pub fn derivative_jacobian(&self, l: usize) -> Result<DMatrix<f64>, ImplicitError> {
        if l == 0 {
            return Err(ImplicitError::ZeroOrder);
        }
        self.derivatives(l)?;
        while self.jacobians.borrow().len() < l {
            let lp = self.jacobians.borrow().len() + 1;
            let dim = self.provider.dim();
            let derivs = self.derivs.borrow().clone();
            let mut s = self.tensor(0, 2).apply_partial(&[&derivs[lp - 1]]);
            for term in recursion_terms(lp).expect("lp >= 1") {
                let parts = state_parts(&term);
                let k = parts.len();
                let args: Vec<&DVector<f64>> = parts.iter().map(|&p| &derivs[p - 1]).collect();
                s += self.tensor(term.b, k + 1).apply_partial(&args) * term.coefficient;
                let mut distinct = parts.clone();
                distinct.dedup();
                for &p in &distinct {
                    let mult = parts.iter().filter(|&&q| q == p).count();
                    let pos = parts.iter().position(|&q| q == p).unwrap();
                    let rest: Vec<&DVector<f64>> =
                        args.iter().enumerate().filter(|&(i, _)| i != pos).map(|(_, v)| *v).collect();
                    let partial = self.tensor(term.b, k).apply_partial(&rest);
                    let jp = &self.jacobians.borrow()[p - 1];
                    s += partial * jp * (term.coefficient * mult as f64);
                }
            }
            let d = -(&self.inverse * s);
            debug_assert_eq!(d.nrows(), dim);
            self.jacobians.borrow_mut().push(d);
        }
        Ok(self.jacobians.borrow()[l - 1].clone())
    }

    /// `‖Σ_{k≤L} Δβ^{k−1}/k! · D_x(dᵏx/dβᵏ)‖∞`.
    pub fn lipschitz_estimate(&self, order: usize, dbeta: f64) -> Result<f64, ImplicitError> {
        let fact = factorial_table(order);
        let dim = self.provider.dim();
        let mut sum = DMatrix::zeros(dim, dim);
        for k in 1..=order {
            let jk = self.derivative_jacobian(k)?;
            sum += jk * (dbeta.powi(k as i32 - 1) / fact[k]);
        }
        Ok(norm_inf(&sum))
    }
}

/// Implicit derivatives of orders `1..=order` at the provider's point.
pub fn implicit_derivatives<P: TensorProvider + ?Sized>(provider: &P, order: usize) -> Result<ImplicitDerivSet, ImplicitError> {
    ImplicitEngine::new(provider)?.derivatives(order)
}

/// `D_x(dˡx/dβˡ)` at the provider's point.
pub fn derivative_jacobian<P: TensorProvider + ?Sized>(provider: &P, l: usize) -> Result<DMatrix<f64>, ImplicitError> {
    ImplicitEngine::new(provider)?.derivative_jacobian(l)
}

/// Local Lipschitz estimate of the order-`L` Taylor step of size `Δβ`.
pub fn lipschitz_estimate<P: TensorProvider + ?Sized>(provider: &P, order: usize, dbeta: f64) -> Result<f64, ImplicitError> {
    ImplicitEngine::new(provider)?.lipschitz_estimate(order, dbeta)
}
