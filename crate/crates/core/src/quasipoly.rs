//! Fractional-order systems and their characteristic quasi-polynomials.
//!
//! `det(diag(s^α₁, …, s^αₙ) − A)` is expanded by cofactors with exponents
//! tracked as subsets of the order symbols, so exponent sums stay exact until
//! a slice point is bound. Powers use the principal branch, arg ∈ (−π, π].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num::complex::Complex64;
use num::rational::BigRational;
use num::traits::Zero;

use crate::error::{Error, Result};
use crate::expr::{Affine, Real};

/// Cofactor expansion visits every subset of columns; beyond this it stops
/// being a desk-scale computation.
pub const MAX_EXPANSION_DIM: usize = 8;

/// Bound exponents closer than this are merged into one term.
pub const EXPONENT_MERGE_TOL: f64 = 1e-12;

/// Float coefficients below this fraction of the largest are dropped.
pub const COEFFICIENT_DROP_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct FractionalSystem {
    params: Vec<String>,
    matrix: Vec<Vec<Real>>,
    orders: Vec<Affine>,
    forcing: Option<Vec<Real>>,
}

impl FractionalSystem {
    /// `orders` are affine in `params`; constant orders must lie in (0, 2).
    pub fn new(matrix: Vec<Vec<Real>>, orders: Vec<Affine>, params: Vec<String>) -> Result<Self> {
        let n = matrix.len();
        if n == 0 {
            return Err(Error::EmptySystem);
        }
        for (row, entries) in matrix.iter().enumerate() {
            if entries.len() != n {
                return Err(Error::NonSquare {
                    row,
                    len: entries.len(),
                    expected: n,
                });
            }
        }
        if orders.len() != n {
            return Err(Error::OrderCount {
                expected: n,
                got: orders.len(),
            });
        }
        for (index, order) in orders.iter().enumerate() {
            if order.arity() != params.len() {
                return Err(Error::InvalidSlice(format!(
                    "order {index} is expressed over {} parameters, expected {}",
                    order.arity(),
                    params.len()
                )));
            }
            if order.is_constant() {
                check_order(index, order.constant_part().value())?;
            }
        }
        Ok(FractionalSystem {
            params,
            matrix,
            orders,
            forcing: None,
        })
    }

    pub fn with_fixed_orders(matrix: Vec<Vec<Real>>, orders: Vec<Real>) -> Result<Self> {
        let orders = orders.into_iter().map(|o| Affine::constant(o, 0)).collect();
        FractionalSystem::new(matrix, orders, Vec::new())
    }

    /// Convenience constructor for float matrices and float orders.
    pub fn from_f64(matrix: &[Vec<f64>], orders: &[f64]) -> Result<Self> {
        FractionalSystem::with_fixed_orders(
            matrix
                .iter()
                .map(|row| row.iter().map(|&x| Real::float(x)).collect())
                .collect(),
            orders.iter().map(|&x| Real::float(x)).collect(),
        )
    }

    pub fn with_forcing(mut self, forcing: Vec<Real>) -> Result<Self> {
        if forcing.len() != self.dimension() {
            return Err(Error::spec(
                "forcing",
                format!("{} entries, expected {}", forcing.len(), self.dimension()),
            ));
        }
        self.forcing = Some(forcing);
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.matrix.len()
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn matrix(&self) -> &[Vec<Real>] {
        &self.matrix
    }

    pub fn matrix_f64(&self) -> Vec<Vec<f64>> {
        self.matrix
            .iter()
            .map(|row| row.iter().map(Real::value).collect())
            .collect()
    }

    pub fn orders(&self) -> &[Affine] {
        &self.orders
    }

    pub fn forcing(&self) -> Option<&[Real]> {
        self.forcing.as_deref()
    }

    pub fn has_free_orders(&self) -> bool {
        self.orders.iter().any(|o| !o.is_constant())
    }

    /// Numeric order vector at a slice point, validated against (0, 2).
    pub fn orders_at(&self, point: &[f64]) -> Result<Vec<f64>> {
        check_arity(point.len(), self.params.len())?;
        self.orders
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let v = o.eval(point);
                check_order(i, v).map(|_| v)
            })
            .collect()
    }

    /// The order-certain system at a slice point.
    pub fn at(&self, point: &[f64]) -> Result<FractionalSystem> {
        let orders = self.orders_at(point)?;
        let mut fixed = FractionalSystem::with_fixed_orders(
            self.matrix.clone(),
            orders.into_iter().map(Real::float).collect(),
        )?;
        fixed.forcing = self.forcing.clone();
        Ok(fixed)
    }

    /// Like [`FractionalSystem::at`] but keeps exact orders when the slice point is exact.
    pub fn at_exact(&self, point: &[BigRational]) -> Result<FractionalSystem> {
        check_arity(point.len(), self.params.len())?;
        let orders: Vec<Real> = self.orders.iter().map(|o| o.eval_real(point)).collect();
        let mut fixed = FractionalSystem::with_fixed_orders(self.matrix.clone(), orders)?;
        fixed.forcing = self.forcing.clone();
        Ok(fixed)
    }
}

fn check_order(index: usize, value: f64) -> Result<()> {
    if value > 0.0 && value < 2.0 {
        Ok(())
    } else {
        Err(Error::OrderOutOfRange { index, value })
    }
}

fn check_arity(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::PointArity { expected, got })
    }
}

/// One term `coef · s^exponent` with real exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub exponent: f64,
}

/// Σ c_k s^{e_k}, exponents strictly decreasing, coefficients nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiPolynomial {
    terms: Vec<Term>,
}

/// Value of a quasi-polynomial divided by `exp(log_scale)`, together with the
/// matching scaled term-magnitude sum Σ|c_k|·|s|^{e_k}.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Scaled {
    pub value: Complex64,
    pub magnitude: f64,
}

impl Scaled {
    /// |Δ(s)| / Σ|c_k||s|^{e_k}, in [0, 1].
    pub fn normalized(&self) -> Complex64 {
        self.value / self.magnitude
    }
}

impl QuasiPolynomial {
    /// Sorts, merges exponents within [`EXPONENT_MERGE_TOL`] and drops
    /// negligible coefficients.
    pub fn new(terms: impl IntoIterator<Item = Term>) -> Result<Self> {
        let mut terms: Vec<Term> = terms.into_iter().collect();
        for t in &terms {
            if !t.exponent.is_finite() || t.exponent < -EXPONENT_MERGE_TOL {
                return Err(Error::InvalidExponent(t.exponent));
            }
            if !t.coef.is_finite() {
                return Err(Error::parse(
                    &t.coef.to_string(),
                    "coefficient is not finite",
                ));
            }
        }
        terms.sort_by(|a, b| b.exponent.total_cmp(&a.exponent));
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if (last.exponent - t.exponent).abs() <= EXPONENT_MERGE_TOL => {
                    last.coef += t.coef;
                }
                _ => merged.push(Term {
                    coef: t.coef,
                    exponent: t.exponent.max(0.0),
                }),
            }
        }
        let largest = merged.iter().fold(0.0f64, |m, t| m.max(t.coef.abs()));
        merged.retain(|t| t.coef != 0.0 && t.coef.abs() > COEFFICIENT_DROP_TOL * largest);
        if merged.is_empty() {
            return Err(Error::ZeroPolynomial);
        }
        Ok(QuasiPolynomial { terms: merged })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        QuasiPolynomial::new(
            pairs
                .iter()
                .map(|&(coef, exponent)| Term { coef, exponent }),
        )
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn leading(&self) -> Term {
        self.terms[0]
    }

    pub fn min_exponent(&self) -> f64 {
        self.terms[self.terms.len() - 1].exponent
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        QuasiPolynomial::new(self.terms.iter().map(|t| Term {
            coef: t.coef * factor,
            exponent: t.exponent,
        }))
    }

    /// Divides by s^{e_min}; the result has a nonzero constant term unless it
    /// is a single monomial.
    pub fn without_origin_factor(&self) -> Self {
        let shift = self.min_exponent();
        QuasiPolynomial {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coef: t.coef,
                    exponent: if t.exponent - shift <= EXPONENT_MERGE_TOL {
                        0.0
                    } else {
                        t.exponent - shift
                    },
                })
                .collect(),
        }
    }

    /// Principal-branch evaluation: Σ c_k |s|^{e_k} e^{i e_k arg s}.
    pub fn evaluate(&self, s: Complex64) -> Result<Complex64> {
        if s.re == 0.0 && s.im == 0.0 {
            return Err(Error::EvaluateAtOrigin);
        }
        let ln_r = s.norm().ln();
        let theta = principal_arg(s);
        Ok(self
            .terms
            .iter()
            .map(|t| t.coef * Complex64::from_polar((t.exponent * ln_r).exp(), t.exponent * theta))
            .sum())
    }

    /// Evaluation at s = e^{ln_r + iθ} divided by the largest term magnitude,
    /// so that neither tiny nor huge radii overflow.
    pub(crate) fn eval_scaled(&self, ln_r: f64, theta: f64) -> Scaled {
        let shift = self
            .terms
            .iter()
            .map(|t| t.coef.abs().ln() + t.exponent * ln_r)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut value = Complex64::zero();
        let mut magnitude = 0.0;
        for t in &self.terms {
            let m = (t.coef.abs().ln() + t.exponent * ln_r - shift).exp();
            let phase = t.exponent * theta;
            let signed = m * t.coef.signum();
            value += Complex64::new(signed * phase.cos(), signed * phase.sin());
            magnitude += m;
        }
        Scaled { value, magnitude }
    }
}

/// arg(s) in (−π, π]; the negative real axis maps to +π regardless of the
/// sign of a zero imaginary part.
pub fn principal_arg(s: Complex64) -> f64 {
    let a = s.im.atan2(s.re);
    if a <= -PI {
        PI
    } else {
        a
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymTerm {
    pub coef: Affine,
    pub exponent: Affine,
}

/// Quasi-polynomial whose coefficients and exponents are affine in the slice
/// parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicQuasiPolynomial {
    params: Vec<String>,
    terms: Vec<SymTerm>,
}

impl SymbolicQuasiPolynomial {
    /// Merges identical exponent expressions and drops exactly-zero
    /// coefficients.
    pub fn new(params: Vec<String>, terms: Vec<SymTerm>) -> Result<Self> {
        for t in &terms {
            if t.coef.arity() != params.len() || t.exponent.arity() != params.len() {
                return Err(Error::InvalidSlice(
                    "term expressed over a different parameter list".into(),
                ));
            }
        }
        let mut merged: Vec<SymTerm> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.iter_mut().find(|m| m.exponent == t.exponent) {
                Some(m) => m.coef = &m.coef + &t.coef,
                None => merged.push(t),
            }
        }
        merged.retain(|t| !(t.coef.is_constant() && t.coef.constant_part().is_zero()));
        if merged.is_empty() {
            return Err(Error::ZeroPolynomial);
        }
        Ok(SymbolicQuasiPolynomial {
            params,
            terms: merged,
        })
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn terms(&self) -> &[SymTerm] {
        &self.terms
    }

    pub fn bind(&self, point: &[f64]) -> Result<QuasiPolynomial> {
        check_arity(point.len(), self.params.len())?;
        QuasiPolynomial::new(self.terms.iter().map(|t| Term {
            coef: t.coef.eval(point),
            exponent: t.exponent.eval(point),
        }))
    }

    /// Exact exponents at an exact slice point, coefficients exact where the
    /// inputs were. Needed by the rational reduction.
    pub fn bind_rational(&self, point: &[BigRational]) -> Result<Vec<(Real, BigRational)>> {
        check_arity(point.len(), self.params.len())?;
        let mut merged: Vec<(Real, BigRational)> = Vec::new();
        for t in &self.terms {
            let exponent = t.exponent.eval_exact(point).ok_or_else(|| {
                Error::NotRational(format!("exponent {}", t.exponent.render(&self.params)))
            })?;
            if exponent < BigRational::zero() {
                return Err(Error::InvalidExponent(crate::expr::big_to_f64(&exponent)));
            }
            let coef = t.coef.eval_real(point);
            match merged.iter_mut().find(|(_, e)| *e == exponent) {
                Some((c, _)) => *c = &*c + &coef,
                None => merged.push((coef, exponent)),
            }
        }
        merged.retain(|(c, _)| !c.is_zero());
        if merged.is_empty() {
            return Err(Error::ZeroPolynomial);
        }
        merged.sort_by(|a, b| b.1.cmp(&a.1));
        Ok(merged)
    }

    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        for t in &self.terms {
            let exp = t.exponent.render(&self.params);
            let coef = t.coef.render(&self.params);
            parts.push(if exp == "0" {
                format!("({coef})")
            } else {
                format!("({coef})*s^({exp})")
            });
        }
        parts.join(" + ")
    }
}

/// Expands Δ(s) = det(diag(s^{α_i}) − A) by recursive cofactors.
pub fn expand_characteristic(system: &FractionalSystem) -> Result<SymbolicQuasiPolynomial> {
    let n = system.dimension();
    if n > MAX_EXPANSION_DIM {
        return Err(Error::DimensionTooLarge {
            dimension: n,
            cap: MAX_EXPANSION_DIM,
        });
    }
    let mut memo: BTreeMap<u16, BTreeMap<u16, Real>> = BTreeMap::new();
    let full: u16 = ((1u32 << n) - 1) as u16;
    let by_subset = minor(system.matrix(), 0, full, &mut memo);

    let k = system.params().len();
    let mut terms = Vec::new();
    // larger subsets first so the leading s^{Σα} term comes first
    let mut subsets: Vec<(&u16, &Real)> = by_subset.iter().collect();
    subsets.sort_by_key(|(mask, _)| (std::cmp::Reverse(mask.count_ones()), **mask));
    for (mask, coef) in subsets {
        if coef.is_zero() {
            continue;
        }
        let mut exponent = Affine::constant(Real::zero(), k);
        for (i, order) in system.orders().iter().enumerate() {
            if mask & (1 << i) != 0 {
                exponent = &exponent + order;
            }
        }
        terms.push(SymTerm {
            coef: Affine::constant(coef.clone(), k),
            exponent,
        });
    }
    SymbolicQuasiPolynomial::new(system.params().to_vec(), terms)
}

/// Determinant of the minor on rows `row..n` and the column set `cols`, as a
/// map from "which diagonal s^{α_i} factors were taken" to coefficient.
fn minor(
    a: &[Vec<Real>],
    row: usize,
    cols: u16,
    memo: &mut BTreeMap<u16, BTreeMap<u16, Real>>,
) -> BTreeMap<u16, Real> {
    if cols == 0 {
        return BTreeMap::from([(0u16, Real::one())]);
    }
    if let Some(hit) = memo.get(&cols) {
        return hit.clone();
    }
    let mut result: BTreeMap<u16, Real> = BTreeMap::new();
    let mut position = 0usize;
    for col in 0..a.len() {
        let bit = 1u16 << col;
        if cols & bit == 0 {
            continue;
        }
        let sign_negative = position % 2 == 1;
        position += 1;
        let sub = minor(a, row + 1, cols & !bit, memo);
        // entry of diag(s^α) − A at (row, col)
        let mut entry: Vec<(u16, Real)> = vec![(0, -&a[row][col])];
        if row == col {
            entry.push((1 << row, Real::one()));
        }
        for (mask, coef) in &entry {
            if coef.is_zero() {
                continue;
            }
            for (sub_mask, sub_coef) in &sub {
                let mut product = coef * sub_coef;
                if sign_negative {
                    product = -&product;
                }
                let slot = result.entry(mask | sub_mask).or_insert_with(Real::zero);
                *slot = &*slot + &product;
            }
        }
    }
    memo.insert(cols, result.clone());
    result
}
