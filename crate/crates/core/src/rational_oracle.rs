//! LCM reduction of rational-order systems to ordinary polynomials in λ,
//! where s = λ^m, and the resulting sector test |arg λ| > π/(2m).
//!
//! This path shares nothing with the contour counter beyond the symbolic
//! expansion, which makes it usable as an independent oracle.

use std::f64::consts::PI;

use num::complex::Complex64;
use num::integer::Integer;
use num::rational::BigRational;
use num::traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::expr::Real;
use crate::quasipoly::{expand_characteristic, FractionalSystem};
use crate::rhp_counter::{StabilityVerdict, VerdictKind};

/// Largest polynomial degree handed to the root finder.
pub const MAX_ROOT_DEGREE: usize = 4000;

/// Half-width of the marginal band around the sector edge, radians.
pub const DEFAULT_TAU_ARG: f64 = 1e-9;

/// Largest admissible relative backward error per root.
pub const BACKWARD_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 800;

/// Orders v_i/u_i in lowest terms and m = lcm(u_i).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalOrderSpec {
    pub orders: Vec<(u64, u64)>,
    pub m: u64,
}

impl RationalOrderSpec {
    pub fn from_system(system: &FractionalSystem) -> Result<Self> {
        let mut orders = Vec::with_capacity(system.dimension());
        for (i, order) in system.orders().iter().enumerate() {
            if !order.is_constant() {
                return Err(Error::NotRational(format!("order {i} is still symbolic")));
            }
            let q = order.constant_part().as_exact().ok_or_else(|| {
                Error::NotRational(format!("order {i} = {}", order.constant_part()))
            })?;
            let v = q
                .numer()
                .to_u64()
                .ok_or_else(|| Error::NotRational(q.to_string()))?;
            let u = q
                .denom()
                .to_u64()
                .ok_or_else(|| Error::NotRational(q.to_string()))?;
            orders.push((v, u));
        }
        let m = orders.iter().fold(1u64, |acc, &(_, u)| acc.lcm(&u));
        Ok(RationalOrderSpec { orders, m })
    }

    /// Σ v_i·(m/u_i), the degree of the reduced polynomial.
    pub fn degree(&self) -> u64 {
        self.orders.iter().map(|&(v, u)| v * (self.m / u)).sum()
    }
}

/// Dense polynomial Σ coeffs[k]·λ^k in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegerExponentPolynomial {
    coeffs: Vec<f64>,
}

impl IntegerExponentPolynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        IntegerExponentPolynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::zero(), |acc, &c| acc * z + c)
    }

    /// |p(z)| / Σ|c_k||z|^k.
    pub fn backward_error(&self, z: Complex64) -> f64 {
        let (value, scale) = eval_with_scale(&self.coeffs, z);
        value.norm() / scale
    }
}

/// Reduced polynomial together with the substitution exponent m.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub m: u64,
    pub polynomial: IntegerExponentPolynomial,
}

/// Builds det(diag(λ^{mα_i}) − A) for an all-rational order vector.
pub fn reduce(system: &FractionalSystem) -> Result<Reduction> {
    let spec = RationalOrderSpec::from_system(system)?;
    let sym = expand_characteristic(system)?;
    let terms = sym.bind_rational(&[])?;
    reduce_with_m(&terms, spec.m)
}

/// Reduction of an exact-exponent term list; m is the lcm of the exponent
/// denominators.
pub fn reduce_terms(terms: &[(Real, BigRational)]) -> Result<Reduction> {
    let m = terms
        .iter()
        .map(|(_, e)| e.denom().to_u64())
        .try_fold(1u64, |acc, d| d.map(|d| acc.lcm(&d)))
        .ok_or_else(|| Error::NotRational("exponent denominator overflow".into()))?;
    reduce_with_m(terms, m)
}

fn reduce_with_m(terms: &[(Real, BigRational)], m: u64) -> Result<Reduction> {
    let mut indexed = Vec::with_capacity(terms.len());
    let mut degree = 0usize;
    for (coef, exponent) in terms {
        let scaled = exponent * BigRational::from_integer(m.into());
        if !scaled.is_integer() {
            return Err(Error::NotRational(format!(
                "m·{exponent} is not an integer"
            )));
        }
        let k = scaled
            .to_integer()
            .to_usize()
            .ok_or_else(|| Error::NotRational(format!("exponent {exponent} too large")))?;
        if k > 16 * MAX_ROOT_DEGREE {
            return Err(Error::DegreeTooLarge {
                degree: k,
                cap: MAX_ROOT_DEGREE,
            });
        }
        degree = degree.max(k);
        indexed.push((k, coef.clone()));
    }
    // like terms were merged exactly upstream; sum again in case two
    // exponents coincide after scaling
    let mut exact: Vec<Real> = vec![Real::zero(); degree + 1];
    for (k, c) in indexed {
        exact[k] = &exact[k] + &c;
    }
    let coeffs = exact.iter().map(Real::value).collect();
    Ok(Reduction {
        m,
        polynomial: IntegerExponentPolynomial::new(coeffs),
    })
}

/// All roots with multiplicity by Aberth–Ehrlich iteration started from the
/// Newton-polygon radii of the coefficients.
pub fn polynomial_roots(poly: &IntegerExponentPolynomial) -> Result<Vec<Complex64>> {
    let degree = poly.degree();
    if degree == 0 {
        return Ok(Vec::new());
    }
    if degree > MAX_ROOT_DEGREE {
        return Err(Error::DegreeTooLarge {
            degree,
            cap: MAX_ROOT_DEGREE,
        });
    }
    let coeffs = poly.coeffs();
    let zeros = coeffs.iter().take_while(|&&c| c == 0.0).count();
    let reduced = &coeffs[zeros..];
    let mut roots = vec![Complex64::zero(); zeros];
    roots.extend(aberth(reduced)?);
    Ok(roots)
}

fn aberth(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let n = coeffs.len() - 1;
    match n {
        0 => return Ok(Vec::new()),
        1 => return Ok(vec![Complex64::new(-coeffs[0] / coeffs[1], 0.0)]),
        _ => {}
    }
    let mut z = initial_guesses(coeffs);
    let mut done = vec![false; n];
    let eps = f64::EPSILON;
    let stop = 4.0 * eps * (n as f64).max(8.0);
    for sweep in 0..MAX_SWEEPS {
        let mut all_done = true;
        for i in 0..n {
            if done[i] {
                continue;
            }
            let (ratio, backward) = newton_ratio(coeffs, z[i]);
            if backward <= stop {
                done[i] = true;
                continue;
            }
            all_done = false;
            let mut repulsion = Complex64::zero();
            for (j, zj) in z.iter().enumerate() {
                if j != i {
                    repulsion += (z[i] - zj).inv();
                }
            }
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.is_finite() {
                z[i] -= step;
                if step.norm() <= eps * z[i].norm() {
                    done[i] = true;
                }
            } else {
                // coincident approximations; nudge apart
                z[i] *= Complex64::from_polar(1.0 + 1e-8, 1e-3 * (i as f64 + 1.0));
            }
        }
        if all_done || sweep + 1 == MAX_SWEEPS {
            break;
        }
    }
    let worst = z
        .iter()
        .map(|&r| eval_with_scale(coeffs, r))
        .map(|(v, s)| v.norm() / s)
        .fold(0.0f64, f64::max);
    if !(worst <= BACKWARD_TOL) {
        return Err(Error::NoConvergence {
            iterations: MAX_SWEEPS,
            worst,
        });
    }
    Ok(z)
}

/// p(z) and Σ|c_k||z|^k, evaluated through the reversed polynomial when
/// |z| > 1 so that neither overflows; both are off by the same factor |z|^n.
fn eval_with_scale(coeffs: &[f64], z: Complex64) -> (Complex64, f64) {
    let r = z.norm();
    if r <= 1.0 {
        let mut v = Complex64::zero();
        let mut s = 0.0;
        for &c in coeffs.iter().rev() {
            v = v * z + c;
            s = s * r + c.abs();
        }
        (v, s)
    } else {
        let y = z.inv();
        let ry = 1.0 / r;
        let mut v = Complex64::zero();
        let mut s = 0.0;
        for &c in coeffs {
            v = v * y + c;
            s = s * ry + c.abs();
        }
        (v, s)
    }
}

/// Newton correction p(z)/p'(z) and the relative backward error at z.
fn newton_ratio(coeffs: &[f64], z: Complex64) -> (Complex64, f64) {
    let n = coeffs.len() - 1;
    let r = z.norm();
    if r <= 1.0 {
        let mut p = Complex64::zero();
        let mut dp = Complex64::zero();
        let mut s = 0.0;
        for &c in coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
            s = s * r + c.abs();
        }
        (p / dp, p.norm() / s)
    } else {
        // p(z) = z^n q(y), y = 1/z; p'(z) = z^{n−1} (n q(y) − y q'(y))
        let y = z.inv();
        let ry = 1.0 / r;
        let mut q = Complex64::zero();
        let mut dq = Complex64::zero();
        let mut s = 0.0;
        for &c in coeffs {
            dq = dq * y + q;
            q = q * y + c;
            s = s * ry + c.abs();
        }
        let ratio = z * q / (q * n as f64 - y * dq);
        (ratio, q.norm() / s)
    }
}

/// Points on circles whose radii come from the upper convex hull of
/// (k, ln|c_k|), the usual Newton-polygon start for simultaneous iteration.
fn initial_guesses(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let points: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(k, c)| (k, c.abs().ln()))
        .collect();
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for p in points {
        while hull.len() >= 2 {
            let (k1, y1) = hull[hull.len() - 2];
            let (k2, y2) = hull[hull.len() - 1];
            // drop the middle point unless it lies strictly above the chord
            let cross = (k2 as f64 - k1 as f64) * (p.1 - y1) - (y2 - y1) * (p.0 as f64 - k1 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut guesses = Vec::with_capacity(n);
    for (segment, w) in hull.windows(2).enumerate() {
        let (k1, y1) = w[0];
        let (k2, y2) = w[1];
        let count = k2 - k1;
        let radius = ((y1 - y2) / count as f64).exp();
        let offset = 0.7 + 2.0 * PI * segment as f64 / hull.len() as f64;
        for j in 0..count {
            let angle = 2.0 * PI * j as f64 / count as f64 + offset / count as f64 + 0.4;
            guesses.push(Complex64::from_polar(radius, angle));
        }
    }
    guesses
}

/// Verdict report of the rational reduction.
#[derive(Clone, Debug)]
pub struct OracleReport {
    pub m: u64,
    pub degree: usize,
    pub roots: Vec<Complex64>,
    pub verdict: StabilityVerdict,
}

/// Sector classification of reduced roots. Roots at λ = 0 correspond to the
/// branch point s = 0 and are not counted, matching the contour counter.
pub fn classify_roots(roots: &[Complex64], m: u64, tau_arg: f64) -> StabilityVerdict {
    let edge = PI / (2.0 * m as f64);
    let mut unstable = 0usize;
    let mut marginal = false;
    let mut margin = f64::INFINITY;
    for &root in roots {
        if root.norm() == 0.0 {
            continue;
        }
        let a = root.arg().abs();
        margin = margin.min((a - edge).abs());
        if (a - edge).abs() <= tau_arg {
            marginal = true;
        } else if a < edge {
            unstable += 1;
        }
    }
    let kind = if marginal {
        VerdictKind::Marginal
    } else if unstable > 0 {
        VerdictKind::Unstable(unstable)
    } else {
        VerdictKind::Stable
    };
    StabilityVerdict {
        kind,
        margin: if margin.is_finite() { margin } else { PI },
    }
}

pub fn oracle_from_reduction(reduction: Reduction, tau_arg: f64) -> Result<OracleReport> {
    let roots = polynomial_roots(&reduction.polynomial)?;
    let verdict = classify_roots(&roots, reduction.m, tau_arg);
    Ok(OracleReport {
        m: reduction.m,
        degree: reduction.polynomial.degree(),
        roots,
        verdict,
    })
}

pub fn oracle_verdict(system: &FractionalSystem, tau_arg: f64) -> Result<OracleReport> {
    oracle_from_reduction(reduce(system)?, tau_arg)
}

pub fn oracle_verdict_terms(terms: &[(Real, BigRational)], tau_arg: f64) -> Result<OracleReport> {
    oracle_from_reduction(reduce_terms(terms)?, tau_arg)
}
