//! Exact-or-float scalars and affine expressions over named slice parameters.
//!
//! Values written as integers, decimals or `a/b` fractions stay exact; binary
//! floats are carried as floats only. Every [`Real`] also caches its `f64`
//! value so hot evaluation paths never touch big-rational arithmetic.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Pow, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Real {
    approx: f64,
    exact: Option<BigRational>,
}

impl Real {
    pub fn exact(value: BigRational) -> Self {
        let approx = value.to_f64().unwrap_or(f64::NAN);
        Real {
            approx,
            exact: Some(value),
        }
    }

    pub fn float(value: f64) -> Self {
        Real {
            approx: value,
            exact: None,
        }
    }

    pub fn int(value: i64) -> Self {
        Real::exact(BigRational::from_integer(BigInt::from(value)))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Real::exact(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn zero() -> Self {
        Real::int(0)
    }

    pub fn one() -> Self {
        Real::int(1)
    }

    /// Parses an integer, a decimal (with optional exponent) or a fraction
    /// `a/b` without going through binary floating point.
    pub fn parse(text: &str) -> Result<Self> {
        parse_exact(text.trim()).map(Real::exact)
    }

    pub fn value(&self) -> f64 {
        self.approx
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        self.exact.as_ref()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn is_zero(&self) -> bool {
        match &self.exact {
            Some(q) => q.is_zero(),
            None => self.approx == 0.0,
        }
    }

    fn combine(
        &self,
        other: &Real,
        exact: impl FnOnce(&BigRational, &BigRational) -> BigRational,
        float: impl FnOnce(f64, f64) -> f64,
    ) -> Real {
        match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => Real::exact(exact(a, b)),
            _ => Real::float(float(self.approx, other.approx)),
        }
    }
}

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => a == b,
            _ => self.approx == other.approx,
        }
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.exact {
            Some(q) if q.is_integer() => write!(f, "{}", q.numer()),
            Some(q) => write!(f, "{}/{}", q.numer(), q.denom()),
            None => write!(f, "{}", self.approx),
        }
    }
}

impl Add for &Real {
    type Output = Real;
    fn add(self, rhs: &Real) -> Real {
        self.combine(rhs, |a, b| a + b, |a, b| a + b)
    }
}

impl Sub for &Real {
    type Output = Real;
    fn sub(self, rhs: &Real) -> Real {
        self.combine(rhs, |a, b| a - b, |a, b| a - b)
    }
}

impl Mul for &Real {
    type Output = Real;
    fn mul(self, rhs: &Real) -> Real {
        self.combine(rhs, |a, b| a * b, |a, b| a * b)
    }
}

impl Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        match &self.exact {
            Some(q) => Real::exact(-q),
            None => Real::float(-self.approx),
        }
    }
}

impl From<f64> for Real {
    fn from(value: f64) -> Self {
        Real::float(value)
    }
}

fn parse_exact(text: &str) -> Result<BigRational> {
    if text.is_empty() {
        return Err(Error::parse(text, "empty number"));
    }
    if let Some((num, den)) = text.split_once('/') {
        let num = parse_decimal(num.trim()).ok_or_else(|| Error::parse(text, "bad numerator"))?;
        let den = parse_decimal(den.trim()).ok_or_else(|| Error::parse(text, "bad denominator"))?;
        if den.is_zero() {
            return Err(Error::parse(text, "zero denominator"));
        }
        return Ok(num / den);
    }
    parse_decimal(text).ok_or_else(|| Error::parse(text, "not a number"))
}

fn parse_decimal(text: &str) -> Option<BigRational> {
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.as_bytes().first()? {
        b'-' => (true, &mantissa[1..]),
        b'+' => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .bytes()
        .chain(frac_part.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(all.parse::<BigInt>().ok()?);
    let shift = exponent - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    if shift >= 0 {
        value *= Pow::pow(&ten, shift as u32);
    } else {
        value /= Pow::pow(&ten, (-shift) as u32);
    }
    Some(if negative { -value } else { value })
}

/// `constant + Σ coeffs[j]·param_j` over an ordered list of parameter names.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    constant: Real,
    coeffs: Vec<Real>,
}

impl Affine {
    pub fn constant(value: Real, params: usize) -> Self {
        Affine {
            constant: value,
            coeffs: vec![Real::zero(); params],
        }
    }

    pub fn param(index: usize, params: usize) -> Self {
        let mut coeffs = vec![Real::zero(); params];
        coeffs[index] = Real::one();
        Affine {
            constant: Real::zero(),
            coeffs,
        }
    }

    pub fn from_parts(constant: Real, coeffs: Vec<Real>) -> Self {
        Affine { constant, coeffs }
    }

    pub fn arity(&self) -> usize {
        self.coeffs.len()
    }

    pub fn constant_part(&self) -> &Real {
        &self.constant
    }

    pub fn coefficients(&self) -> &[Real] {
        &self.coeffs
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(Real::is_zero)
    }

    pub fn is_exact(&self) -> bool {
        self.constant.is_exact() && self.coeffs.iter().all(Real::is_exact)
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(point)
            .fold(self.constant.value(), |acc, (c, x)| acc + c.value() * x)
    }

    /// Directional derivative along `direction` in parameter space.
    pub fn slope(&self, direction: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(direction)
            .map(|(c, d)| c.value() * d)
            .sum()
    }

    pub fn eval_exact(&self, point: &[BigRational]) -> Option<BigRational> {
        let mut acc = self.constant.as_exact()?.clone();
        for (c, x) in self.coeffs.iter().zip(point) {
            let c = c.as_exact()?;
            if !c.is_zero() {
                acc += c * x;
            }
        }
        Some(acc)
    }

    /// Binds with exact slice coordinates and keeps float parts as floats.
    pub fn eval_real(&self, point: &[BigRational]) -> Real {
        let mut acc = self.constant.clone();
        for (c, x) in self.coeffs.iter().zip(point) {
            if !c.is_zero() {
                acc = &acc + &(c * &Real::exact(x.clone()));
            }
        }
        acc
    }

    pub fn scaled(&self, factor: &Real) -> Affine {
        Affine {
            constant: &self.constant * factor,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn render(&self, names: &[String]) -> String {
        let mut out = String::new();
        for (c, name) in self.coeffs.iter().zip(names) {
            if c.is_zero() {
                continue;
            }
            let negative = c.value() < 0.0;
            let magnitude = if negative { -c } else { c.clone() };
            if !out.is_empty() {
                out.push_str(if negative { " + -" } else { " + " });
            } else if negative {
                out.push('-');
            }
            if magnitude == Real::one() {
                out.push_str(name);
            } else {
                out.push_str(&format!("{magnitude}*{name}"));
            }
        }
        if out.is_empty() {
            return self.constant.to_string();
        }
        if !self.constant.is_zero() {
            out.push_str(&format!(" + {}", self.constant));
        }
        out
    }
}

impl Add for &Affine {
    type Output = Affine;
    fn add(self, rhs: &Affine) -> Affine {
        Affine {
            constant: &self.constant + &rhs.constant,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(BigRational),
    Ident(String),
    Plus,
    Minus,
    Star,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '+' {
            tokens.push(Token::Plus);
            i += 1;
        } else if c == '-' {
            tokens.push(Token::Minus);
            i += 1;
        } else if c == '*' {
            tokens.push(Token::Star);
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '+' || d == '-') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || d == '/' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let literal: String = chars[start..i].iter().collect();
            tokens.push(Token::Number(parse_exact(&literal)?));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            tokens.push(Token::Ident(chars[start..i].iter().collect()));
        } else {
            return Err(Error::parse(text, format!("unexpected character `{c}`")));
        }
    }
    Ok(tokens)
}

/// Parses `2*q1 + 1/2`, `alpha + beta`, `-1000/3`, `0.993` and similar
/// affine forms. Each product may contain at most one parameter name.
pub fn parse_affine(text: &str, params: &[String]) -> Result<Affine> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(Error::parse(text, "empty expression"));
    }
    let n = params.len();
    let mut constant = BigRational::zero();
    let mut coeffs = vec![BigRational::zero(); n];
    let mut pos = 0;
    let mut first = true;
    while pos < tokens.len() {
        let mut sign = BigRational::one();
        let mut saw_sign = false;
        while let Some(Token::Plus | Token::Minus) = tokens.get(pos) {
            if tokens[pos] == Token::Minus {
                sign = -sign;
            }
            saw_sign = true;
            pos += 1;
        }
        if !first && !saw_sign {
            return Err(Error::parse(text, "expected `+` or `-` between terms"));
        }
        first = false;
        let mut factor = sign;
        let mut symbol: Option<usize> = None;
        let mut expect_operand = true;
        while let Some(token) = tokens.get(pos) {
            match (token, expect_operand) {
                (Token::Number(q), true) => factor *= q,
                (Token::Ident(name), true) => {
                    let index = params
                        .iter()
                        .position(|p| p == name)
                        .ok_or_else(|| Error::UnknownSymbol(name.clone()))?;
                    if symbol.replace(index).is_some() {
                        return Err(Error::parse(
                            text,
                            "product of two parameters is not affine",
                        ));
                    }
                }
                (Token::Star, false) => {}
                (Token::Plus | Token::Minus, false) => break,
                _ => return Err(Error::parse(text, "malformed term")),
            }
            expect_operand = !expect_operand;
            pos += 1;
        }
        if expect_operand {
            return Err(Error::parse(text, "dangling operator"));
        }
        match symbol {
            Some(index) => coeffs[index] += factor,
            None => constant += factor,
        }
    }
    Ok(Affine {
        constant: Real::exact(constant),
        coeffs: coeffs.into_iter().map(Real::exact).collect(),
    })
}

/// Smallest-denominator rational in the closed interval `[lo, hi]`, with
/// denominators up to `max_den`.
pub fn simplest_rational_in(lo: f64, hi: f64, max_den: i64) -> Option<(i64, i64)> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    let mut best: Option<(i64, i64)> = None;
    for den in 1..=max_den {
        let num = (lo * den as f64).ceil() as i64;
        if (num as f64) <= hi * den as f64 {
            best = Some((num, den));
            break;
        }
    }
    best
}

pub fn to_big(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn big_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

pub fn is_positive(q: &BigRational) -> bool {
    q.is_positive()
}
