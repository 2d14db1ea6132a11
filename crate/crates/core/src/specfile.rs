//! TOML system descriptions.
//!
//! Two forms are accepted. A matrix form:
//!
//! ```toml
//! A = [[0, "-1000/3"], [10000, "-1000/3"]]
//! orders = ["alpha", "beta"]
//! forcing = [4000, 0]
//!
//! [[slice]]
//! name = "alpha"
//! range = [0, 2]
//! ```
//!
//! and a term form listing the characteristic quasi-polynomial directly:
//!
//! ```toml
//! terms = [
//!   { coef = 1, exp = "a1 + a2" },
//!   { coef = 12, exp = "a1" },
//!   { coef = 34, exp = 0 },
//! ]
//! ```
//!
//! Integers and strings are read exactly (`"1000/3"`, `"0.993"`); TOML floats
//! stay binary floats. Strings may be affine in the slice parameters.

use std::fmt::Write as _;
use std::path::Path;

use toml::Value;

use crate::error::{Error, Result};
use crate::expr::{parse_affine, Affine, Real};
use crate::quasipoly::{expand_characteristic, FractionalSystem, SymTerm, SymbolicQuasiPolynomial};

#[derive(Clone, Debug, PartialEq)]
pub struct SliceAxis {
    pub name: String,
    pub lo: Real,
    pub hi: Real,
}

/// One or two free parameters over a rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderSlice {
    axes: Vec<SliceAxis>,
}

impl OrderSlice {
    pub fn new(axes: Vec<SliceAxis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidSlice(format!(
                "{} free parameters; slices have one or two",
                axes.len()
            )));
        }
        for (i, axis) in axes.iter().enumerate() {
            let (lo, hi) = (axis.lo.value(), axis.hi.value());
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSlice(format!(
                    "axis `{}` has empty or non-finite range [{lo}, {hi}]",
                    axis.name
                )));
            }
            if axes[..i].iter().any(|a| a.name == axis.name) {
                return Err(Error::InvalidSlice(format!(
                    "axis `{}` repeated",
                    axis.name
                )));
            }
        }
        Ok(OrderSlice { axes })
    }

    /// Shorthand for float ranges.
    pub fn from_ranges(axes: &[(&str, f64, f64)]) -> Result<Self> {
        OrderSlice::new(
            axes.iter()
                .map(|&(name, lo, hi)| SliceAxis {
                    name: name.to_string(),
                    lo: Real::float(lo),
                    hi: Real::float(hi),
                })
                .collect(),
        )
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[SliceAxis] {
        &self.axes
    }

    pub fn names(&self) -> Vec<String> {
        self.axes.iter().map(|a| a.name.clone()).collect()
    }

    pub fn bounds(&self, axis: usize) -> (f64, f64) {
        (self.axes[axis].lo.value(), self.axes[axis].hi.value())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    System(FractionalSystem),
    Terms(SymbolicQuasiPolynomial),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub name: Option<String>,
    pub model: Model,
    pub slice: Option<OrderSlice>,
}

impl SystemSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        SystemSpec::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::spec("document", e.to_string().trim_end()))?;
        for key in doc.keys() {
            if !matches!(
                key.as_str(),
                "name" | "A" | "orders" | "forcing" | "terms" | "slice"
            ) {
                return Err(Error::spec(key, "unknown field"));
            }
        }
        let name = match doc.get("name") {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(Error::spec("name", "expected a string")),
        };
        let slice = match doc.get("slice") {
            None => None,
            Some(v) => Some(parse_slice(v)?),
        };
        let params = slice.as_ref().map(OrderSlice::names).unwrap_or_default();

        let model = match (doc.get("A"), doc.get("terms")) {
            (Some(_), Some(_)) => {
                return Err(Error::spec("terms", "give either `A` or `terms`, not both"))
            }
            (None, None) => {
                return Err(Error::spec(
                    "A",
                    "missing; give `A` with `orders`, or `terms`",
                ))
            }
            (Some(a), None) => {
                let matrix = parse_matrix(a)?;
                let orders = doc
                    .get("orders")
                    .ok_or_else(|| Error::spec("orders", "missing"))?;
                let orders = as_array(orders, "orders")?
                    .iter()
                    .enumerate()
                    .map(|(i, v)| parse_expr(v, &params, &format!("orders[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                let mut system = FractionalSystem::new(matrix, orders, params.clone())?;
                if let Some(f) = doc.get("forcing") {
                    let forcing = as_array(f, "forcing")?
                        .iter()
                        .enumerate()
                        .map(|(i, v)| parse_real(v, &format!("forcing[{i}]")))
                        .collect::<Result<Vec<_>>>()?;
                    system = system.with_forcing(forcing)?;
                }
                Model::System(system)
            }
            (None, Some(t)) => {
                for key in ["orders", "forcing"] {
                    if doc.contains_key(key) {
                        return Err(Error::spec(key, "only valid together with `A`"));
                    }
                }
                let terms = as_array(t, "terms")?
                    .iter()
                    .enumerate()
                    .map(|(i, v)| parse_term(v, &params, i))
                    .collect::<Result<Vec<_>>>()?;
                Model::Terms(SymbolicQuasiPolynomial::new(params.clone(), terms)?)
            }
        };
        Ok(SystemSpec { name, model, slice })
    }

    pub fn params(&self) -> Vec<String> {
        self.slice
            .as_ref()
            .map(OrderSlice::names)
            .unwrap_or_default()
    }

    pub fn system(&self) -> Option<&FractionalSystem> {
        match &self.model {
            Model::System(s) => Some(s),
            Model::Terms(_) => None,
        }
    }

    /// The characteristic quasi-polynomial over the slice parameters.
    pub fn symbolic(&self) -> Result<SymbolicQuasiPolynomial> {
        match &self.model {
            Model::System(s) => expand_characteristic(s),
            Model::Terms(t) => Ok(t.clone()),
        }
    }

    /// Serializes back to the TOML form accepted by [`SystemSpec::parse`].
    pub fn to_toml(&self) -> String {
        let params = self.params();
        let mut out = String::new();
        if let Some(name) = &self.name {
            let _ = writeln!(out, "name = {}", Value::String(name.clone()));
        }
        match &self.model {
            Model::System(system) => {
                let rows: Vec<String> = system
                    .matrix()
                    .iter()
                    .map(|row| {
                        format!(
                            "[{}]",
                            row.iter().map(real_literal).collect::<Vec<_>>().join(", ")
                        )
                    })
                    .collect();
                let _ = writeln!(out, "A = [{}]", rows.join(", "));
                let orders: Vec<String> = system
                    .orders()
                    .iter()
                    .map(|o| affine_literal(o, &params))
                    .collect();
                let _ = writeln!(out, "orders = [{}]", orders.join(", "));
                if let Some(f) = system.forcing() {
                    let f: Vec<String> = f.iter().map(real_literal).collect();
                    let _ = writeln!(out, "forcing = [{}]", f.join(", "));
                }
            }
            Model::Terms(sym) => {
                out.push_str("terms = [\n");
                for t in sym.terms() {
                    let _ = writeln!(
                        out,
                        "  {{ coef = {}, exp = {} }},",
                        affine_literal(&t.coef, &params),
                        affine_literal(&t.exponent, &params)
                    );
                }
                out.push_str("]\n");
            }
        }
        if let Some(slice) = &self.slice {
            for axis in slice.axes() {
                let _ = write!(
                    out,
                    "\n[[slice]]\nname = {}\nrange = [{}, {}]\n",
                    Value::String(axis.name.clone()),
                    real_literal(&axis.lo),
                    real_literal(&axis.hi)
                );
            }
        }
        out
    }
}

fn real_literal(r: &Real) -> String {
    match r.as_exact() {
        Some(q) if q.is_integer() => q.numer().to_string(),
        Some(_) => format!("\"{r}\""),
        None => format!("{:?}", r.value()),
    }
}

fn affine_literal(a: &Affine, params: &[String]) -> String {
    if a.is_constant() {
        real_literal(a.constant_part())
    } else {
        format!("\"{}\"", a.render(params))
    }
}

fn as_array<'a>(v: &'a Value, field: &str) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| Error::spec(field, "expected an array"))
}

fn parse_real(v: &Value, field: &str) -> Result<Real> {
    match v {
        Value::Integer(i) => Ok(Real::int(*i)),
        Value::Float(f) if f.is_finite() => Ok(Real::float(*f)),
        Value::String(s) => Real::parse(s).map_err(|e| Error::spec(field, e.to_string())),
        _ => Err(Error::spec(field, "expected a number or a fraction string")),
    }
}

fn parse_expr(v: &Value, params: &[String], field: &str) -> Result<Affine> {
    match v {
        Value::String(s) => parse_affine(s, params).map_err(|e| match e {
            Error::UnknownSymbol(sym) => Error::spec(
                field,
                format!("unknown symbol `{sym}`; declare it with a [[slice]] entry"),
            ),
            other => Error::spec(field, other.to_string()),
        }),
        other => parse_real(other, field).map(|r| Affine::constant(r, params.len())),
    }
}

fn parse_matrix(v: &Value) -> Result<Vec<Vec<Real>>> {
    as_array(v, "A")?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            as_array(row, &format!("A[{i}]"))?
                .iter()
                .enumerate()
                .map(|(j, x)| parse_real(x, &format!("A[{i}][{j}]")))
                .collect()
        })
        .collect()
}

fn parse_term(v: &Value, params: &[String], index: usize) -> Result<SymTerm> {
    let field = format!("terms[{index}]");
    let table = v
        .as_table()
        .ok_or_else(|| Error::spec(&field, "expected { coef = ..., exp = ... }"))?;
    for key in table.keys() {
        if key != "coef" && key != "exp" {
            return Err(Error::spec(&field, format!("unknown key `{key}`")));
        }
    }
    let get = |key: &str| {
        table
            .get(key)
            .ok_or_else(|| Error::spec(&field, format!("missing `{key}`")))
    };
    Ok(SymTerm {
        coef: parse_expr(get("coef")?, params, &format!("{field}.coef"))?,
        exponent: parse_expr(get("exp")?, params, &format!("{field}.exp"))?,
    })
}

fn parse_slice(v: &Value) -> Result<OrderSlice> {
    let entries = as_array(v, "slice")?;
    let mut axes = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let field = format!("slice[{i}]");
        let table = entry
            .as_table()
            .ok_or_else(|| Error::spec(&field, "expected a table"))?;
        let name = match table.get("name") {
            Some(Value::String(s)) if is_identifier(s) => s.clone(),
            _ => return Err(Error::spec(&field, "`name` must be an identifier string")),
        };
        let range = table
            .get("range")
            .and_then(Value::as_array)
            .filter(|r| r.len() == 2)
            .ok_or_else(|| Error::spec(&field, "`range` must be [lo, hi]"))?;
        axes.push(SliceAxis {
            name,
            lo: parse_real(&range[0], &format!("{field}.range[0]"))?,
            hi: parse_real(&range[1], &format!("{field}.range[1]"))?,
        });
    }
    OrderSlice::new(axes)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}
