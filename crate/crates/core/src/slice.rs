//! A characteristic quasi-polynomial bound to an order slice, classified
//! point by point.

use std::fmt;

use num::rational::BigRational;

use crate::error::{Error, Result};
use crate::quasipoly::{FractionalSystem, QuasiPolynomial, SymbolicQuasiPolynomial};
use crate::rational_oracle::{
    oracle_from_reduction, reduce_terms, OracleReport, DEFAULT_TAU_ARG, MAX_ROOT_DEGREE,
};
use crate::rhp_counter::{verdict, CounterConfig, StabilityVerdict, VerdictKind};
use crate::specfile::{OrderSlice, SystemSpec};

/// Grid label: right-half-plane count, numerically undecided, or a point
/// where the binding leaves the model (orders outside (0, 2)).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellLabel {
    Count(usize),
    Marginal,
    OutOfModel,
}

impl CellLabel {
    pub fn is_decided(&self) -> bool {
        matches!(self, CellLabel::Count(_))
    }
}

impl From<VerdictKind> for CellLabel {
    fn from(kind: VerdictKind) -> Self {
        match kind.rhp_count() {
            Some(k) => CellLabel::Count(k),
            None => CellLabel::Marginal,
        }
    }
}

impl fmt::Display for CellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellLabel::Count(k) => write!(f, "{}", VerdictKind::from_count(*k)),
            CellLabel::Marginal => write!(f, "Marginal"),
            CellLabel::OutOfModel => write!(f, "OutOfModel"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SliceProblem {
    symbolic: SymbolicQuasiPolynomial,
    system: Option<FractionalSystem>,
    slice: OrderSlice,
    config: CounterConfig,
}

impl SliceProblem {
    pub fn new(
        symbolic: SymbolicQuasiPolynomial,
        system: Option<FractionalSystem>,
        slice: OrderSlice,
    ) -> Result<Self> {
        if symbolic.params() != slice.names().as_slice() {
            return Err(Error::InvalidSlice(format!(
                "quasi-polynomial is over {:?} but the slice declares {:?}",
                symbolic.params(),
                slice.names()
            )));
        }
        Ok(SliceProblem {
            symbolic,
            system,
            slice,
            config: CounterConfig::default(),
        })
    }

    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        let slice = spec
            .slice
            .clone()
            .ok_or_else(|| Error::InvalidSlice("spec declares no [[slice]] parameters".into()))?;
        SliceProblem::new(spec.symbolic()?, spec.system().cloned(), slice)
    }

    pub fn with_config(mut self, config: CounterConfig) -> Self {
        self.config = config;
        self
    }

    pub fn symbolic(&self) -> &SymbolicQuasiPolynomial {
        &self.symbolic
    }

    pub fn system(&self) -> Option<&FractionalSystem> {
        self.system.as_ref()
    }

    pub fn slice(&self) -> &OrderSlice {
        &self.slice
    }

    pub fn config(&self) -> &CounterConfig {
        &self.config
    }

    pub fn dims(&self) -> usize {
        self.slice.dims()
    }

    /// Bound quasi-polynomial, after checking every order stays in (0, 2).
    pub fn bind(&self, point: &[f64]) -> Result<QuasiPolynomial> {
        if let Some(system) = &self.system {
            system.orders_at(point)?;
        }
        self.symbolic.bind(point)
    }

    pub fn verdict_at(&self, point: &[f64]) -> Result<StabilityVerdict> {
        self.verdict_with(point, &self.config)
    }

    pub fn verdict_with(&self, point: &[f64], config: &CounterConfig) -> Result<StabilityVerdict> {
        verdict(&self.bind(point)?, config)
    }

    pub fn classify(&self, point: &[f64]) -> CellLabel {
        self.classify_with(point, &self.config)
    }

    pub fn classify_with(&self, point: &[f64], config: &CounterConfig) -> CellLabel {
        let qp = match self.bind(point) {
            Ok(qp) => qp,
            Err(_) => return CellLabel::OutOfModel,
        };
        match verdict(&qp, config) {
            Ok(v) => v.kind.into(),
            Err(_) => CellLabel::Marginal,
        }
    }

    /// Root-based verdict at an exact slice point; `None` when the reduced
    /// polynomial would exceed the root finder's degree cap.
    pub fn oracle_at(&self, point: &[BigRational]) -> Result<Option<OracleReport>> {
        if let Some(system) = &self.system {
            system.at_exact(point)?;
        }
        let terms = self.symbolic.bind_rational(point)?;
        let reduction = match reduce_terms(&terms) {
            Ok(r) if r.polynomial.degree() <= MAX_ROOT_DEGREE => r,
            Ok(_) | Err(Error::DegreeTooLarge { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        oracle_from_reduction(reduction, DEFAULT_TAU_ARG).map(Some)
    }
}
