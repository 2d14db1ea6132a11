//! Right-half-plane zero counting for real-exponent quasi-polynomials.
//!
//! The count is the winding number of Δ along the boundary of the half annulus
//! {Re s > 0, ε < |s| < R} on the principal sheet. Radii come from term
//! dominance, so no zero lies inside |s| ≤ ε or outside |s| ≥ R. The contour
//! is parametrized in (ln |s|, arg s) and every evaluation is normalized by
//! its largest term, which keeps extreme radii representable.
//!
//! Because Δ(s̄) = conj Δ(s) for real coefficients, only the upper half is
//! traversed: its phase change is exactly π times the zero count.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;

use num::complex::Complex64;

use crate::error::{Error, Result};
use crate::quasipoly::QuasiPolynomial;

pub const DEFAULT_TAU_MARGIN: f64 = 1e-7;

/// Phase change / π must be this close to an integer.
pub const INTEGRALITY_TOL: f64 = 1e-6;

const RADIUS_FACTOR: f64 = 1.37;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VerdictKind {
    Stable,
    Unstable(usize),
    Marginal,
}

impl VerdictKind {
    /// Number of zeros in the open right half-plane, if decided.
    pub fn rhp_count(&self) -> Option<usize> {
        match self {
            VerdictKind::Stable => Some(0),
            VerdictKind::Unstable(k) => Some(*k),
            VerdictKind::Marginal => None,
        }
    }

    pub fn from_count(count: usize) -> Self {
        if count == 0 {
            VerdictKind::Stable
        } else {
            VerdictKind::Unstable(count)
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerdictKind::Stable => write!(f, "Stable"),
            VerdictKind::Unstable(k) => write!(f, "Unstable({k})"),
            VerdictKind::Marginal => write!(f, "Marginal"),
        }
    }
}

/// Verdict plus the smallest normalized |Δ(iω)| seen on the axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityVerdict {
    pub kind: VerdictKind,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CounterConfig {
    /// Initial nodes on each arc.
    pub arc_nodes: usize,
    /// Initial nodes per unit of ln|s| on the axis segment.
    pub axis_density: f64,
    pub min_axis_nodes: usize,
    pub max_axis_nodes: usize,
    /// Largest accepted phase increment between neighbouring nodes.
    pub max_phase_step: f64,
    /// Largest accepted chord |z_b − z_a| relative to min(|z_a|, |z_b|).
    pub max_chord: f64,
    pub max_depth: u32,
    /// Normalized |Δ| below which a node counts as a zero on the path.
    pub zero_tol: f64,
    pub tau_margin: f64,
    pub retries: u32,
}

impl Default for CounterConfig {
    fn default() -> Self {
        CounterConfig {
            arc_nodes: 16,
            axis_density: 8.0,
            min_axis_nodes: 64,
            max_axis_nodes: 16384,
            max_phase_step: FRAC_PI_4,
            max_chord: 0.5,
            max_depth: 48,
            zero_tol: 1e-14,
            tau_margin: DEFAULT_TAU_MARGIN,
            retries: 3,
        }
    }
}

impl CounterConfig {
    pub fn with_tau_margin(mut self, tau: f64) -> Self {
        self.tau_margin = tau;
        self
    }

    /// Doubles the sampling density and halves the acceptance steps.
    pub fn refined(&self) -> Self {
        CounterConfig {
            arc_nodes: self.arc_nodes * 2,
            axis_density: self.axis_density * 2.0,
            min_axis_nodes: self.min_axis_nodes * 2,
            max_axis_nodes: self.max_axis_nodes * 2,
            max_phase_step: self.max_phase_step / 2.0,
            max_chord: self.max_chord / 2.0,
            max_depth: self.max_depth + 1,
            ..self.clone()
        }
    }
}

/// Half annulus with inner radius ε and outer radius R, stored as logarithms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contour {
    ln_eps: f64,
    ln_radius: f64,
}

impl Contour {
    pub fn from_ln(ln_eps: f64, ln_radius: f64) -> Self {
        assert!(
            ln_eps < ln_radius,
            "inner radius must be below outer radius"
        );
        Contour { ln_eps, ln_radius }
    }

    pub fn ln_eps(&self) -> f64 {
        self.ln_eps
    }

    pub fn ln_radius(&self) -> f64 {
        self.ln_radius
    }

    pub fn eps(&self) -> f64 {
        self.ln_eps.exp()
    }

    pub fn radius(&self) -> f64 {
        self.ln_radius.exp()
    }

    pub fn perturbed(&self) -> Self {
        Contour {
            ln_eps: self.ln_eps - RADIUS_FACTOR.ln(),
            ln_radius: self.ln_radius + RADIUS_FACTOR.ln(),
        }
    }

    /// Upper or lower half as three straight pieces in (ln r, θ).
    fn pieces(&self, half: Half) -> [Piece; 3] {
        let (a, e) = (self.ln_radius, self.ln_eps);
        match half {
            Half::Upper => [
                Piece::arc(a, 0.0, FRAC_PI_2),
                Piece::axis(a, e, FRAC_PI_2),
                Piece::arc(e, FRAC_PI_2, 0.0),
            ],
            Half::Lower => [
                Piece::arc(e, 0.0, -FRAC_PI_2),
                Piece::axis(e, a, -FRAC_PI_2),
                Piece::arc(a, -FRAC_PI_2, 0.0),
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Half {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    from: (f64, f64),
    to: (f64, f64),
    on_axis: bool,
}

impl Piece {
    fn arc(ln_r: f64, from: f64, to: f64) -> Self {
        Piece {
            from: (ln_r, from),
            to: (ln_r, to),
            on_axis: false,
        }
    }

    fn axis(from: f64, to: f64, theta: f64) -> Self {
        Piece {
            from: (from, theta),
            to: (to, theta),
            on_axis: true,
        }
    }

    fn at(&self, u: f64) -> (f64, f64) {
        (
            self.from.0 + u * (self.to.0 - self.from.0),
            self.from.1 + u * (self.to.1 - self.from.1),
        )
    }
}

/// Radii for which the constant term dominates on |s| = ε and the leading
/// term dominates on |s| = R, each by a factor of two. Computed on Δ with
/// s^{e_min} divided out; `None` when that leaves a single monomial.
pub fn contour_radii(qp: &QuasiPolynomial) -> Option<Contour> {
    let reduced = qp.without_origin_factor();
    let terms = reduced.terms();
    if terms.len() < 2 {
        return None;
    }
    let lead = terms[0];
    let rest = &terms[1..];
    let outer = |x: f64| {
        lead.coef.abs().ln() + lead.exponent * x
            - 2f64.ln()
            - log_sum_exp(rest.iter().map(|t| t.coef.abs().ln() + t.exponent * x))
    };
    let ln_radius = march(outer, 1.0);

    let constant = terms[terms.len() - 1];
    debug_assert_eq!(constant.exponent, 0.0);
    let positive = &terms[..terms.len() - 1];
    let inner = |x: f64| {
        constant.coef.abs().ln()
            - 2f64.ln()
            - log_sum_exp(positive.iter().map(|t| t.coef.abs().ln() + t.exponent * x))
    };
    let ln_eps = march(inner, -1.0);
    Some(Contour::from_ln(ln_eps, ln_radius))
}

/// Smallest step of a doubling march from 0 in `direction` at which the
/// monotone function `f` turns positive, pushed a little further for margin.
fn march(f: impl Fn(f64) -> f64, direction: f64) -> f64 {
    let mut x = 0.0;
    let mut step = 1.0;
    while f(x) <= 0.0 {
        x += direction * step;
        step *= 2.0;
    }
    x + direction * 0.25
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// A node of the path where Δ is numerically zero, or phase tracking that
/// cannot resolve the path; the caller moves the contour or gives up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginalSignal {
    pub ln_r: f64,
    pub theta: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct HalfTrace {
    pub phase: f64,
    /// Smallest normalized |Δ| on the axis piece and where it occurred.
    pub margin: f64,
    pub margin_ln_r: f64,
}

pub(crate) fn trace_half(
    qp: &QuasiPolynomial,
    contour: &Contour,
    half: Half,
    cfg: &CounterConfig,
) -> std::result::Result<HalfTrace, MarginalSignal> {
    let mut total = HalfTrace {
        phase: 0.0,
        margin: f64::INFINITY,
        margin_ln_r: contour.ln_radius,
    };
    for piece in contour.pieces(half) {
        let nodes = if piece.on_axis {
            let span = (piece.to.0 - piece.from.0).abs();
            ((span * cfg.axis_density) as usize).clamp(cfg.min_axis_nodes, cfg.max_axis_nodes)
        } else {
            cfg.arc_nodes
        };
        track_piece(qp, &piece, nodes, cfg, &mut total)?;
    }
    Ok(total)
}

fn track_piece(
    qp: &QuasiPolynomial,
    piece: &Piece,
    nodes: usize,
    cfg: &CounterConfig,
    acc: &mut HalfTrace,
) -> std::result::Result<(), MarginalSignal> {
    let sample = |u: f64, acc: &mut HalfTrace| -> std::result::Result<Complex64, MarginalSignal> {
        let (ln_r, theta) = piece.at(u);
        let z = qp.eval_scaled(ln_r, theta).normalized();
        let size = z.norm();
        if piece.on_axis && size < acc.margin {
            acc.margin = size;
            acc.margin_ln_r = ln_r;
        }
        if !(size > cfg.zero_tol) {
            return Err(MarginalSignal { ln_r, theta });
        }
        Ok(z)
    };

    let mut u_prev = 0.0;
    let mut z_prev = sample(0.0, acc)?;
    // explicit stack of pending right endpoints, most refined on top
    let mut stack: Vec<(f64, Complex64, u32)> = Vec::new();
    for k in (1..=nodes).rev() {
        let u = k as f64 / nodes as f64;
        stack.push((u, Complex64::new(f64::NAN, 0.0), 0));
    }
    while let Some((u, z_cached, depth)) = stack.pop() {
        let z = if z_cached.re.is_nan() {
            sample(u, acc)?
        } else {
            z_cached
        };
        let step = (z / z_prev).arg();
        let chord = (z - z_prev).norm();
        let floor = z.norm().min(z_prev.norm());
        let accept = step.abs() <= cfg.max_phase_step && chord <= cfg.max_chord * floor;
        if accept || depth >= cfg.max_depth {
            if !accept && floor < 1e3 * cfg.zero_tol {
                let (ln_r, theta) = piece.at(u);
                return Err(MarginalSignal { ln_r, theta });
            }
            acc.phase += step;
            u_prev = u;
            z_prev = z;
        } else {
            let mid = 0.5 * (u_prev + u);
            stack.push((u, z, depth + 1));
            stack.push((mid, Complex64::new(f64::NAN, 0.0), depth + 1));
        }
    }
    Ok(())
}

/// Net phase change of Δ along one half of the contour.
pub fn phase_change(
    qp: &QuasiPolynomial,
    contour: &Contour,
    half: Half,
    cfg: &CounterConfig,
) -> std::result::Result<f64, MarginalSignal> {
    let reduced = qp.without_origin_factor();
    trace_half(&reduced, contour, half, cfg).map(|t| t.phase)
}

/// Failure modes of a full winding computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WindingError {
    Marginal(MarginalSignal),
    NonIntegral(f64),
}

/// Zeros enclosed by the full closed contour, counted by tracking the phase
/// around both halves.
pub fn winding_number(
    qp: &QuasiPolynomial,
    contour: &Contour,
    cfg: &CounterConfig,
) -> std::result::Result<i64, WindingError> {
    let upper = phase_change(qp, contour, Half::Upper, cfg).map_err(WindingError::Marginal)?;
    let lower = phase_change(qp, contour, Half::Lower, cfg).map_err(WindingError::Marginal)?;
    let turns = (upper + lower) / (2.0 * PI);
    let rounded = turns.round();
    if (turns - rounded).abs() > INTEGRALITY_TOL {
        return Err(WindingError::NonIntegral(turns));
    }
    Ok(rounded as i64)
}

/// Winding before rounding, from the upper half alone.
pub(crate) fn upper_turns(trace: &HalfTrace) -> f64 {
    trace.phase / PI
}

pub fn verdict(qp: &QuasiPolynomial, cfg: &CounterConfig) -> Result<StabilityVerdict> {
    let reduced = qp.without_origin_factor();
    let Some(mut contour) = contour_radii(&reduced) else {
        // c·s^e has no zeros off the branch point
        return Ok(StabilityVerdict {
            kind: VerdictKind::Stable,
            margin: 1.0,
        });
    };
    for _ in 0..=cfg.retries {
        match trace_half(&reduced, &contour, Half::Upper, cfg) {
            Ok(trace) => {
                let turns = upper_turns(&trace);
                let count = turns.round();
                if (turns - count).abs() > INTEGRALITY_TOL || count < 0.0 {
                    return Err(Error::NonIntegralWinding(turns));
                }
                let kind = if trace.margin < cfg.tau_margin {
                    VerdictKind::Marginal
                } else {
                    VerdictKind::from_count(count as usize)
                };
                return Ok(StabilityVerdict {
                    kind,
                    margin: trace.margin,
                });
            }
            Err(_) => contour = contour.perturbed(),
        }
    }
    Ok(StabilityVerdict {
        kind: VerdictKind::Marginal,
        margin: 0.0,
    })
}

/// ln ω of the smallest normalized |Δ(iω)| on the axis, a starting point for
/// locating a critical root.
pub fn axis_minimum(qp: &QuasiPolynomial, cfg: &CounterConfig) -> Option<(f64, f64)> {
    let reduced = qp.without_origin_factor();
    let contour = contour_radii(&reduced)?;
    let mut probe = HalfTrace {
        phase: 0.0,
        margin: f64::INFINITY,
        margin_ln_r: contour.ln_radius,
    };
    let piece = Piece::axis(contour.ln_radius, contour.ln_eps, FRAC_PI_2);
    let span = contour.ln_radius - contour.ln_eps;
    let nodes = ((span * cfg.axis_density) as usize).clamp(cfg.min_axis_nodes, cfg.max_axis_nodes);
    match track_piece(&reduced, &piece, nodes, cfg, &mut probe) {
        Ok(()) => Some((probe.margin_ln_r, probe.margin)),
        Err(signal) => Some((signal.ln_r, 0.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(pairs: &[(f64, f64)]) -> QuasiPolynomial {
        QuasiPolynomial::from_pairs(pairs).unwrap()
    }

    fn count(pairs: &[(f64, f64)]) -> VerdictKind {
        verdict(&qp(pairs), &CounterConfig::default()).unwrap().kind
    }

    #[test]
    fn radii_for_a_binomial() {
        let c = contour_radii(&qp(&[(1.0, 1.0), (1.0, 0.0)])).unwrap();
        assert!(c.radius() > 2.0);
        assert!(c.eps() < 0.5);
    }

    #[test]
    fn radii_bracket_all_moduli() {
        // s^{1.99} + 12 s^{0.993} + 34: |s| must exceed ε and stay below R
        let p = qp(&[(1.0, 1.99), (12.0, 0.993), (34.0, 0.0)]);
        let c = contour_radii(&p).unwrap();
        let r = c.radius();
        assert!(r.powf(1.99) > 2.0 * (12.0 * r.powf(0.993) + 34.0));
        let e = c.eps();
        assert!(34.0 > 2.0 * (e.powf(1.99) + 12.0 * e.powf(0.993)));
    }

    #[test]
    fn monomial_needs_no_contour() {
        assert!(contour_radii(&qp(&[(3.0, 0.7)])).is_none());
        assert_eq!(count(&[(3.0, 0.7)]), VerdictKind::Stable);
    }

    #[test]
    fn single_real_roots() {
        let cfg = CounterConfig::default();
        let p = qp(&[(1.0, 1.0), (-1.0, 0.0)]);
        let c = contour_radii(&p).unwrap();
        assert_eq!(winding_number(&p, &c, &cfg), Ok(1));
        let p = qp(&[(1.0, 1.0), (1.0, 0.0)]);
        let c = contour_radii(&p).unwrap();
        assert_eq!(winding_number(&p, &c, &cfg), Ok(0));
    }

    #[test]
    fn left_half_plane_quadratic() {
        // roots −6 ± i√2
        let p = qp(&[(1.0, 2.0), (12.0, 1.0), (34.0, 0.0)]);
        let c = contour_radii(&p).unwrap();
        assert_eq!(winding_number(&p, &c, &CounterConfig::default()), Ok(0));
        assert_eq!(
            count(&[(1.0, 2.0), (12.0, 1.0), (34.0, 0.0)]),
            VerdictKind::Stable
        );
    }

    #[test]
    fn counts_multiple_rhp_roots() {
        // (s − 1)(s − 2)(s + 3) = s³ − 7s + 6
        assert_eq!(
            count(&[(1.0, 3.0), (-7.0, 1.0), (6.0, 0.0)]),
            VerdictKind::Unstable(2)
        );
        // (s² − 2s + 5)(s + 1) = s³ − s² + 3s + 5, roots 1 ± 2i and −1
        assert_eq!(
            count(&[(1.0, 3.0), (-1.0, 2.0), (3.0, 1.0), (5.0, 0.0)]),
            VerdictKind::Unstable(2)
        );
    }

    #[test]
    fn square_root_plus_one_has_no_principal_zero() {
        assert_eq!(count(&[(1.0, 0.5), (1.0, 0.0)]), VerdictKind::Stable);
        // s^{1/2} − 1 has its zero at s = 1
        assert_eq!(count(&[(1.0, 0.5), (-1.0, 0.0)]), VerdictKind::Unstable(1));
    }

    #[test]
    fn axis_roots_are_marginal() {
        // s² + 1 vanishes at ±i
        let v = verdict(&qp(&[(1.0, 2.0), (1.0, 0.0)]), &CounterConfig::default()).unwrap();
        assert_eq!(v.kind, VerdictKind::Marginal);
        // s² + 1e-3 s + 1 is stable but very close to the axis
        let v = verdict(
            &qp(&[(1.0, 2.0), (1e-9, 1.0), (1.0, 0.0)]),
            &CounterConfig::default(),
        )
        .unwrap();
        assert_eq!(v.kind, VerdictKind::Marginal);
        let v = verdict(
            &qp(&[(1.0, 2.0), (1e-2, 1.0), (1.0, 0.0)]),
            &CounterConfig::default(),
        )
        .unwrap();
        assert_eq!(v.kind, VerdictKind::Stable);
        assert!(v.margin > 1e-4);
    }

    #[test]
    fn origin_factor_is_ignored() {
        // s^{0.3}(s − 1)
        assert_eq!(count(&[(1.0, 1.3), (-1.0, 0.3)]), VerdictKind::Unstable(1));
    }

    #[test]
    fn extreme_radii_stay_finite() {
        // tiny exponent gaps force ε and R far from 1
        let p = qp(&[(1.0, 0.52), (-3.0, 0.51), (2.5, 0.0)]);
        let c = contour_radii(&p).unwrap();
        assert!(c.ln_radius() > 50.0);
        let v = verdict(&p, &CounterConfig::default()).unwrap();
        assert!(v.kind.rhp_count().is_some());
        let refined = verdict(&p, &CounterConfig::default().refined()).unwrap();
        assert_eq!(v.kind, refined.kind);
    }

    #[test]
    fn halves_carry_equal_phase() {
        let p = qp(&[(1.0, 2.6), (-1.5, 1.1), (0.7, 0.4), (2.0, 0.0)]);
        let c = contour_radii(&p).unwrap();
        let cfg = CounterConfig::default();
        let up = phase_change(&p, &c, Half::Upper, &cfg).unwrap();
        let down = phase_change(&p, &c, Half::Lower, &cfg).unwrap();
        assert!((up - down).abs() < 1e-9);
        assert!(((up / PI) - (up / PI).round()).abs() < 1e-9);
    }
}
