//! Stability boundaries in order-parameter space.
//!
//! On the boundary a zero of Δ sits on the imaginary axis, s = r·e^{iπ/2}.
//! Splitting Δ(r·e^{iπ/2}) into real and imaginary parts gives f1 and f2;
//! boundary points solve f1 = f2 = 0 for some r > 0. Points where a zero
//! passes through the branch point (constant term vanishing) also separate
//! regions and are reported with r = 0.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quasipoly::{QuasiPolynomial, SymTerm, SymbolicQuasiPolynomial, Term};
use crate::regions::{classify_grid, LabelGrid};
use crate::rhp_counter::axis_minimum;
use crate::slice::{CellLabel, SliceProblem};
use crate::specfile::OrderSlice;

/// Bisection stops once the bracket is shorter than this, in slice units.
pub const LOCATE_TOL: f64 = 1e-4;

/// Normalized |f1|, |f2| accepted as a simultaneous root.
pub const RESIDUAL_TOL: f64 = 1e-9;

const NEWTON_ITERATIONS: usize = 40;

/// Real and imaginary parts of Δ on the positive imaginary axis.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalSplit {
    terms: Vec<Term>,
}

pub fn critical_split(qp: &QuasiPolynomial) -> CriticalSplit {
    CriticalSplit {
        terms: qp.terms().to_vec(),
    }
}

impl CriticalSplit {
    /// (coefficient of r^e in f1, coefficient in f2, e) per term.
    pub fn parts(&self) -> Vec<(f64, f64, f64)> {
        self.terms
            .iter()
            .map(|t| {
                let (s, c) = (t.exponent * FRAC_PI_2).sin_cos();
                (t.coef * c, t.coef * s, t.exponent)
            })
            .collect()
    }

    pub fn eval(&self, r: f64) -> (f64, f64) {
        self.parts().iter().fold((0.0, 0.0), |(a, b), &(c, s, e)| {
            let p = r.powf(e);
            (a + c * p, b + s * p)
        })
    }

    pub fn f1(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    pub fn f2(&self, r: f64) -> f64 {
        self.eval(r).1
    }

    /// (f1, f2) divided by Σ|c_k| r^{e_k}.
    pub fn normalized(&self, r: f64) -> (f64, f64) {
        let scale: f64 = self
            .terms
            .iter()
            .map(|t| t.coef.abs() * r.powf(t.exponent))
            .sum();
        let (a, b) = self.eval(r);
        (a / scale, b / scale)
    }
}

/// c_a·s^α + c_b·s^β + c_0 with r eliminated in closed form.
#[derive(Clone, Debug)]
pub struct Trinomial {
    a: SymTerm,
    b: SymTerm,
    constant: SymTerm,
}

/// Result of eliminating r at one slice point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elimination {
    /// X = r^α and Y = r^β are both positive; `residual` = β ln X − α ln Y
    /// vanishes exactly when they come from a common r.
    Feasible {
        residual: f64,
        x: f64,
        y: f64,
    },
    Infeasible,
}

pub fn trinomial(sym: &SymbolicQuasiPolynomial) -> Result<Trinomial> {
    let terms = sym.terms();
    if terms.len() != 3 {
        return Err(Error::NotTrinomial);
    }
    let is_constant =
        |t: &SymTerm| t.exponent.is_constant() && t.exponent.constant_part().is_zero();
    let Some(k) = terms.iter().position(is_constant) else {
        return Err(Error::NotTrinomial);
    };
    let rest: Vec<&SymTerm> = terms
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, t)| t)
        .collect();
    Ok(Trinomial {
        a: rest[0].clone(),
        b: rest[1].clone(),
        constant: terms[k].clone(),
    })
}

impl Trinomial {
    pub fn constant_at(&self, point: &[f64]) -> f64 {
        self.constant.coef.eval(point)
    }

    /// (c_a, α, c_b, β, c_0) at a slice point.
    pub fn bound(&self, point: &[f64]) -> (f64, f64, f64, f64, f64) {
        (
            self.a.coef.eval(point),
            self.a.exponent.eval(point),
            self.b.coef.eval(point),
            self.b.exponent.eval(point),
            self.constant_at(point),
        )
    }

    /// Cramer's rule on
    /// c_a X cos(απ/2) + c_b Y cos(βπ/2) = −c_0,
    /// c_a X sin(απ/2) + c_b Y sin(βπ/2) = 0.
    pub fn eliminate(&self, point: &[f64]) -> Result<Elimination> {
        let (ca, alpha, cb, beta, c0) = self.bound(point);
        let gap = ((beta - alpha) * FRAC_PI_2).sin();
        if gap.abs() < 1e-12 || ca == 0.0 || cb == 0.0 {
            return Err(Error::DegenerateElimination);
        }
        let x = -c0 * (beta * FRAC_PI_2).sin() / (ca * gap);
        let y = c0 * (alpha * FRAC_PI_2).sin() / (cb * gap);
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Ok(Elimination::Infeasible);
        }
        Ok(Elimination::Feasible {
            residual: beta * x.ln() - alpha * y.ln(),
            x,
            y,
        })
    }

    /// The r recovered from X = r^α.
    pub fn radius(&self, point: &[f64]) -> Option<f64> {
        let (_, alpha, _, beta, _) = self.bound(point);
        match self.eliminate(point).ok()? {
            Elimination::Feasible { x, y, .. } => Some(if alpha > 0.0 {
                x.powf(1.0 / alpha)
            } else {
                y.powf(1.0 / beta)
            }),
            Elimination::Infeasible => None,
        }
    }

    /// Normalized (f1, f2) at the eliminated r.
    pub fn check(&self, point: &[f64]) -> Option<(f64, f64)> {
        let r = self.radius(point)?;
        let (ca, alpha, cb, beta, c0) = self.bound(point);
        let qp = QuasiPolynomial::from_pairs(&[(ca, alpha), (cb, beta), (c0, 0.0)]).ok()?;
        Some(critical_split(&qp).normalized(r))
    }
}

/// Which solution family of f1 = f2 = 0 a closed-form point belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// r > 0 from the elimination.
    Axis,
    /// c_0 = 0: the zero sits at the branch point, r = 0.
    Origin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrinomialPoint {
    pub point: Vec<f64>,
    pub r: f64,
    pub branch: Branch,
}

/// Zero set of the closed-form residual on a node-centred `res`×`res` grid:
/// every grid edge where the residual changes sign between feasible nodes,
/// or where c_0 changes sign, is bisected to full precision. Axis points
/// that fail the f1 = f2 = 0 check (a sign change through a pole) are
/// dropped.
pub fn trinomial_zero_set(tri: &Trinomial, slice: &OrderSlice, res: usize) -> Vec<TrinomialPoint> {
    let grid = node_grid(slice, res);
    let mut out = Vec::new();
    for (a, b) in grid_edges(&grid) {
        let pa = grid.point(a);
        let pb = grid.point(b);
        let at = |t: f64| lerp(&pa, &pb, t);
        let (c0a, c0b) = (tri.constant_at(&pa), tri.constant_at(&pb));
        if c0a * c0b < 0.0 {
            let t = c0a / (c0a - c0b);
            out.push(TrinomialPoint {
                point: at(t),
                r: 0.0,
                branch: Branch::Origin,
            });
        }
        let g = |t: f64| match tri.eliminate(&at(t)) {
            Ok(Elimination::Feasible { residual, .. }) => Some(residual),
            _ => None,
        };
        // when one end is infeasible the curve can still cross the feasible
        // part; shrink the edge to it
        let (lo, hi) = match (g(0.0), g(1.0)) {
            (Some(_), Some(_)) => (0.0, 1.0),
            (Some(_), None) => (0.0, feasible_edge(&g, 0.0, 1.0)),
            (None, Some(_)) => (feasible_edge(&g, 1.0, 0.0), 1.0),
            (None, None) => continue,
        };
        let (Some(ga), Some(gb)) = (g(lo), g(hi)) else {
            continue;
        };
        if ga * gb > 0.0 {
            continue;
        }
        let (mut lo, mut hi, mut glo) = (lo, hi, ga);
        let mut feasible = true;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match g(mid) {
                Some(gm) if gm * glo > 0.0 => {
                    lo = mid;
                    glo = gm;
                }
                Some(_) => hi = mid,
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            continue;
        }
        let point = at(0.5 * (lo + hi));
        let ok = tri
            .check(&point)
            .is_some_and(|(f1, f2)| f1.abs() < RESIDUAL_TOL && f2.abs() < RESIDUAL_TOL);
        if ok {
            let r = tri.radius(&point).unwrap_or(f64::NAN);
            out.push(TrinomialPoint {
                point,
                r,
                branch: Branch::Axis,
            });
        }
    }
    out
}

/// Last feasible parameter on the way from `inside` towards `outside`.
fn feasible_edge(g: &impl Fn(f64) -> Option<f64>, inside: f64, outside: f64) -> f64 {
    let (mut a, mut b) = (inside, outside);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if g(mid).is_some() {
            a = mid;
        } else {
            b = mid;
        }
    }
    a
}

fn node_grid(slice: &OrderSlice, res: usize) -> LabelGrid {
    let dims = slice.dims();
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..dims).map(|a| slice.bounds(a)).unzip();
    let shape = [res, if dims == 2 { res } else { 1 }];
    LabelGrid::from_labels(
        lo,
        hi,
        shape,
        vec![CellLabel::OutOfModel; shape[0] * shape[1]],
    )
}

/// Right and upward neighbour pairs of every node.
fn grid_edges(grid: &LabelGrid) -> Vec<(usize, usize)> {
    let [w, h] = grid.shape();
    let mut edges = Vec::new();
    for j in 0..h {
        for i in 0..w {
            let k = grid.index(i, j);
            if i + 1 < w {
                edges.push((k, k + 1));
            }
            if j + 1 < h {
                edges.push((k, k + w));
            }
        }
    }
    edges
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// A located boundary point. `refined` is false when Newton refinement did
/// not converge and the point is the bisection midpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub point: Vec<f64>,
    pub r: f64,
    pub refined: bool,
}

/// Finds where the classification changes on the segment `a`–`b`.
pub fn locate_crossing(problem: &SliceProblem, a: &[f64], b: &[f64]) -> Result<BoundaryPoint> {
    let la = problem.classify(a);
    let lb = problem.classify(b);
    if la == lb {
        return Err(Error::SameClassification(la.to_string()));
    }
    locate_between(problem, a, b, la)
}

fn locate_between(
    problem: &SliceProblem,
    a: &[f64],
    b: &[f64],
    la: CellLabel,
) -> Result<BoundaryPoint> {
    let length = a
        .iter()
        .zip(b)
        .map(|(x, y)| (y - x).powi(2))
        .sum::<f64>()
        .sqrt();
    let (mut lo, mut hi) = (0.0, 1.0);
    while (hi - lo) * length >= LOCATE_TOL {
        let mid = 0.5 * (lo + hi);
        if problem.classify(&lerp(a, b, mid)) == la {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let width = hi - lo;
    let mid = 0.5 * (lo + hi);
    let sym = problem.symbolic();

    // a zero through the branch point: the constant coefficient vanishes
    let c0 = |t: f64| constant_coefficient(sym, &lerp(a, b, t));
    let (c_lo, c_hi) = (c0(lo), c0(hi));
    if c_lo * c_hi <= 0.0 && c_lo != c_hi {
        let t = lo + (hi - lo) * c_lo / (c_lo - c_hi);
        return Ok(BoundaryPoint {
            point: lerp(a, b, t),
            r: 0.0,
            refined: true,
        });
    }

    let start = problem
        .bind(&lerp(a, b, mid))
        .ok()
        .and_then(|qp| axis_minimum(&qp, problem.config()))
        .map(|(ln_r, _)| ln_r)
        .unwrap_or(0.0);
    let direction: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let segment = Segment {
        sym,
        origin: a,
        direction: &direction,
    };
    if let Some((ln_r, t)) = segment.newton(start, mid) {
        if (t - mid).abs() <= 2.0 * width {
            return Ok(BoundaryPoint {
                point: lerp(a, b, t),
                r: ln_r.exp(),
                refined: true,
            });
        }
    }
    Ok(BoundaryPoint {
        point: lerp(a, b, mid),
        r: start.exp(),
        refined: false,
    })
}

fn constant_coefficient(sym: &SymbolicQuasiPolynomial, point: &[f64]) -> f64 {
    sym.terms()
        .iter()
        .filter(|t| t.exponent.is_constant() && t.exponent.constant_part().is_zero())
        .map(|t| t.coef.eval(point))
        .sum()
}

/// f1, f2 along a line in slice space, as functions of (ln r, t).
struct Segment<'a> {
    sym: &'a SymbolicQuasiPolynomial,
    origin: &'a [f64],
    direction: &'a [f64],
}

impl Segment<'_> {
    /// (f1, f2, Σ|c| r^e, Jacobian rows [∂/∂ln r, ∂/∂t]).
    fn eval(&self, u: f64, t: f64) -> (f64, f64, f64, [[f64; 2]; 2]) {
        let p: Vec<f64> = self
            .origin
            .iter()
            .zip(self.direction)
            .map(|(o, d)| o + t * d)
            .collect();
        let (mut f1, mut f2, mut scale) = (0.0, 0.0, 0.0);
        let mut jac = [[0.0; 2]; 2];
        for term in self.sym.terms() {
            let c = term.coef.eval(&p);
            let dc = term.coef.slope(self.direction);
            let e = term.exponent.eval(&p);
            let de = term.exponent.slope(self.direction);
            let mag = (e * u).exp();
            let (s, co) = (e * FRAC_PI_2).sin_cos();
            f1 += c * mag * co;
            f2 += c * mag * s;
            scale += c.abs() * mag;
            jac[0][0] += c * e * mag * co;
            jac[1][0] += c * e * mag * s;
            jac[0][1] += mag * (dc * co + c * de * u * co - c * de * FRAC_PI_2 * s);
            jac[1][1] += mag * (dc * s + c * de * u * s + c * de * FRAC_PI_2 * co);
        }
        (f1, f2, scale, jac)
    }

    /// Damped Newton from (u0, t0); returns (ln r, t) on convergence.
    fn newton(&self, u0: f64, t0: f64) -> Option<(f64, f64)> {
        let (mut u, mut t) = (u0, t0);
        let (_, _, scale0, _) = self.eval(u, t);
        if !(scale0 > 0.0 && scale0.is_finite()) {
            return None;
        }
        for _ in 0..NEWTON_ITERATIONS {
            let (f1, f2, scale, jac) = self.eval(u, t);
            if (f1 / scale).abs() < RESIDUAL_TOL && (f2 / scale).abs() < RESIDUAL_TOL {
                return Some((u, t));
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            let du = -(f1 * jac[1][1] - f2 * jac[0][1]) / det;
            let dt = -(jac[0][0] * f2 - jac[1][0] * f1) / det;
            let norm = (f1 * f1 + f2 * f2).sqrt() / scale0;
            let mut lambda = 1.0;
            loop {
                let (nu, nt) = (u + lambda * du, t + lambda * dt);
                let (g1, g2, _, _) = self.eval(nu, nt);
                let next = (g1 * g1 + g2 * g2).sqrt() / scale0;
                if next.is_finite() && next < norm {
                    u = nu;
                    t = nt;
                    break;
                }
                lambda *= 0.5;
                if lambda < 1e-10 {
                    return None;
                }
            }
        }
        None
    }
}

/// A located label change between two neighbouring grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeCrossing {
    pub from: usize,
    pub to: usize,
    pub point: BoundaryPoint,
}

/// Crossings on every grid edge whose endpoint labels differ. Edges touching
/// out-of-model nodes are skipped.
pub fn crossings_on_grid(problem: &SliceProblem, grid: &LabelGrid) -> Vec<EdgeCrossing> {
    let labels = grid.labels();
    grid_edges(grid)
        .into_par_iter()
        .filter(|&(a, b)| {
            labels[a] != labels[b]
                && labels[a] != CellLabel::OutOfModel
                && labels[b] != CellLabel::OutOfModel
        })
        .filter_map(|(a, b)| {
            let point = locate_between(problem, &grid.point(a), &grid.point(b), labels[a]).ok()?;
            Some(EdgeCrossing {
                from: a,
                to: b,
                point,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPolyline {
    pub points: Vec<BoundaryPoint>,
}

pub fn trace_boundary(problem: &SliceProblem, res: usize) -> Result<Vec<BoundaryPolyline>> {
    if problem.dims() != 2 {
        return Err(Error::InvalidSlice(
            "boundary tracing needs a two-parameter slice".into(),
        ));
    }
    let grid = classify_grid(problem, res)?;
    Ok(trace_on_grid(problem, &grid))
}

/// Locates all crossings on a classified grid and links them into
/// polylines through shared grid cells.
pub fn trace_on_grid(problem: &SliceProblem, grid: &LabelGrid) -> Vec<BoundaryPolyline> {
    let crossings = crossings_on_grid(problem, grid);
    link(problem, grid, &crossings)
}

fn link(
    problem: &SliceProblem,
    grid: &LabelGrid,
    crossings: &[EdgeCrossing],
) -> Vec<BoundaryPolyline> {
    let by_edge: HashMap<(usize, usize), usize> = crossings
        .iter()
        .enumerate()
        .map(|(k, c)| ((c.from, c.to), k))
        .collect();
    let [w, h] = grid.shape();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); crossings.len()];
    let mut connect = |x: usize, y: usize| {
        if !adjacency[x].contains(&y) {
            adjacency[x].push(y);
            adjacency[y].push(x);
        }
    };
    for j in 0..h.saturating_sub(1) {
        for i in 0..w.saturating_sub(1) {
            let c00 = grid.index(i, j);
            let c10 = grid.index(i + 1, j);
            let c01 = grid.index(i, j + 1);
            let c11 = grid.index(i + 1, j + 1);
            // cyclic order: bottom, right, top, left
            let sides = [(c00, c10), (c10, c11), (c01, c11), (c00, c01)];
            let present: Vec<Option<usize>> =
                sides.iter().map(|e| by_edge.get(e).copied()).collect();
            let found: Vec<usize> = present.iter().flatten().copied().collect();
            match found.len() {
                2 | 3 => {
                    for pair in found.windows(2) {
                        connect(pair[0], pair[1]);
                    }
                }
                4 => {
                    let centre: Vec<f64> = lerp(&grid.point(c00), &grid.point(c11), 0.5);
                    let [b, r, t, l] = [found[0], found[1], found[2], found[3]];
                    if problem.classify(&centre) == grid.labels()[c00] {
                        connect(b, r);
                        connect(t, l);
                    } else {
                        connect(b, l);
                        connect(r, t);
                    }
                }
                _ => {}
            }
        }
    }

    let mut used: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
    let key = |x: usize, y: usize| (x.min(y), x.max(y));
    let mut lines = Vec::new();
    let walk = |start: usize, used: &mut std::collections::HashSet<(usize, usize)>| {
        let mut path = vec![start];
        let mut here = start;
        while let Some(&next) = adjacency[here]
            .iter()
            .find(|&&n| !used.contains(&key(here, n)))
        {
            used.insert(key(here, next));
            path.push(next);
            here = next;
        }
        path
    };
    let mut visited = vec![false; crossings.len()];
    let mut emit = |path: Vec<usize>, visited: &mut Vec<bool>| {
        for &p in &path {
            visited[p] = true;
        }
        lines.push(BoundaryPolyline {
            points: path.iter().map(|&k| crossings[k].point.clone()).collect(),
        });
    };
    for start in 0..crossings.len() {
        if adjacency[start].len() != 2 {
            while adjacency[start]
                .iter()
                .any(|&n| !used.contains(&key(start, n)))
            {
                let path = walk(start, &mut used);
                emit(path, &mut visited);
            }
            if adjacency[start].is_empty() {
                emit(vec![start], &mut visited);
            }
        }
    }
    for start in 0..crossings.len() {
        if !visited[start] {
            let path = walk(start, &mut used);
            emit(path, &mut visited);
        }
    }
    lines
}
