//! Grünwald–Letnikov time stepping, used as an independent empirical check
//! on the stability verdicts.
//!
//! The default scheme is implicit in the Caputo form
//!
//! ```text
//! (I − H·A) x_k = x_0 + H·b − Σ_{j=1..k} w_j (x_{k−j} − x_0),   H = diag(h^{α_i})
//! ```
//!
//! which stays bounded for stable systems at any order. The explicit
//! Grünwald–Letnikov step is available for comparison.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quasipoly::FractionalSystem;

/// Shortest trajectory the empirical classification accepts.
pub const MIN_STEPS: usize = 1000;

/// States beyond this magnitude count as escaped.
const ESCAPE: f64 = 1e100;

/// w_0 = 1, w_j = (1 − (α+1)/j)·w_{j−1}, for j = 0..=k.
pub fn gl_weights(alpha: f64, k: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(k + 1);
    w.push(1.0);
    for j in 1..=k {
        let prev = w[j - 1];
        w.push((1.0 - (alpha + 1.0) / j as f64) * prev);
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Implicit,
    Explicit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub h: f64,
    pub horizon: f64,
    /// Initial state; all ones when absent.
    pub x0: Option<Vec<f64>>,
    pub scheme: Scheme,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            h: 1e-3,
            horizon: 50.0,
            x0: None,
            scheme: Scheme::Implicit,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub x0: Vec<f64>,
    /// States x_0..x_K, row per step.
    pub states: Vec<Vec<f64>>,
    /// Set when the run stopped early at a non-finite or huge state.
    pub escaped: bool,
    pub equilibrium: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// max_i |x_i − x*_i| per step.
    pub fn deviation(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|x| {
                x.iter()
                    .zip(&self.equilibrium)
                    .fold(0.0f64, |m, (a, e)| m.max((a - e).abs()))
            })
            .collect()
    }

    /// `t,x1,...,xn` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.x0.len();
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        for (k, x) in self.states.iter().enumerate() {
            out.push_str(&crate::output::num(k as f64 * self.h));
            for v in x {
                out.push(',');
                out.push_str(&crate::output::num(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// x* = −A⁻¹b for forced systems, the origin otherwise.
pub fn equilibrium(system: &FractionalSystem) -> Result<Vec<f64>> {
    let n = system.dimension();
    let Some(b) = system.forcing() else {
        return Ok(vec![0.0; n]);
    };
    let a = DMatrix::from_fn(n, n, |i, j| system.matrix()[i][j].value());
    let b = DVector::from_iterator(n, b.iter().map(|v| -v.value()));
    let x = a.lu().solve(&b).ok_or_else(|| {
        Error::Simulation("forced system with singular A has no unique equilibrium".into())
    })?;
    Ok(x.iter().copied().collect())
}

pub fn simulate(system: &FractionalSystem, config: &SimulationConfig) -> Result<Trajectory> {
    if system.has_free_orders() {
        return Err(Error::Simulation(
            "bind the slice parameters before simulating".into(),
        ));
    }
    if !(config.h > 0.0 && config.h.is_finite() && config.horizon > 0.0) {
        return Err(Error::Simulation(format!(
            "step {} and horizon {} must be positive",
            config.h, config.horizon
        )));
    }
    let n = system.dimension();
    let steps = (config.horizon / config.h).round() as usize;
    if steps == 0 {
        return Err(Error::Simulation("horizon shorter than one step".into()));
    }
    let orders = system.orders_at(&[])?;
    let x0 = match &config.x0 {
        Some(x) if x.len() == n => x.clone(),
        Some(x) => {
            return Err(Error::Simulation(format!(
                "x0 has {} entries, expected {n}",
                x.len()
            )));
        }
        None => vec![1.0; n],
    };
    let a = system.matrix_f64();
    let b: Vec<f64> = system
        .forcing()
        .map(|f| f.iter().map(|v| v.value()).collect())
        .unwrap_or_else(|| vec![0.0; n]);
    let hpow: Vec<f64> = orders.iter().map(|&o| config.h.powf(o)).collect();
    // weights stored back to front so the history sum is a forward dot product
    let reversed: Vec<Vec<f64>> = orders
        .iter()
        .map(|&o| {
            let mut w = gl_weights(o, steps);
            w.reverse();
            w
        })
        .collect();

    let lu = (config.scheme == Scheme::Implicit).then(|| {
        DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { 1.0 } else { 0.0 } - hpow[i] * a[i][j],
        )
        .lu()
    });

    // history per component: x_{k,i} − x0_i for the implicit form, x_{k,i}
    // itself for the explicit one
    let shift: Vec<f64> = match config.scheme {
        Scheme::Implicit => x0.clone(),
        Scheme::Explicit => vec![0.0; n],
    };
    let mut history: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut v = Vec::with_capacity(steps + 1);
            v.push(x0[i] - shift[i]);
            v
        })
        .collect();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.clone());
    let mut escaped = false;

    for k in 1..=steps {
        let memory: Vec<f64> = (0..n)
            .map(|i| dot(&history[i][..k], &reversed[i][steps - k..steps]))
            .collect();
        let x: Vec<f64> = match &lu {
            Some(lu) => {
                let rhs = DVector::from_fn(n, |i, _| x0[i] + hpow[i] * b[i] - memory[i]);
                match lu.solve(&rhs) {
                    Some(x) => x.iter().copied().collect(),
                    None => {
                        return Err(Error::Simulation(
                            "I − H·A is singular at this step size".into(),
                        ))
                    }
                }
            }
            None => {
                let prev = &states[k - 1];
                (0..n)
                    .map(|i| {
                        let ax: f64 = (0..n).map(|j| a[i][j] * prev[j]).sum();
                        hpow[i] * (ax + b[i]) - memory[i]
                    })
                    .collect()
            }
        };
        if x.iter().any(|v| !v.is_finite() || v.abs() > ESCAPE) {
            escaped = true;
            break;
        }
        for i in 0..n {
            history[i].push(x[i] - shift[i]);
        }
        states.push(x);
    }
    Ok(Trajectory {
        h: config.h,
        x0,
        states,
        escaped,
        equilibrium: equilibrium(system)?,
    })
}

/// Σ a_m b_m with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[8 * c..8 * c + 8], &b[8 * c..8 * c + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut total: f64 = acc.iter().sum();
    for m in 8 * chunks..a.len() {
        total += a[m] * b[m];
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmpiricalVerdict {
    Decaying,
    Growing,
    Inconclusive,
}

impl std::fmt::Display for EmpiricalVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EmpiricalVerdict::Decaying => "Decaying",
            EmpiricalVerdict::Growing => "Growing",
            EmpiricalVerdict::Inconclusive => "Inconclusive",
        };
        f.write_str(s)
    }
}

pub fn empirical_verdict(trajectory: &Trajectory) -> Result<EmpiricalVerdict> {
    if trajectory.escaped {
        return Ok(EmpiricalVerdict::Growing);
    }
    classify_deviation(&trajectory.deviation())
}

/// Compares the largest deviation over the last quarter with that over the
/// first quarter: below 0.1× is decay, above 10× is growth.
pub fn classify_deviation(deviation: &[f64]) -> Result<EmpiricalVerdict> {
    if deviation.len() <= MIN_STEPS {
        return Err(Error::Simulation(format!(
            "{} steps is too short to classify; need at least {MIN_STEPS}",
            deviation.len().saturating_sub(1)
        )));
    }
    let quarter = deviation.len() / 4;
    let max = |s: &[f64]| s.iter().copied().fold(0.0f64, f64::max);
    let first = max(&deviation[..quarter]);
    let last = max(&deviation[deviation.len() - quarter..]);
    Ok(if last < 0.1 * first {
        EmpiricalVerdict::Decaying
    } else if last > 10.0 * first {
        EmpiricalVerdict::Growing
    } else {
        EmpiricalVerdict::Inconclusive
    })
}

/// Outcome of [`cross_validate`]: the run at the requested step and, when
/// the characteristic roots can be far larger than 1/h, a short run at a
/// step that resolves them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrossCheck {
    pub coarse: EmpiricalVerdict,
    pub resolved: Option<EmpiricalVerdict>,
}

impl CrossCheck {
    /// Growth in either run wins: the implicit scheme damps modes with
    /// |s|·h ≫ 1, so a coarse run can look decaying while the resolved run
    /// escapes. It never manufactures growth.
    pub fn verdict(&self) -> EmpiricalVerdict {
        match (self.coarse, self.resolved) {
            (_, Some(EmpiricalVerdict::Growing)) | (EmpiricalVerdict::Growing, _) => {
                EmpiricalVerdict::Growing
            }
            (v, _) => v,
        }
    }
}

/// Steps in the resolved run.
const RESOLVED_STEPS: usize = 20_000;

/// Simulates at `config` and, if the root modulus bound ρ exceeds 0.1/h,
/// again with h = 0.1/ρ over a fixed number of steps.
pub fn cross_validate(system: &FractionalSystem, config: &SimulationConfig) -> Result<CrossCheck> {
    let coarse = empirical_verdict(&simulate(system, config)?)?;
    Ok(CrossCheck {
        coarse,
        resolved: resolved_run(system, config)?,
    })
}

/// The short fine-step run of [`cross_validate`]; `None` when h already
/// resolves every root.
pub fn resolved_run(
    system: &FractionalSystem,
    config: &SimulationConfig,
) -> Result<Option<EmpiricalVerdict>> {
    let qp = crate::quasipoly::expand_characteristic(system)?.bind(&[])?;
    let h = 0.1 / root_modulus_bound(&qp);
    if !(h < config.h) {
        return Ok(None);
    }
    let fine = SimulationConfig {
        h,
        horizon: h * RESOLVED_STEPS as f64,
        ..config.clone()
    };
    empirical_verdict(&simulate(system, &fine)?).map(Some)
}

/// Positive root ρ of |c_lead|·r^{e_lead} = Σ |c_k|·r^{e_k}; every zero of
/// the quasi-polynomial has modulus at most ρ.
pub fn root_modulus_bound(qp: &crate::quasipoly::QuasiPolynomial) -> f64 {
    let reduced = qp.without_origin_factor();
    let terms = reduced.terms();
    let Some((lead, rest)) = terms.split_first() else {
        return 0.0;
    };
    if rest.is_empty() {
        return 0.0;
    }
    // increasing in x = ln r
    let g = |x: f64| {
        let logs: Vec<f64> = rest
            .iter()
            .map(|t| t.coef.abs().ln() + (t.exponent - lead.exponent) * x)
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lead.coef.abs().ln() - max - logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) > 0.0 {
        lo *= 2.0;
    }
    while g(hi) <= 0.0 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Real;

    fn scalar(a: f64, alpha: f64) -> FractionalSystem {
        FractionalSystem::from_f64(&[vec![a]], &[alpha]).unwrap()
    }

    #[test]
    fn weights_for_first_difference() {
        let w = gl_weights(1.0, 5);
        assert_eq!(w, vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn weights_for_half_order() {
        let w = gl_weights(0.5, 2);
        assert_eq!(w[1], -0.5);
        assert_eq!(w[2], -0.125);
    }

    #[test]
    fn weight_sums_vanish_below_order_one() {
        for alpha in [0.3, 0.6, 0.9] {
            let short: f64 = gl_weights(alpha, 100).iter().sum();
            let long: f64 = gl_weights(alpha, 100_000).iter().sum();
            assert!(long.abs() < short.abs());
            assert!(long.abs() < 0.05, "{alpha}: {long}");
        }
    }

    #[test]
    fn integer_order_decay_matches_exponential() {
        for scheme in [Scheme::Implicit, Scheme::Explicit] {
            let cfg = SimulationConfig {
                horizon: 1.0,
                scheme,
                ..SimulationConfig::default()
            };
            let t = simulate(&scalar(-1.0, 1.0), &cfg).unwrap();
            let end = t.states.last().unwrap()[0];
            assert!((end - (-1.0f64).exp()).abs() < 1e-2, "{scheme:?}: {end}");
        }
    }

    #[test]
    fn half_order_with_positive_feedback_grows() {
        let cfg = SimulationConfig {
            horizon: 10.0,
            ..SimulationConfig::default()
        };
        let t = simulate(&scalar(1.0, 0.5), &cfg).unwrap();
        assert_eq!(empirical_verdict(&t).unwrap(), EmpiricalVerdict::Growing);
    }

    #[test]
    fn forced_system_settles_at_equilibrium() {
        let system = FractionalSystem::with_fixed_orders(
            vec![
                vec![Real::int(-2), Real::int(1)],
                vec![Real::int(0), Real::int(-1)],
            ],
            vec![Real::ratio(7, 10), Real::ratio(9, 10)],
        )
        .unwrap()
        .with_forcing(vec![Real::int(2), Real::int(3)])
        .unwrap();
        let eq = equilibrium(&system).unwrap();
        assert!((eq[0] - 2.5).abs() < 1e-12 && (eq[1] - 3.0).abs() < 1e-12);
        let t = simulate(
            &system,
            &SimulationConfig {
                horizon: 20.0,
                ..SimulationConfig::default()
            },
        )
        .unwrap();
        assert_eq!(empirical_verdict(&t).unwrap(), EmpiricalVerdict::Decaying);
    }

    #[test]
    fn synthetic_samples() {
        let decay: Vec<f64> = (0..2000).map(|k| (-(k as f64) / 200.0).exp()).collect();
        let grow: Vec<f64> = (0..2000).map(|k| (k as f64 / 200.0).exp()).collect();
        let flat = vec![1.0; 2000];
        assert_eq!(
            classify_deviation(&decay).unwrap(),
            EmpiricalVerdict::Decaying
        );
        assert_eq!(
            classify_deviation(&grow).unwrap(),
            EmpiricalVerdict::Growing
        );
        assert_eq!(
            classify_deviation(&flat).unwrap(),
            EmpiricalVerdict::Inconclusive
        );
        assert!(classify_deviation(&flat[..500]).is_err());
    }

    #[test]
    fn zero_matrix_stays_put() {
        let system =
            FractionalSystem::from_f64(&[vec![0.0, 0.0], vec![0.0, 0.0]], &[0.6, 1.3]).unwrap();
        let t = simulate(
            &system,
            &SimulationConfig {
                horizon: 2.0,
                ..SimulationConfig::default()
            },
        )
        .unwrap();
        assert_eq!(
            empirical_verdict(&t).unwrap(),
            EmpiricalVerdict::Inconclusive
        );
    }

    #[test]
    fn modulus_bound_is_tight_for_binomials() {
        // s² − 4 and s^0.5 + 3
        let a = crate::quasipoly::QuasiPolynomial::from_pairs(&[(1.0, 2.0), (-4.0, 0.0)]).unwrap();
        assert!((root_modulus_bound(&a) - 2.0).abs() < 1e-9);
        let b = crate::quasipoly::QuasiPolynomial::from_pairs(&[(1.0, 0.5), (3.0, 0.0)]).unwrap();
        assert!((root_modulus_bound(&b) - 9.0).abs() < 1e-9);
    }

    #[test]
    fn resolved_run_catches_a_fast_unstable_root() {
        // one real root near 6e4, far beyond 1/h
        let system =
            FractionalSystem::from_f64(&[vec![-5.0, 4.0], vec![1.0, 3.0]], &[1.5, 0.1]).unwrap();
        let cfg = SimulationConfig {
            horizon: 5.0,
            ..SimulationConfig::default()
        };
        let check = cross_validate(&system, &cfg).unwrap();
        assert_eq!(check.resolved, Some(EmpiricalVerdict::Growing));
        assert_eq!(check.verdict(), EmpiricalVerdict::Growing);
    }

    #[test]
    fn escape_is_growth() {
        let cfg = SimulationConfig {
            horizon: 2.0,
            h: 1e-3,
            ..SimulationConfig::default()
        };
        let t = simulate(&scalar(400.0, 1.0), &cfg).unwrap();
        assert!(t.escaped);
        assert_eq!(empirical_verdict(&t).unwrap(), EmpiricalVerdict::Growing);
    }
}
