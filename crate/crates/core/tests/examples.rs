use std::path::PathBuf;

use fracstab::boundary::{trace_boundary, trinomial, trinomial_zero_set, Branch};
use fracstab::expr::Real;
use fracstab::gl_validator::{
    cross_validate, empirical_verdict, simulate, EmpiricalVerdict, SimulationConfig,
};
use fracstab::quasipoly::{expand_characteristic, FractionalSystem};
use fracstab::rhp_counter::{verdict, CounterConfig, VerdictKind};
use fracstab::slice::SliceProblem;
use fracstab::specfile::SystemSpec;

fn specs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("specs")
}

fn spec(name: &str) -> SystemSpec {
    SystemSpec::from_path(&specs_dir().join(format!("{name}.toml"))).unwrap()
}

#[test]
fn every_shipped_spec_round_trips() {
    let mut seen = 0;
    for entry in std::fs::read_dir(specs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let parsed = SystemSpec::from_path(&path).unwrap();
            let again = SystemSpec::parse(&parsed.to_toml()).unwrap();
            assert_eq!(parsed, again, "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 9);
}

/// Closed-form and traced boundaries of a trinomial slice within two cells
/// of each other, both ways.
fn boundaries_agree(name: &str, res: usize) {
    let s = spec(name);
    let slice = s.slice.clone().unwrap();
    let problem = SliceProblem::from_spec(&s).unwrap();
    let tri = trinomial(&s.symbolic().unwrap()).unwrap();
    let closed: Vec<Vec<f64>> = trinomial_zero_set(&tri, &slice, res)
        .into_iter()
        .filter(|t| t.branch == Branch::Axis)
        .map(|t| t.point)
        .collect();
    let traced: Vec<Vec<f64>> = trace_boundary(&problem, res)
        .unwrap()
        .into_iter()
        .flat_map(|l| l.points)
        .map(|p| p.point)
        .collect();
    assert!(!closed.is_empty() && !traced.is_empty());
    let h: Vec<f64> = (0..2)
        .map(|a| (slice.bounds(a).1 - slice.bounds(a).0) / res as f64)
        .collect();
    let dist = |a: &[f64], b: &[f64]| {
        (0..2)
            .map(|k| ((a[k] - b[k]) / h[k]).abs())
            .fold(0.0f64, f64::max)
    };
    for (from, to) in [(&closed, &traced), (&traced, &closed)] {
        for a in from {
            let nearest = to.iter().map(|b| dist(a, b)).fold(f64::INFINITY, f64::min);
            assert!(
                nearest <= 2.0,
                "{name}: {a:?} is {nearest} cells from the other curve"
            );
        }
    }
}

#[test]
fn trinomial_boundary_matches_trace_for_two_order_quasi_polynomial() {
    boundaries_agree("two_order_trinomial", 100);
}

#[test]
fn trinomial_boundary_matches_trace_for_boost_converter() {
    boundaries_agree("boost_converter", 100);
}

#[test]
fn quadratic_factor_has_real_roots() {
    // at unit orders the two-order trinomial is s² + 12s + 34, roots −6 ± √2
    let p = SliceProblem::from_spec(&spec("two_order_trinomial")).unwrap();
    let qp = p.bind(&[1.0, 1.0]).unwrap();
    for root in [-6.0 + 2f64.sqrt(), -6.0 - 2f64.sqrt()] {
        let v = qp
            .evaluate(num::complex::Complex64::new(root, 0.0))
            .unwrap();
        assert!(v.norm() < 1e-12);
    }
}

#[test]
fn singular_matrix_counts_as_stable_but_does_not_decay() {
    // det A = 0 puts a root at the branch point s = 0, outside the count
    let system =
        FractionalSystem::from_f64(&[vec![-2.0, 0.0], vec![3.0, 0.0]], &[0.2, 1.9]).unwrap();
    let qp = expand_characteristic(&system).unwrap().bind(&[]).unwrap();
    assert_eq!(
        verdict(&qp, &CounterConfig::default()).unwrap().kind,
        VerdictKind::Stable
    );
    let run = cross_validate(
        &system,
        &SimulationConfig {
            horizon: 20.0,
            ..SimulationConfig::default()
        },
    )
    .unwrap();
    assert_ne!(run.verdict(), EmpiricalVerdict::Decaying);
}

#[test]
fn step_halving_does_not_flip_the_empirical_verdict() {
    let systems = [
        (vec![vec![-1.0, 2.0], vec![-3.0, -1.0]], [0.67, 0.81]),
        (vec![vec![1.0, 1.0], vec![-1.0, 0.5]], [0.9, 0.6]),
        (vec![vec![-3.0, 0.0], vec![1.0, -2.0]], [1.4, 1.7]),
    ];
    for (a, q) in systems {
        let system = FractionalSystem::from_f64(&a, &q).unwrap();
        let coarse = SimulationConfig {
            h: 2e-3,
            horizon: 10.0,
            ..SimulationConfig::default()
        };
        let fine = SimulationConfig {
            h: 1e-3,
            ..coarse.clone()
        };
        let x = empirical_verdict(&simulate(&system, &coarse).unwrap()).unwrap();
        let y = empirical_verdict(&simulate(&system, &fine).unwrap()).unwrap();
        let flipped = matches!(
            (x, y),
            (EmpiricalVerdict::Decaying, EmpiricalVerdict::Growing)
                | (EmpiricalVerdict::Growing, EmpiricalVerdict::Decaying)
        );
        assert!(!flipped, "{a:?} {q:?}: {x} vs {y}");
    }
}

#[test]
fn boost_converter_trajectory_approaches_equilibrium() {
    let system = spec("boost_converter")
        .system()
        .unwrap()
        .at(&[1.0, 1.0])
        .unwrap();
    let t = simulate(
        &system,
        &SimulationConfig {
            horizon: 5.0,
            ..SimulationConfig::default()
        },
    )
    .unwrap();
    let last = t.states.last().unwrap();
    for (x, e) in last.iter().zip(&t.equilibrium) {
        assert!(
            (x - e).abs() < 1e-3 * (1.0 + e.abs()),
            "{last:?} vs {:?}",
            t.equilibrium
        );
    }
    let start = t.deviation()[0];
    assert!(*t.deviation().last().unwrap() < 1e-3 * start);
}

#[test]
fn fixed_orders_accept_exact_strings() {
    let s = SystemSpec::parse("A = [[\"-1/3\"]]\norders = [\"0.25\"]\n").unwrap();
    let orders = s.system().unwrap().orders();
    assert_eq!(orders[0].eval_real(&[]), Real::ratio(1, 4));
}
