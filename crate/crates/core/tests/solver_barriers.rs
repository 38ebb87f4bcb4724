use std::path::Path;
use std::sync::Arc;

use hopflab::barriers::{
    check_special_solution_sandwich, minimal_epsilon, special_solution, Barrier, BarrierKind, BarrierSamples,
};
use hopflab::calibration::Calibration;
use hopflab::config::GrowthConfig;
use hopflab::geometry::BoundaryGraph;
use hopflab::harness::{diagnostic_sequences, measure_boundary_modulus, measure_growth, refinement_stability};
use hopflab::pucci::EllipticityPair;
use hopflab::regdist::{RegularizedDistanceField, DEFAULT_ORDER};
use hopflab::solver::{boundary_from, GridProblem, Operator, ScalarFn, Stencil};

fn calibration() -> Calibration {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../calibration/default.json");
    Calibration::load(&path).unwrap()
}

fn graph(json: &str) -> BoundaryGraph {
    BoundaryGraph::new(&serde_json::from_str(json).unwrap(), 2, 1.0).unwrap()
}

fn field(json: &str) -> RegularizedDistanceField {
    RegularizedDistanceField::new(graph(json), 0.5, DEFAULT_ORDER).unwrap()
}

fn growth(json: serde_json::Value) -> GrowthConfig {
    serde_json::from_value(json).unwrap()
}

fn problem(g: &BoundaryGraph, op: Operator, rhs: ScalarFn, data: ScalarFn) -> GridProblem {
    GridProblem {
        graph: g.clone(),
        r: 1.0,
        h: 1.0 / 32.0,
        operator: op,
        rhs,
        dirichlet: boundary_from(data),
        stencil: Stencil::default(),
    }
}

#[test]
fn comparison_principle_on_ordered_data() {
    let g = graph(r#"{"family": "cone", "L": 0.1}"#);
    let e = EllipticityPair::new(1.0, 2.0).unwrap();
    // f1 >= f2 and g1 <= g2 give u1 <= u2 for ℒu = f.
    let lo = problem(&g, Operator::PucciMinus(e), Arc::new(|x| 1.0 + x[0] * x[0]), Arc::new(|x| x[0].sin()));
    let hi = problem(&g, Operator::PucciMinus(e), Arc::new(|x| x[1].cos() - 1.0), Arc::new(|x| x[0].sin() + 0.1));
    let (u1, u2) = (lo.solve().unwrap(), hi.solve().unwrap());
    assert!(u1.values.iter().zip(&u2.values).all(|(a, b)| a <= &(b + 1e-12)));
}

#[test]
fn pucci_plus_solution_lies_above_pucci_minus() {
    let g = graph(r#"{"family": "sinusoid", "A": 0.05, "k": 3.0}"#);
    let e = EllipticityPair::new(1.0, 3.0).unwrap();
    let data: ScalarFn = Arc::new(|x| x[0] * x[1] + x[0].powi(2));
    let rhs: ScalarFn = Arc::new(|x| x[0].cos());
    let plus = problem(&g, Operator::PucciPlus(e), rhs.clone(), data.clone()).solve().unwrap();
    let minus = problem(&g, Operator::PucciMinus(e), rhs, data).solve().unwrap();
    // 𝓜⁻u⁺ <= 𝓜⁺u⁺ = f, so u⁺ is a supersolution of the 𝓜⁻ problem.
    assert!(plus.values.iter().zip(&minus.values).all(|(p, m)| p + 1e-12 >= *m));
    assert!(plus.certificate.holds && minus.certificate.holds);
}

#[test]
fn solves_are_bit_identical() {
    let g = graph(r#"{"family": "cone", "L": 0.2}"#);
    let e = EllipticityPair::new(1.0, 2.0).unwrap();
    let run = || {
        problem(&g, Operator::PucciPlus(e), Arc::new(|x| x[0].abs()), Arc::new(|x| x[0] - x[1])).solve().unwrap().values
    };
    let (a, b) = (run(), run());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn half_the_minimal_epsilon_fails() {
    let e = EllipticityPair::new(1.0, 2.0).unwrap();
    let f = field(r#"{"family": "cone", "L": 0.05}"#);
    let samples = BarrierSamples::random(&f, 0.25, 1000, 2.5e-4, 11).unwrap();
    let eps = minimal_epsilon(BarrierKind::Sub, &e, &samples).unwrap();
    assert!(Barrier::new(eps, BarrierKind::Sub, e, 0.25).unwrap().verify(&samples).pass);
    assert!(!Barrier::new(0.5 * eps, BarrierKind::Sub, e, 0.25).unwrap().verify(&samples).pass);
}

#[test]
fn special_solution_sits_between_barriers() {
    let cal = calibration();
    let f = field(r#"{"family": "cone", "L": 0.1}"#);
    let r = 0.25;
    let eps = Barrier::select_epsilon(cal.c0_barrier, &f, r);
    let phi = special_solution(&f, r, 1.0 / 128.0, Operator::Laplace).unwrap();
    let rep = check_special_solution_sandwich(&phi, &f, eps, r, cal.k_special, 5.0).unwrap();
    assert!(rep.pass(), "{rep:?}");
    assert!(rep.positive);
    assert!(rep.deviation <= cal.k_special * r * 0.1);
}

#[test]
fn flat_cascade_reproduces_the_height() {
    let rep = measure_growth(&growth(serde_json::json!({"graph": {"family": "zero"}, "k_max": 5})), &calibration())
        .unwrap();
    assert!(rep.pass);
    assert!(rep.levels.iter().all(|l| (l.q - 1.0).abs() < 1e-10));
}

#[test]
fn recursion_epsilons_follow_the_seminorm() {
    let cal = calibration();
    let cfg = growth(serde_json::json!({
        "graph": {"family": "c1model", "omega": {"kind": "power", "alpha": 0.5, "scale": 0.1, "t0": 2.0}},
        "k_max": 6
    }));
    let rows = diagnostic_sequences(&cfg, &cal).unwrap();
    assert!(rows.windows(2).all(|w| w[1].epsilon < w[0].epsilon));
    let g = graph(r#"{"family": "c1model", "omega": {"kind": "power", "alpha": 0.5, "scale": 0.1, "t0": 2.0}}"#);
    for row in &rows {
        let expect = cal.c0_barrier * g.local_lip_seminorm(2f64.powi(-(row.k as i32)));
        assert!((row.epsilon - expect).abs() <= 1e-12 * expect.max(1e-300), "k = {}", row.k);
    }
}

#[test]
fn refinement_changes_little() {
    let cfg = growth(serde_json::json!({"graph": {"family": "cone", "L": 0.1}, "k_max": 4}));
    let change = refinement_stability(&cfg, &calibration()).unwrap();
    assert!(change < 0.02, "relative change {change}");
}

#[test]
fn cone_boundary_modulus_slope_is_bounded() {
    let cal = calibration();
    let l = 0.1;
    let cfg = growth(serde_json::json!({"graph": {"family": "cone", "L": l}, "k_max": 6}));
    let rep = measure_boundary_modulus(&cfg, &cal).unwrap();
    assert!(rep.q_fit.as_ref().unwrap().slope >= -cal.c_growth * l);
}

#[test]
fn calibration_round_trips() {
    let cal = calibration();
    assert_eq!(Calibration::from_json(&cal.to_json()).unwrap(), cal);
}
