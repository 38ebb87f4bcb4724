//! One line per acceptance criterion; exits nonzero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hopflab::barriers::{fit_through_origin, minimal_epsilon, Barrier, BarrierKind, BarrierSamples};
use hopflab::calibration::Calibration;
use hopflab::config::GrowthConfig;
use hopflab::geometry::BoundaryGraph;
use hopflab::harness::{fit_line, measure_boundary_modulus, measure_growth};
use hopflab::modulus::{CompositeModulus, Modulus};
use hopflab::pucci::{EllipticityPair, SymMatrix};
use hopflab::regdist::{RegularizedDistanceField, DEFAULT_ORDER};
use hopflab::solver::{boundary_from, zero_fn, GridProblem, Operator, ScalarFn, Stencil};

type Outcome = Result<String, String>;

fn calibration() -> Calibration {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../calibration/default.json");
    Calibration::load(&path).expect("calibration/default.json")
}

fn graph(json: &str, radius: f64) -> BoundaryGraph {
    BoundaryGraph::new(&serde_json::from_str(json).unwrap(), 2, radius).unwrap()
}

fn growth_config(json: serde_json::Value) -> GrowthConfig {
    serde_json::from_value(json).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// `γ - 1` for the sector of opening `π - 2 arctan L`, from `r^γ sin(γφ)`.
fn sector_oracle(lip: f64) -> f64 {
    let theta = PI - 2.0 * lip.atan();
    PI / theta - 1.0
}

fn regularized_distance(cal: &Calibration) -> Outcome {
    let families = [
        r#"{"family": "zero"}"#,
        r#"{"family": "linear", "a": [0.07]}"#,
        r#"{"family": "cone", "L": 0.05}"#,
        r#"{"family": "cone", "L": 0.1}"#,
        r#"{"family": "sinusoid", "A": 0.05, "k": 4.0}"#,
        r#"{"family": "c1model", "omega": {"kind": "power", "alpha": 0.5, "scale": 0.1, "t0": 2.0}}"#,
        r#"{"family": "c1model", "omega": {"kind": "power", "alpha": 1.0, "scale": 0.1, "t0": 2.0}}"#,
    ];
    let c = cal.c_regdist(2);
    let mut worst = 0.0f64;
    let mut exact_err = 0.0f64;
    for (i, json) in families.iter().enumerate() {
        let f = RegularizedDistanceField::new(graph(json, 1.0), 0.5, DEFAULT_ORDER).map_err(|e| format!("{json}: {e}"))?;
        let pts = f.random_points(1000, 100 + i as u64);
        let samples = f.sandwich_sweep(&pts).map_err(|e| format!("{json}: {e}"))?;
        if let Some(bad) = samples.iter().find(|s| !s.holds(c, 1e-10)) {
            return Err(format!("{json}: bound fails at {:?}", bad.point));
        }
        let affine = i < 2;
        for s in &samples {
            if affine {
                exact_err = exact_err.max((s.ratio - 1.0).abs()).max(s.d * s.hess_norm);
            } else {
                worst = worst.max(s.normalized_deficit());
            }
        }
    }
    check(
        exact_err <= 1e-10,
        format!("7 families x 1000 points, worst deficit/S {worst:.3} vs C {c:.3}, affine error {exact_err:.1e}"),
    )
}

fn barriers(cal: &Calibration) -> Outcome {
    let e = cal.ellipticity;
    let domains: Vec<(String, f64)> = vec![
        (r#"{"family": "cone", "L": 0.01}"#.into(), 0.25),
        (r#"{"family": "cone", "L": 0.05}"#.into(), 0.25),
        (r#"{"family": "c1model", "omega": {"kind": "constant", "L": 0.05, "t0": 4.0}, "sign": -1.0}"#.into(), 0.25),
        (r#"{"family": "sinusoid", "A": 0.01, "k": 4.0}"#.into(), 0.25),
        (r#"{"family": "c1model", "omega": {"kind": "power", "alpha": 0.5, "scale": 0.1, "t0": 2.0}}"#.into(), 1.0 / 16.0),
        (r#"{"family": "c1model", "omega": {"kind": "power", "alpha": 0.5, "scale": 0.1, "t0": 2.0}}"#.into(), 1.0 / 256.0),
    ];
    for (i, (json, r)) in domains.iter().enumerate() {
        let f = RegularizedDistanceField::new(graph(json, 1.0), 0.5, DEFAULT_ORDER).map_err(|e| e.to_string())?;
        let eps = Barrier::select_epsilon(cal.c0_barrier, &f, *r);
        let samples = BarrierSamples::random(&f, *r, 1000, 1e-3 * r, 200 + i as u64).map_err(|e| e.to_string())?;
        for kind in [BarrierKind::Sub, BarrierKind::Super] {
            let rep = Barrier::new(eps, kind, e, *r).map_err(|e| format!("{json}: {e}"))?.verify(&samples);
            if !rep.pass {
                return Err(format!("{json} r={r}: {kind:?} min {:.3e} at {:?}", rep.min_value, rep.argmin));
            }
        }
    }
    let lips: Vec<f64> = (1..=10).map(|i| 0.01 * i as f64).collect();
    let mut minima = Vec::new();
    for (i, &l) in lips.iter().enumerate() {
        let f = RegularizedDistanceField::new(graph(&format!(r#"{{"family": "cone", "L": {l}}}"#), 1.0), 0.5, DEFAULT_ORDER)
            .map_err(|e| e.to_string())?;
        let samples = BarrierSamples::random(&f, 0.25, 1000, 2.5e-4, 300 + i as u64).map_err(|e| e.to_string())?;
        let sub = minimal_epsilon(BarrierKind::Sub, &e, &samples).ok_or("no sub epsilon")?;
        let sup = minimal_epsilon(BarrierKind::Super, &e, &samples).ok_or("no super epsilon")?;
        minima.push(sub.max(sup));
    }
    let (slope, r2) = fit_through_origin(&lips, &minima);
    check(
        r2 >= 0.98 && slope <= cal.c0_barrier,
        format!("6 domains pass at eps = C0 S; minimal eps ~ {slope:.3} L (R^2 {r2:.5}), C0 = {:.3}", cal.c0_barrier),
    )
}

fn manufactured(op: Operator, exact: ScalarFn) -> Result<(f64, f64), String> {
    let g = graph(r#"{"family": "sinusoid", "A": 0.1, "k": 3.0}"#, 1.0);
    let mut all = Vec::new();
    let mut interior = Vec::new();
    let hs = [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0];
    for h in hs {
        let p = GridProblem {
            graph: g.clone(),
            r: 1.0,
            h,
            operator: op.clone(),
            rhs: zero_fn(),
            dirichlet: boundary_from(exact.clone()),
            stencil: Stencil::default(),
        };
        let s = p.solve().map_err(|e| e.to_string())?;
        let (mut e_all, mut e_int) = (0.0f64, 0.0f64);
        for k in 0..s.values.len() {
            let x = s.point(k);
            let err = (s.values[k] - exact(&x)).abs();
            e_all = e_all.max(err);
            if x[0].hypot(x[1]) < 0.75 && x[1] - g.gamma(&[x[0]]) > 0.25 {
                e_int = e_int.max(err);
            }
        }
        all.push(e_all.ln());
        interior.push(e_int.ln());
    }
    let log_h: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    Ok((fit_line(&log_h, &all).unwrap().slope, fit_line(&log_h, &interior).unwrap().slope))
}

fn solver_order() -> Outcome {
    let harmonic: ScalarFn = Arc::new(|x| x[0].exp() * x[1].sin());
    let s2 = 2f64.sqrt();
    let aniso: ScalarFn = Arc::new(move |x| (s2 * x[0]).exp() * x[1].sin());
    let e = EllipticityPair::new(1.0, 2.0).unwrap();
    let (lap, lap_int) = manufactured(Operator::Laplace, harmonic.clone())?;
    let fixed = Operator::Fixed { field: Arc::new(|_| SymMatrix::diag(&[1.0, 2.0])), ellipticity: e };
    let (fix, fix_int) = manufactured(fixed, aniso)?;

    let g = graph(r#"{"family": "cone", "L": 0.2}"#, 1.0);
    let data: ScalarFn = Arc::new(|x| x[0] * x[0] - x[1] + 0.3 * x[0]);
    let solve = |op: Operator| {
        GridProblem {
            graph: g.clone(),
            r: 1.0,
            h: 1.0 / 128.0,
            operator: op,
            rhs: Arc::new(|x| x[0].cos()),
            dirichlet: boundary_from(data.clone()),
            stencil: Stencil::default(),
        }
        .solve()
        .map_err(|e| e.to_string())
    };
    let a = solve(Operator::Laplace)?;
    let b = solve(Operator::PucciMinus(EllipticityPair::new(1.0, 1.0).unwrap()))?;
    let diff = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    check(
        lap >= 1.0 && fix >= 1.0 && lap_int >= 1.9 && fix_int >= 1.9 && diff <= 1e-10,
        format!(
            "orders laplace {lap:.2} (interior {lap_int:.2}), anisotropic {fix:.2} (interior {fix_int:.2}); pucci vs laplace {diff:.1e}"
        ),
    )
}

fn sector_exponent(cal: &Calibration) -> Outcome {
    let cfg = growth_config(serde_json::json!({"graph": {"family": "cone", "L": 0.2}, "k_max": 7, "h0": 1.0 / 64.0}));
    let rep = measure_growth(&cfg, cal).map_err(|e| e.to_string())?;
    let fit = rep.q_fit.ok_or("no fit")?;
    let expected = sector_oracle(0.2);
    let rel = (fit.slope - expected).abs() / expected;
    check(rel <= 0.05, format!("slope {:.5} vs gamma - 1 = {expected:.5} ({:.2}% off)", fit.slope, 100.0 * rel))
}

fn hopf_oleinik(cal: &Calibration) -> Outcome {
    let cfg = growth_config(serde_json::json!({
        "graph": {"family": "c1model", "omega": {"kind": "power", "alpha": 0.5, "t0": 4.0}},
        "k_max": 7
    }));
    let rep = measure_growth(&cfg, cal).map_err(|e| e.to_string())?;
    let c = cal.c_growth;
    // ∫_a^b s^{1/2} ds/s = 2(√b - √a).
    let integral = |a: f64, b: f64| 2.0 * (b.sqrt() - a.sqrt());
    let q2 = rep.levels.iter().find(|l| l.k == 2).ok_or("no level 2")?.q;
    for l in rep.levels.iter().filter(|l| (3..=7).contains(&l.k)) {
        let i = integral(l.r, 0.5);
        let ratio = l.q / q2;
        if !(ratio >= (-c * i).exp() / c && ratio <= c * (c * i).exp()) {
            return Err(format!("k = {}: q_k/q_2 = {ratio:.4} outside envelopes", l.k));
        }
    }
    let q7 = rep.levels.iter().find(|l| l.k == 7).ok_or("no level 7")?.q;
    let drift = (q7 / q2).ln().abs();
    let bound = c * integral(2f64.powi(-7), 0.5);
    check(drift <= bound, format!("q_k/q_2 inside envelopes for k = 3..7; drift {drift:.4} <= {bound:.4}"))
}

fn log_lipschitz(cal: &Calibration) -> Outcome {
    let cfg = growth_config(serde_json::json!({
        "graph": {"family": "c1model", "omega": {"kind": "log", "c": 1.0, "t0": 0.6}, "sign": -1.0},
        "k_min": 2,
        "k_max": 9
    }));
    let rep = measure_boundary_modulus(&cfg, cal).map_err(|e| e.to_string())?;
    let c = cal.c_growth;
    let b = cfg.top_radius();
    let a = rep.u_sup / b;
    // ∫_t^b ds/(s ln(1/s)) = ln ln(1/t) - ln ln(1/b).
    let omega_tilde = |t: f64| t * a * (c * ((1.0 / t).ln().ln() - (1.0 / b).ln().ln())).exp();
    let mut worst = 0.0f64;
    for l in rep.levels.iter().filter(|l| l.r < b) {
        worst = worst.max(l.m * l.r / (c * omega_tilde(l.r)));
    }
    let fit = rep.m_loglog_fit.ok_or("no fit")?;
    check(
        worst <= 1.0 && fit.slope > 0.0 && fit.slope <= c,
        format!("max m_k r_k / (C w~(r_k)) = {worst:.3}; log m_k vs log log(1/r_k) slope {:.3} in (0, {c:.3}]", fit.slope),
    )
}

fn modulus_calculus() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut min_slope = f64::INFINITY;
    let mut worst_additivity = 0.0f64;
    let mut worst_closed = 0.0f64;
    for _ in 0..10 {
        let t0 = 0.9;
        let pick = |rng: &mut ChaCha8Rng| -> Modulus {
            if rng.random::<bool>() {
                Modulus::power(rng.random_range(0.2..1.0), rng.random_range(0.1..2.0), t0).unwrap()
            } else {
                Modulus::log(rng.random_range(0.1..2.0), t0).unwrap()
            }
        };
        let (w1, w2) = (pick(&mut rng), pick(&mut rng));
        let a = rng.random_range(0.1..2.0);
        let b = rng.random_range(0.2..0.8);
        let c = rng.random_range(0.1..2.0);
        let comp = CompositeModulus::new(a, b, c, w1.clone(), w2.clone()).map_err(|e| e.to_string())?;
        let t1 = comp.t_tilde0;
        let ts: Vec<f64> = (0..=60).map(|i| t1 * 10f64.powf(-6.0 * (60 - i) as f64 / 60.0) * (1.0 - 1e-9)).collect();
        let vals: Vec<f64> = ts.iter().map(|&t| comp.eval(t).unwrap()).collect();
        for i in 1..ts.len() {
            if vals[i] <= vals[i - 1] {
                return Err(format!("w~ not increasing near t = {}", ts[i]));
            }
            min_slope = min_slope.min((vals[i] / vals[i - 1]).ln() / (ts[i] / ts[i - 1]).ln());
        }
        for w in [&w1, &w2] {
            let (x, y, z) = (1e-4, 0.3 * b, b);
            let whole = w.dini_integral(x, z).unwrap();
            let parts = w.dini_integral(x, y).unwrap() + w.dini_integral(y, z).unwrap();
            worst_additivity = worst_additivity.max((whole - parts).abs() / whole);
            let quad = w.dini_integral_quadrature(x, z, 1e-12).unwrap();
            worst_closed = worst_closed.max((whole - quad).abs() / whole);
        }
    }
    check(
        min_slope >= 0.45 && worst_additivity <= 1e-9 && worst_closed <= 1e-9,
        format!("10 configs: min log-slope {min_slope:.3}, additivity {worst_additivity:.1e}, closed form vs quadrature {worst_closed:.1e}"),
    )
}

fn maximum_principle() -> Outcome {
    let g = graph(r#"{"family": "sinusoid", "A": 0.1, "k": 3.0}"#, 1.0);
    let e = EllipticityPair::new(1.0, 2.0).unwrap();
    for op in [Operator::Laplace, Operator::PucciMinus(e), Operator::PucciPlus(e)] {
        let name = op.name();
        let s = GridProblem {
            graph: g.clone(),
            r: 1.0,
            h: 1.0 / 64.0,
            operator: op,
            rhs: zero_fn(),
            dirichlet: boundary_from(Arc::new(|x| (3.0 * x[0]).sin() + x[1] * x[1])),
            stencil: Stencil::default(),
        }
        .solve()
        .map_err(|e| e.to_string())?;
        let abp = s.abp_check();
        if !(abp.maximum_principle && abp.max_u <= abp.max_boundary) {
            return Err(format!("{name}: max u {} above boundary max {}", abp.max_u, abp.max_boundary));
        }
    }
    let half_disk = graph(r#"{"family": "zero"}"#, 1.0);
    let mut constants = Vec::new();
    for h in [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0] {
        let s = GridProblem {
            graph: half_disk.clone(),
            r: 1.0,
            h,
            operator: Operator::Laplace,
            rhs: Arc::new(|_| -1.0),
            dirichlet: boundary_from(zero_fn()),
            stencil: Stencil::Standard5,
        }
        .solve()
        .map_err(|e| e.to_string())?;
        constants.push(s.abp_check().c_abp);
    }
    let finest = constants[2];
    let spread = constants.iter().map(|c| (c - finest).abs() / finest).fold(0.0, f64::max);
    check(spread <= 0.10, format!("f = 0 maxima on the boundary; C_ABP {constants:.4?}, spread {:.2}%", 100.0 * spread))
}

fn main() {
    let cal = calibration();
    type Criterion<'a> = (&'a str, Duration, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("regularized distance bounds", Duration::from_secs(60), Box::new(|| regularized_distance(&cal))),
        ("barrier signs and linear epsilon", Duration::from_secs(120), Box::new(|| barriers(&cal))),
        ("solver convergence order", Duration::from_secs(300), Box::new(solver_order)),
        ("sector growth exponent", Duration::from_secs(600), Box::new(|| sector_exponent(&cal))),
        ("Hopf-Oleinik envelopes", Duration::from_secs(600), Box::new(|| hopf_oleinik(&cal))),
        ("logLipschitz boundary modulus", Duration::from_secs(600), Box::new(|| log_lipschitz(&cal))),
        ("modulus calculus", Duration::from_secs(10), Box::new(modulus_calculus)),
        ("maximum principle and ABP", Duration::from_secs(60), Box::new(maximum_principle)),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if took <= *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {budget:?} budget")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {}: {status} {name} ({:.1}s): {detail}", i + 1, took.as_secs_f64());
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
