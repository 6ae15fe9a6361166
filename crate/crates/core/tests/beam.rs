use aedd_core::global::NewtonConfig;
use aedd_core::harness::{
    reference_curve, run_beam_case, BeamSpec, CaseKind, RunConfig, SolverKind,
};

/// Tip deflection `δ/L` of the inextensible elastica under a tip force of
/// fixed direction: `θ'' = −α cos θ`, `θ(0) = 0`, `θ'(1) = 0`, shot on `θ'(0)`
/// with RK4 and bisection.
fn elastica_tip_deflection(alpha: f64) -> f64 {
    let n = 4000;
    let h = 1.0 / n as f64;
    let integrate = |k0: f64| {
        // state (θ, θ', δ)
        let f = |y: [f64; 3]| [y[1], -alpha * y[0].cos(), y[0].sin()];
        let mut y = [0.0, k0, 0.0];
        for _ in 0..n {
            let add = |a: [f64; 3], b: [f64; 3], s: f64| {
                [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
            };
            let k1 = f(y);
            let k2 = f(add(y, k1, 0.5 * h));
            let k3 = f(add(y, k2, 0.5 * h));
            let k4 = f(add(y, k3, h));
            for i in 0..3 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    };
    // θ'(1) changes sign on [0, α] for the first buckling-free branch
    let (mut lo, mut hi) = (0.0, alpha);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if integrate(mid)[1] > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    integrate(0.5 * (lo + hi))[2]
}

#[test]
fn elastica_oracle_matches_the_small_load_limit() {
    let a = 1e-3;
    assert!((elastica_tip_deflection(a) / (a / 3.0) - 1.0).abs() < 1e-3);
    let d = elastica_tip_deflection(10.0);
    assert!((d - 0.8106).abs() < 5e-4, "{d}");
}

#[test]
fn small_load_matches_euler_bernoulli() {
    let spec = BeamSpec {
        max_load: 0.01,
        load_steps: 1,
        ..BeamSpec::default()
    };
    let p = spec.problem().unwrap();
    let steps = p.reference_solve(1, &NewtonConfig::default()).unwrap();
    let c = reference_curve(&spec, &p, &steps).unwrap();
    let ratio = c.deflection[0] / (spec.max_load / 3.0);
    // five nodes through the depth leave a few percent of extra compliance
    assert!((ratio - 1.0).abs() < 0.06, "ratio {ratio}");
}

#[test]
fn large_deflection_follows_the_elastica() {
    let spec = BeamSpec::default();
    let p = spec.problem().unwrap();
    let steps = p
        .reference_solve(spec.load_steps, &NewtonConfig::default())
        .unwrap();
    let c = reference_curve(&spec, &p, &steps).unwrap();
    // the same extra compliance as at small loads, fading as the beam stiffens
    for (&load, &d) in c.load.iter().zip(&c.deflection) {
        let exact = elastica_tip_deflection(load);
        assert!(
            (d / exact - 1.0).abs() < 0.05,
            "load {load}: {d} vs {exact}"
        );
    }
    let exact = elastica_tip_deflection(spec.max_load);
    assert!((c.deflection[9] / exact - 1.0).abs() < 0.01);
    // deflection grows with load but stiffens
    assert!(c.deflection.windows(2).all(|w| w[1] > w[0]));
    assert!(c.deflection[9] < 10.0 * c.deflection[0]);
}

#[test]
fn model_solver_reproduces_the_reference() {
    let mut cfg = RunConfig::preset(CaseKind::Beam);
    cfg.solver.kind = SolverKind::Model;
    let r = run_beam_case(&cfg, std::path::Path::new(".")).unwrap();
    assert_eq!(r.nrmsd, Some(0.0));
    assert_eq!(r.predicted, r.reference);
    assert!(r.run.is_none() && r.completed());
}
