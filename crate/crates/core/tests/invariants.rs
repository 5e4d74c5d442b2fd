use std::sync::Arc;

use proptest::prelude::*;

use bilateral_core::approx::{direct_error, direct_solve, run_scheme, ApproximationConfig, Scheme};
use bilateral_core::bounds::{bilateral_bounds, solve_z2, solve_z3};
use bilateral_core::linear::fundamental_matrix;
use bilateral_core::odeint::{norm, IntegratorOptions};
use bilateral_core::presets::preset;
use bilateral_core::region::{estimate_region, ClassifierParams, Method, RegionQuery};

const HORIZON: f64 = 12.0;

fn opts() -> IntegratorOptions {
    IntegratorOptions::with_tolerances(1e-10, 1e-13)
}

fn slack(sup_x: f64) -> f64 {
    10.0 * (1e-13 + 1e-10 * sup_x)
}

fn scheme_strategy() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::A), Just(Scheme::B)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn telescoping_holds_for_interior_states(
        name in prop::sample::select(vec!["vanderpol-8.1", "duffing-6a", "duffing-6b"]),
        scheme in scheme_strategy(),
        m in 1usize..=3,
        angle in 0.0..std::f64::consts::TAU,
        scale in 0.05..0.6f64,
    ) {
        let p = preset(name).unwrap();
        let model = p.params.model().unwrap();
        let r = scale * norm(&p.interior_x0);
        let x0 = vec![r * angle.cos(), r * angle.sin()];
        let cfg = ApproximationConfig::new(scheme, m, 0.0, x0.clone(), HORIZON).with_options(opts());
        let st = run_scheme(&model, &cfg).unwrap();
        prop_assume!(!st.is_divergent());
        let x = direct_solve(&model, 0.0, &x0, HORIZON, &opts()).unwrap();
        let z = direct_error(&model, &st, &opts()).unwrap();
        let tol = slack(x.sup_norm());
        for &t in x.times() {
            let (ym, zt, xt) = (st.ym(t), z.eval(t), x.eval(t));
            let d: Vec<f64> = (0..2).map(|i| ym[i] + zt[i] - xt[i]).collect();
            prop_assert!(norm(&d) <= tol, "t={t} err={}", norm(&d));
        }
    }

    #[test]
    fn bounds_are_ordered_and_sandwich_the_solution(
        name in prop::sample::select(vec!["vanderpol-8.1-forced", "duffing-6f", "duffing-pulse"]),
        scheme in scheme_strategy(),
        m in 1usize..=3,
        angle in 0.0..std::f64::consts::TAU,
        scale in 0.05..0.6f64,
    ) {
        let p = preset(name).unwrap();
        let model = p.params.model().unwrap();
        let r = scale * norm(&p.interior_x0);
        let x0 = vec![r * angle.cos(), r * angle.sin()];
        let cfg = ApproximationConfig::new(scheme, m, 0.0, x0.clone(), HORIZON).with_options(opts());
        let st = run_scheme(&model, &cfg).unwrap();
        prop_assume!(!st.is_divergent());
        let trace = Arc::new(fundamental_matrix(model.a(), 0.0, HORIZON, &opts()).unwrap());
        let z2 = solve_z2(&model, &st, &trace, &opts()).unwrap();
        let z3 = solve_z3(&model, &st, &trace, &opts()).unwrap();
        let x = direct_solve(&model, 0.0, &x0, HORIZON, &opts()).unwrap();
        let tol = slack(x.sup_norm());
        let bb = bilateral_bounds(&st, &z2);
        for (i, &t) in bb.times.iter().enumerate() {
            prop_assert!(bb.lower[i] >= 0.0 && bb.lower[i] <= bb.upper[i]);
            let xn = x.norm_at(t);
            prop_assert!(xn >= bb.lower[i] - tol && xn <= bb.upper[i] + tol, "t={t}");
            prop_assert!(z3.value_at(t) <= z2.value_at(t) + tol, "t={t}");
        }
    }
}

#[test]
fn unforced_odd_field_gives_symmetric_boundary() {
    let p = preset("vanderpol-8.1").unwrap();
    let model = p.params.model().unwrap();
    for method in [
        Method::ReferenceDirect,
        Method::ComparisonZ2 {
            m: 2,
            scheme: Scheme::A,
        },
    ] {
        let tol = 1e-3 * p.bracket.1;
        let q = RegionQuery {
            t0: 0.0,
            horizon: p.horizon,
            n_directions: 8,
            r_lo: p.bracket.0,
            r_hi: p.bracket.1,
            tolerance: tol,
            method,
            params: ClassifierParams::default(),
        };
        let r = estimate_region(&model, &q).unwrap().thresholds();
        for j in 0..4 {
            assert!(
                (r[j] - r[j + 4]).abs() <= 2.0 * tol,
                "{method} dir {j}: {} vs {}",
                r[j],
                r[j + 4]
            );
        }
    }
}

#[test]
fn weaker_cubic_enlarges_the_region() {
    let q = |p: &bilateral_core::presets::Preset| RegionQuery {
        t0: 0.0,
        horizon: p.horizon,
        n_directions: 8,
        r_lo: p.bracket.0,
        r_hi: p.bracket.1,
        tolerance: 1e-3 * p.bracket.1,
        method: Method::ReferenceDirect,
        params: ClassifierParams::default(),
    };
    let strong = preset("vanderpol-8.1").unwrap();
    let weak = preset("vanderpol-fig3").unwrap();
    let a = estimate_region(&strong.params.model().unwrap(), &q(&strong))
        .unwrap()
        .thresholds();
    let b = estimate_region(&weak.params.model().unwrap(), &q(&weak))
        .unwrap()
        .thresholds();
    for (j, (x, y)) in a.iter().zip(&b).enumerate() {
        assert!(y > x, "dir {j}: {y} <= {x}");
    }
}

#[test]
fn blowup_threshold_does_not_change_boundaries() {
    let p = preset("duffing-6a").unwrap();
    let model = p.params.model().unwrap();
    for method in [
        Method::ReferenceDirect,
        Method::ComparisonZ2 {
            m: 2,
            scheme: Scheme::A,
        },
    ] {
        let run = |threshold: f64| {
            let q = RegionQuery {
                t0: 0.0,
                horizon: p.horizon,
                n_directions: 4,
                r_lo: p.bracket.0,
                r_hi: p.bracket.1,
                tolerance: 1e-3,
                method,
                params: ClassifierParams {
                    blowup_threshold: threshold,
                    ..ClassifierParams::default()
                },
            };
            estimate_region(&model, &q).unwrap().thresholds()
        };
        let base = run(1e6);
        for threshold in [1e3, 1e9] {
            assert_eq!(run(threshold), base, "{method} at threshold {threshold:e}");
        }
    }
}
