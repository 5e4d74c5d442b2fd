//! Built-in oracle suite.
//!
//! Integrations use the configured tolerances while the pass limits are fixed,
//! so a corrupted tolerance shows up as a failure.

use std::sync::Arc;

use bilateral_core::approx::{direct_error, direct_solve, run_scheme, ApproximationConfig, ApproximationStack, Scheme};
use bilateral_core::bounds::{bilateral_bounds, solve_z1, solve_z2, solve_z3, GammaForm};
use bilateral_core::linear::fundamental_matrix;
use bilateral_core::model::PolySystemModel;
use bilateral_core::odeint::{norm, IntegratorOptions};
use bilateral_core::polyfield::{Monomial, PolyVectorField};
use bilateral_core::presets::preset;
use bilateral_core::region::{estimate_region, ClassifierParams, Method, RegionQuery};
use bilateral_core::signals::TimeSignal;

use crate::error::CliResult;

/// Largest accepted `‖Y_m + z − x‖`.
pub const TELESCOPE_LIMIT: f64 = 1e-7;
/// Slack on comparison and sandwich inequalities.
pub const ORDER_SLACK: f64 = 1e-9;
const HORIZON: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn trace_opts() -> IntegratorOptions {
    IntegratorOptions::with_tolerances(1e-10, 1e-14)
}

fn stack(model: &PolySystemModel, cfg: &ApproximationConfig) -> CliResult<ApproximationStack> {
    let st = run_scheme(model, cfg)?;
    if st.is_divergent() {
        return Err(bilateral_core::Error::InvalidArgument("approximation stack is divergent".into()).into());
    }
    Ok(st)
}

const PRESETS: [&str; 2] = ["vanderpol-8.1", "duffing-6a"];

fn telescoping(opts: &IntegratorOptions) -> CliResult<CheckResult> {
    let mut worst: f64 = 0.0;
    for name in PRESETS {
        let p = preset(name)?;
        let model = p.params.model()?;
        let x = direct_solve(&model, 0.0, &p.interior_x0, HORIZON, opts)?;
        for scheme in [Scheme::A, Scheme::B] {
            for m in 1..=3 {
                let cfg = ApproximationConfig::new(scheme, m, 0.0, p.interior_x0.to_vec(), HORIZON)
                    .with_options(opts.clone());
                let st = stack(&model, &cfg)?;
                let z = direct_error(&model, &st, opts)?;
                for &t in x.times() {
                    let ym = st.ym(t);
                    let zt = z.eval(t);
                    let xt = x.eval(t);
                    let d: Vec<f64> = (0..2).map(|i| ym[i] + zt[i] - xt[i]).collect();
                    worst = worst.max(norm(&d));
                }
            }
        }
    }
    Ok(CheckResult::new(
        "telescoping",
        worst <= TELESCOPE_LIMIT,
        format!("max |Y_m + z - x| = {worst:.3e} (limit {TELESCOPE_LIMIT:.0e})"),
    ))
}

fn dominance_and_sandwich(opts: &IntegratorOptions) -> CliResult<Vec<CheckResult>> {
    let (mut dom, mut lin, mut sand) = (0usize, 0usize, 0usize);
    let mut samples = 0usize;
    for name in PRESETS {
        let p = preset(name)?;
        let model = p.params.model()?;
        let trace = Arc::new(fundamental_matrix(model.a(), 0.0, HORIZON, &trace_opts())?);
        let x = direct_solve(&model, 0.0, &p.interior_x0, HORIZON, opts)?;
        for scheme in [Scheme::A, Scheme::B] {
            let cfg =
                ApproximationConfig::new(scheme, 2, 0.0, p.interior_x0.to_vec(), HORIZON).with_options(opts.clone());
            let st = stack(&model, &cfg)?;
            let z = direct_error(&model, &st, opts)?;
            let z1 = solve_z1(&model, &st, &trace, p.bracket.1, GammaForm::Exact, opts)?;
            let z2 = solve_z2(&model, &st, &trace, opts)?;
            let z3 = solve_z3(&model, &st, &trace, opts)?;
            for &t in z.times() {
                samples += 1;
                let e = z.norm_at(t);
                if z2.value_at(t) < e - ORDER_SLACK || z1.ode.value_at(t) < e - ORDER_SLACK {
                    dom += 1;
                }
                if z3.value_at(t) > z2.value_at(t) + ORDER_SLACK {
                    lin += 1;
                }
            }
            let bb = bilateral_bounds(&st, &z2);
            for (i, &t) in bb.times.iter().enumerate() {
                let xn = x.norm_at(t);
                if xn < bb.lower[i] - ORDER_SLACK || xn > bb.upper[i] + ORDER_SLACK {
                    sand += 1;
                }
            }
        }
    }
    Ok(vec![
        CheckResult::new(
            "dominance",
            dom == 0,
            format!("{dom} violations of Z1, Z2 >= |z| in {samples} samples"),
        ),
        CheckResult::new(
            "linearized-below-nonlinear",
            lin == 0,
            format!("{lin} violations of Z3 <= Z2"),
        ),
        CheckResult::new(
            "sandwich",
            sand == 0,
            format!("{sand} violations of lower <= |x| <= upper"),
        ),
    ])
}

fn linear_only(opts: &IntegratorOptions) -> CliResult<CheckResult> {
    let model = preset("vanderpol-8.1-forced")?.params.model()?.without_nonlinearity();
    let trace = Arc::new(fundamental_matrix(model.a(), 0.0, HORIZON, &trace_opts())?);
    let cfg = ApproximationConfig::new(Scheme::A, 3, 0.0, vec![0.3, -0.2], HORIZON).with_options(opts.clone());
    let st = stack(&model, &cfg)?;
    let higher_zero = (2..=3).all(|k| st.level(k).times().iter().all(|&t| st.level(k).norm_at(t) == 0.0));
    let z2 = solve_z2(&model, &st, &trace, opts)?;
    let z2_zero = z2.values().iter().all(|&v| v == 0.0);
    Ok(CheckResult::new(
        "linear-model",
        higher_zero && z2_zero,
        format!("y_k>=2 identically zero: {higher_zero}; Z2 identically zero: {z2_zero}"),
    ))
}

fn zero_state(opts: &IntegratorOptions) -> CliResult<CheckResult> {
    let model = preset("vanderpol-8.1")?.params.model()?;
    let trace = Arc::new(fundamental_matrix(model.a(), 0.0, HORIZON, &trace_opts())?);
    let cfg = ApproximationConfig::new(Scheme::A, 3, 0.0, vec![0.0, 0.0], HORIZON).with_options(opts.clone());
    let st = stack(&model, &cfg)?;
    let x = direct_solve(&model, 0.0, &[0.0, 0.0], HORIZON, opts)?;
    let z2 = solve_z2(&model, &st, &trace, opts)?;
    let all_zero = st.grid().iter().all(|&t| norm(&st.ym(t)) == 0.0)
        && x.sup_norm() == 0.0
        && z2.values().iter().all(|&v| v == 0.0);
    Ok(CheckResult::new(
        "zero-state",
        all_zero,
        format!("all outputs zero: {all_zero}"),
    ))
}

fn neg_identity() -> CliResult<CheckResult> {
    let c = TimeSignal::constant;
    let a = vec![vec![c(-1.0), c(0.0)], vec![c(0.0), c(-1.0)]];
    let trace = fundamental_matrix(&a, 0.0, 5.0, &trace_opts())?;
    let p_err = trace.p().iter().map(|p| (p + 1.0).abs()).fold(0.0, f64::max);
    let c_err = trace.c().iter().map(|c| (c - 1.0).abs()).fold(0.0, f64::max);
    Ok(CheckResult::new(
        "negative-identity",
        p_err < 1e-6 && c_err < 1e-9,
        format!("max |p + 1| = {p_err:.2e}, max |c - 1| = {c_err:.2e}"),
    ))
}

fn cubic_separatrix() -> CliResult<CheckResult> {
    let c = TimeSignal::constant;
    let f = PolyVectorField::new(1, vec![vec![Monomial::new(c(1.0), vec![3])]])?;
    let model = PolySystemModel::new(vec![vec![c(-1.0)]], f, 0.0, vec![TimeSignal::zero()])?;
    let tol = 1e-4;
    let q = RegionQuery {
        t0: 0.0,
        horizon: 40.0,
        n_directions: 2,
        r_lo: 0.5,
        r_hi: 2.0,
        tolerance: tol,
        method: Method::ReferenceDirect,
        params: ClassifierParams::default(),
    };
    let est = estimate_region(&model, &q)?;
    let worst = est.thresholds().iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    Ok(CheckResult::new(
        "cubic-separatrix",
        worst <= tol,
        format!("max |threshold - 1| = {worst:.2e} (tolerance {tol:.0e})"),
    ))
}

fn failed(name: &str, e: impl std::fmt::Display) -> CheckResult {
    CheckResult::new(name, false, format!("error: {e}"))
}

/// Runs every check; integrations use `opts`. A check that errors counts as failed.
pub fn run_checks(opts: &IntegratorOptions) -> Vec<CheckResult> {
    let mut out = vec![telescoping(opts).unwrap_or_else(|e| failed("telescoping", e))];
    match dominance_and_sandwich(opts) {
        Ok(v) => out.extend(v),
        Err(e) => out.push(failed("dominance", e)),
    }
    out.push(linear_only(opts).unwrap_or_else(|e| failed("linear-model", e)));
    out.push(zero_state(opts).unwrap_or_else(|e| failed("zero-state", e)));
    out.push(neg_identity().unwrap_or_else(|e| failed("negative-identity", e)));
    out.push(cubic_separatrix().unwrap_or_else(|e| failed("cubic-separatrix", e)));
    out
}
