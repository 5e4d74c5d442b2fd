//! Subcommand implementations. Each returns the files it would write.

use std::sync::Arc;

use bilateral_core::approx::{direct_error, direct_solve, run_scheme, ApproximationConfig, ApproximationStack};
use bilateral_core::bounds::{
    bilateral_bounds, decay_hypothesis, norm_comparison_solve, solve_z1, solve_z2, solve_z3, BoundTrace,
};
use bilateral_core::linear::{fundamental_matrix, FundamentalMatrixTrace};
use bilateral_core::odeint::{norm, IntegratorOptions, Trajectory};
use bilateral_core::region::{estimate_region_with, sweep_t0, Method, RegionContext, RegionEstimate, RegionQuery};

use crate::config::{Resolved, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Csv, OutputSet};

fn trace_options() -> IntegratorOptions {
    IntegratorOptions::with_tolerances(1e-10, 1e-14)
}

fn uniform_grid(t0: f64, t_end: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                t_end
            } else {
                t0 + (t_end - t0) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

fn norm_beyond(tr: &Trajectory, t: f64) -> f64 {
    if t > tr.t_end() {
        f64::INFINITY
    } else {
        tr.norm_at(t)
    }
}

/// Allowance for integration error when comparing `‖x‖` with the bounds.
pub fn sandwich_slack(opts: &IntegratorOptions, sup_x: f64) -> f64 {
    10.0 * (opts.abs_tol + opts.rel_tol * sup_x)
}

struct Common {
    r: Resolved,
    opts: IntegratorOptions,
    trace: Arc<FundamentalMatrixTrace>,
    stack: ApproximationStack,
    x: Trajectory,
}

fn common(cfg: &RunConfig) -> CliResult<Common> {
    let r = cfg.resolve()?;
    let opts = cfg.approximation.integrator_options();
    let trace = Arc::new(fundamental_matrix(r.model.a(), r.t0, r.t_end(), &trace_options())?);
    let acfg = ApproximationConfig::new(
        cfg.approximation.scheme,
        cfg.approximation.m,
        r.t0,
        r.x0.clone(),
        r.t_end(),
    )
    .with_options(opts.clone());
    let stack = run_scheme(&r.model, &acfg)?;
    if stack.is_divergent() {
        return Err(CliError::Numeric(bilateral_core::Error::InvalidArgument(format!(
            "approximation level {} blew up; x0 is far outside the region",
            stack.divergent_level().unwrap_or(0)
        ))));
    }
    let x = direct_solve(&r.model, r.t0, &r.x0, r.t_end(), &opts)?;
    Ok(Common {
        r,
        opts,
        trace,
        stack,
        x,
    })
}

/// `‖x_direct‖`, `‖Y_m‖`, the bilateral bounds and `Z₂` on a uniform grid, plus the
/// per-level norms and the fundamental-matrix diagnostics.
pub fn simulate(cfg: &RunConfig) -> CliResult<OutputSet> {
    let mut out = OutputSet::new(&cfg.output_dir);
    let c = common(cfg)?;
    let z2 = solve_z2(&c.r.model, &c.stack, &c.trace, &c.opts)?;
    let mut csv = Csv::new(&["t", "x_norm", "ym_norm", "lower", "upper", "z2"]);
    for t in uniform_grid(c.r.t0, c.r.t_end(), cfg.approximation.samples) {
        let y = norm(&c.stack.ym(t));
        let z = z2.value_at(t);
        csv.row(vec![
            t.into(),
            norm_beyond(&c.x, t).into(),
            y.into(),
            (y - z).max(0.0).into(),
            (y + z).into(),
            z.into(),
        ]);
    }
    out.add_csv("simulate.csv", &csv);

    let z = direct_error(&c.r.model, &c.stack, &c.opts)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=c.stack.m()).map(|k| format!("y{k}_norm")));
    header.extend(["ym_norm".to_string(), "z_norm".to_string()]);
    let mut levels = Csv::new(&header);
    for t in uniform_grid(c.r.t0, c.r.t_end(), cfg.approximation.samples) {
        let mut row: Vec<Cell> = vec![t.into()];
        row.extend(c.stack.levels().iter().map(|y| Cell::from(y.norm_at(t))));
        row.push(norm(&c.stack.ym(t)).into());
        row.push(norm_beyond(&z, t).into());
        levels.row(row);
    }
    out.add_csv("levels.csv", &levels);

    let mut fm = Csv::new(&["t", "w_norm", "p", "c"]);
    for (i, &t) in c.trace.times().iter().enumerate() {
        fm.row(vec![
            t.into(),
            c.trace.sigma_max()[i].into(),
            c.trace.p()[i].into(),
            c.trace.c()[i].into(),
        ]);
    }
    out.add_csv("fundamental.csv", &fm);
    Ok(out)
}

/// All three error bounds, `X*` and the diagnostics they rest on.
pub fn bounds(cfg: &RunConfig) -> CliResult<OutputSet> {
    let mut out = OutputSet::new(&cfg.output_dir);
    let c = common(cfg)?;
    let model = &c.r.model;
    let radius =
        c.r.radius
            .ok_or_else(|| CliError::Usage("bounds.radius is required for inline models".into()))?;
    let z1 = solve_z1(model, &c.stack, &c.trace, radius, cfg.bounds.gamma.into(), &c.opts)?;
    let z2 = solve_z2(model, &c.stack, &c.trace, &c.opts)?;
    let z3 = solve_z3(model, &c.stack, &c.trace, &c.opts)?;
    let x0n = norm(&c.r.x0);
    let xstar = norm_comparison_solve(model, x0n, &c.trace, c.r.t_end(), &c.opts)?;
    let z = direct_error(model, &c.stack, &c.opts)?;

    let mut csv = Csv::new(&[
        "t", "z1", "z2", "z3", "lower", "upper", "ym_norm", "x_norm", "z_norm", "x_star",
    ]);
    for t in uniform_grid(c.r.t0, c.r.t_end(), cfg.approximation.samples) {
        let y = norm(&c.stack.ym(t));
        let zz = z2.value_at(t);
        csv.row(vec![
            t.into(),
            z1.ode.value_at(t).into(),
            zz.into(),
            z3.value_at(t).into(),
            (y - zz).max(0.0).into(),
            (y + zz).into(),
            y.into(),
            norm_beyond(&c.x, t).into(),
            norm_beyond(&z, t).into(),
            xstar.value_at(t).into(),
        ]);
    }

    let est = c.trace.exponent_estimate();
    let lip = model.f().lipschitz_constants(radius, c.r.t0, c.r.t_end())?;
    let hyp = decay_hypothesis(&c.trace, lip.l2);
    let status = |b: &BoundTrace| if b.is_blowup() { "blowup" } else { "completed" };
    let mut summary = Csv::new(&["key", "value"]);
    let mut kv = |k: &str, v: Cell| summary.row(vec![k.into(), v]);
    kv("lambda_hat", est.lambda_hat.into());
    kv("v1", est.v1.into());
    kv("n1", est.n1.into());
    kv("c_max", c.trace.c_max().into());
    kv("radius", radius.into());
    kv("l1", lip.l1.into());
    kv("l2", lip.l2.into());
    kv("l3", lip.l3.into());
    kv("sup_p_plus_c_l2", hyp.sup_lambda.into());
    kv(
        "linear_decay_hypothesis",
        if hyp.holds { "holds" } else { "fails" }.into(),
    );
    kv("lambda1", z3.lambda1().unwrap_or(f64::NAN).into());
    kv("z1_status", status(&z1.ode).into());
    kv("z1_ball_exceeded", z1.ode.ball_exceeded().to_string().into());
    kv("z1_quadrature_max_rel_diff", z1.max_relative_difference().into());
    kv("z2_status", status(&z2).into());
    kv("z3_status", status(&z3).into());
    kv("x_star_status", status(&xstar).into());
    let slack = sandwich_slack(&c.opts, c.x.sup_norm());
    let bb = bilateral_bounds(&c.stack, &z2);
    let violations = bb
        .times
        .iter()
        .zip(bb.lower.iter().zip(&bb.upper))
        .filter(|(&t, (lo, up))| {
            let xn = norm_beyond(&c.x, t);
            xn < **lo - slack || xn > **up + slack
        })
        .count();
    kv("sandwich_slack", slack.into());
    kv("sandwich_violations", violations.into());

    out.add_csv("bounds.csv", &csv);
    out.add_csv("bounds_summary.csv", &summary);
    Ok(out)
}

fn region_query(cfg: &RunConfig, r: &Resolved, method: Method, t0: f64) -> CliResult<RegionQuery> {
    let (r_lo, r_hi) = match (r.r_lo, r.r_hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => {
            return Err(CliError::Usage(
                "region.r_lo and region.r_hi are required for inline models".into(),
            ))
        }
    };
    let q = RegionQuery {
        t0,
        horizon: r.horizon,
        n_directions: cfg.region.n_directions,
        r_lo,
        r_hi,
        tolerance: cfg.region.tolerance.unwrap_or(1e-3 * r_hi),
        method,
        params: cfg.region.classifier.clone(),
    };
    q.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(q)
}

fn boundary_csv(est: &RegionEstimate) -> Csv {
    let dim = est.directions.first().map_or(0, |d| d.direction.len());
    let mut header: Vec<String> = [
        "direction_index",
        "direction_angle",
        "threshold_radius",
        "method",
        "t0",
        "flags",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=dim).map(|k| format!("d{k}")));
    let mut csv = Csv::new(&header);
    for (j, d) in est.directions.iter().enumerate() {
        let mut row: Vec<Cell> = vec![
            j.into(),
            d.angle.unwrap_or(f64::NAN).into(),
            d.threshold.into(),
            est.method.to_string().into(),
            est.t0.into(),
            d.flag.to_string().into(),
        ];
        row.extend(d.direction.iter().map(|&v| Cell::from(v)));
        csv.row(row);
    }
    csv
}

fn probes_csv(est: &RegionEstimate) -> Csv {
    let mut csv = Csv::new(&["direction_index", "radius", "class"]);
    for (j, d) in est.directions.iter().enumerate() {
        for p in &d.probes {
            csv.row(vec![j.into(), p.radius.into(), format!("{:?}", p.class).into()]);
        }
    }
    csv
}

/// One boundary file (and its probe log) per method.
pub fn region(cfg: &RunConfig) -> CliResult<OutputSet> {
    let mut out = OutputSet::new(&cfg.output_dir);
    let r = cfg.resolve()?;
    let ctx = RegionContext::new(&r.model, r.t0, r.t_end())?;
    let mut any_ok = false;
    for &method in &r.methods {
        let q = region_query(cfg, &r, method, r.t0)?;
        let est = estimate_region_with(&ctx, &q)?;
        any_ok |= !est.all_failed();
        out.add_csv(format!("region_{method}.csv"), &boundary_csv(&est));
        out.add_csv(format!("region_{method}_probes.csv"), &probes_csv(&est));
    }
    if !any_ok && !r.methods.is_empty() {
        return Err(CliError::Numeric(bilateral_core::Error::InvalidArgument(
            "every direction failed for every method; widen the radius bracket".into(),
        )));
    }
    Ok(out)
}

/// Region estimates at each `t₀` and per-direction threshold ratios against the first.
pub fn sweep(cfg: &RunConfig) -> CliResult<OutputSet> {
    let mut out = OutputSet::new(&cfg.output_dir);
    let r = cfg.resolve()?;
    let t0s = &cfg.sweep.t0s;
    if t0s.is_empty() || t0s.iter().any(|t| !t.is_finite()) {
        return Err(CliError::Usage(
            "sweep.t0s must be a nonempty list of finite times".into(),
        ));
    }
    for &method in &r.methods {
        let q = region_query(cfg, &r, method, t0s[0])?;
        let sw = sweep_t0(&r.model, &q, t0s)?;
        for (k, est) in sw.estimates.iter().enumerate() {
            out.add_csv(format!("sweep_{method}_t0-{k}.csv"), &boundary_csv(est));
        }
        let mut header = vec!["direction_index".to_string(), "direction_angle".to_string()];
        header.extend(
            t0s.iter()
                .map(|t| format!("ratio_t0={}", crate::output::format_num(*t))),
        );
        let mut csv = Csv::new(&header);
        for (j, d) in sw.estimates[0].directions.iter().enumerate() {
            let mut row: Vec<Cell> = vec![j.into(), d.angle.unwrap_or(f64::NAN).into()];
            row.extend(sw.ratios.iter().map(|rs| Cell::from(rs[j])));
            csv.row(row);
        }
        out.add_csv(format!("sweep_{method}_ratios.csv"), &csv);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_hits_both_ends() {
        let g = uniform_grid(0.5, 2.5, 5);
        assert_eq!(g, vec![0.5, 1.0, 1.5, 2.0, 2.5]);
    }

    #[test]
    fn simulate_zero_state_is_zero() {
        let mut cfg = RunConfig::from_preset("vanderpol-8.1");
        cfg.approximation.x0 = Some(vec![0.0, 0.0]);
        cfg.approximation.horizon = Some(5.0);
        cfg.approximation.samples = 11;
        let dir = tempfile::tempdir().unwrap();
        cfg.output_dir = dir.path().to_path_buf();
        simulate(&cfg).unwrap().commit("simulate", &cfg.to_toml()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
        for line in text.lines().skip(1) {
            let cells: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            assert!(cells[1..].iter().all(|&v| v == 0.0), "{line}");
        }
    }
}
