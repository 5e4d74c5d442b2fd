//! Trapping/stability region boundaries by radial bisection.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{direct_solve, run_scheme, ApproximationConfig, ApproximationStack, Scheme};
use crate::bounds::{solve_z2, solve_z3};
use crate::error::{Error, Result};
use crate::linear::{fundamental_matrix, FundamentalMatrixTrace};
use crate::model::PolySystemModel;
use crate::odeint::{norm, IntegratorOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    ComparisonZ2 { m: usize, scheme: Scheme },
    LinearizedZ3 { m: usize, scheme: Scheme },
    ReferenceDirect,
    TwoMaximaHeuristic { m: usize, scheme: Scheme },
}

impl Method {
    fn levels(&self) -> Option<(usize, Scheme)> {
        match *self {
            Method::ComparisonZ2 { m, scheme }
            | Method::LinearizedZ3 { m, scheme }
            | Method::TwoMaximaHeuristic { m, scheme } => Some((m, scheme)),
            Method::ReferenceDirect => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::ComparisonZ2 { m, scheme } => write!(f, "z2-{scheme}-m{m}"),
            Method::LinearizedZ3 { m, scheme } => write!(f, "z3-{scheme}-m{m}"),
            Method::ReferenceDirect => write!(f, "reference"),
            Method::TwoMaximaHeuristic { m, scheme } => write!(f, "maxima-{scheme}-m{m}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "reference" {
            return Ok(Method::ReferenceDirect);
        }
        let bad = || Error::InvalidArgument(format!("unknown method `{s}`"));
        let mut parts = s.split('-');
        let (kind, scheme, m) = (parts.next(), parts.next(), parts.next());
        if parts.next().is_some() {
            return Err(bad());
        }
        let scheme: Scheme = scheme.ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let m: usize = m
            .and_then(|m| m.strip_prefix('m'))
            .and_then(|m| m.parse().ok())
            .filter(|&m| m >= 1)
            .ok_or_else(bad)?;
        match kind {
            Some("z2") => Ok(Method::ComparisonZ2 { m, scheme }),
            Some("z3") => Ok(Method::LinearizedZ3 { m, scheme }),
            Some("maxima") => Ok(Method::TwoMaximaHeuristic { m, scheme }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Trapped,
    Escaped,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierParams {
    /// Tail threshold when `F₀ = 0`.
    pub trap_eps: f64,
    /// Tail threshold `trap_factor·F₀/|λ̂|` when `F₀ > 0`.
    pub trap_factor: f64,
    /// Fraction of the horizon treated as the tail.
    pub tail_fraction: f64,
    /// Lower bound on `|λ̂|` in the forced threshold.
    pub lambda_floor: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub blowup_threshold: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            trap_eps: 1e-4,
            trap_factor: 10.0,
            tail_fraction: 0.25,
            lambda_floor: 1e-3,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            blowup_threshold: 1e6,
        }
    }
}

impl ClassifierParams {
    pub fn integrator_options(&self) -> IntegratorOptions {
        IntegratorOptions::with_tolerances(self.rel_tol, self.abs_tol).with_blowup_threshold(self.blowup_threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionQuery {
    pub t0: f64,
    pub horizon: f64,
    pub n_directions: usize,
    pub r_lo: f64,
    pub r_hi: f64,
    pub tolerance: f64,
    pub method: Method,
    pub params: ClassifierParams,
}

impl RegionQuery {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_lo >= 0.0 && self.r_lo < self.r_hi && self.r_hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "radius bracket [{}, {}] must satisfy 0 <= r_lo < r_hi",
                self.r_lo, self.r_hi
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("bisection tolerance must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite() && self.t0.is_finite()) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if self.n_directions == 0 {
            return Err(Error::InvalidArgument("need at least one direction".into()));
        }
        if let Some((m, _)) = self.method.levels() {
            if m == 0 {
                return Err(Error::InvalidArgument("m must be at least 1".into()));
            }
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.horizon
    }
}

/// Data shared by every probe of one query.
#[derive(Debug, Clone)]
pub struct RegionContext {
    pub model: PolySystemModel,
    pub trace: Arc<FundamentalMatrixTrace>,
    pub lambda_hat: f64,
    pub t0: f64,
    pub t_end: f64,
}

impl RegionContext {
    pub fn new(model: &PolySystemModel, t0: f64, t_end: f64) -> Result<Self> {
        let opts = IntegratorOptions::with_tolerances(1e-10, 1e-14);
        let trace = Arc::new(fundamental_matrix(model.a(), t0, t_end, &opts)?);
        let lambda_hat = trace.exponent_estimate().lambda_hat;
        Ok(RegionContext {
            model: model.clone(),
            trace,
            lambda_hat,
            t0,
            t_end,
        })
    }

    fn forced_threshold(&self, params: &ClassifierParams) -> f64 {
        if self.model.f0() == 0.0 {
            params.trap_eps
        } else {
            params.trap_factor * self.model.f0() / self.lambda_hat.abs().max(params.lambda_floor)
        }
    }

    fn stack(&self, x0: &[f64], m: usize, scheme: Scheme, params: &ClassifierParams) -> Result<ApproximationStack> {
        let cfg = ApproximationConfig::new(scheme, m, self.t0, x0.to_vec(), self.t_end)
            .with_options(params.integrator_options());
        run_scheme(&self.model, &cfg)
    }
}

fn tail_classify(threshold: f64, tail_sup: f64) -> Classification {
    if tail_sup <= threshold {
        Classification::Trapped
    } else {
        Classification::Undetermined
    }
}

fn escape_or<T>(r: Result<T>) -> Result<std::result::Result<T, Classification>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e) if e.is_escape_like() => Ok(Err(Classification::Escaped)),
        Err(e) => Err(e),
    }
}

/// Classifies one initial state.
pub fn classify(ctx: &RegionContext, x0: &[f64], method: Method, params: &ClassifierParams) -> Result<Classification> {
    let threshold = ctx.forced_threshold(params);
    let tail_start = ctx.t_end - params.tail_fraction * (ctx.t_end - ctx.t0);
    let opts = params.integrator_options();
    match method {
        Method::ReferenceDirect => {
            let x = match escape_or(direct_solve(&ctx.model, ctx.t0, x0, ctx.t_end, &opts))? {
                Ok(x) => x,
                Err(c) => return Ok(c),
            };
            if x.is_blowup() {
                return Ok(Classification::Escaped);
            }
            let tail = x
                .times()
                .iter()
                .enumerate()
                .filter(|(_, &t)| t >= tail_start)
                .map(|(i, _)| norm(x.state(i)))
                .fold(0.0, f64::max);
            Ok(tail_classify(threshold, tail))
        }
        Method::ComparisonZ2 { m, scheme } => {
            let stack = match escape_or(ctx.stack(x0, m, scheme, params))? {
                Ok(s) => s,
                Err(c) => return Ok(c),
            };
            if stack.is_divergent() {
                return Ok(Classification::Escaped);
            }
            let z2 = solve_z2(&ctx.model, &stack, &ctx.trace, &opts)?;
            if z2.is_blowup() {
                return Ok(Classification::Escaped);
            }
            // the stack grid resolves the oscillations of Y_m, the bound grid those of Z₂
            let mut ts = stack.grid();
            ts.extend_from_slice(z2.times());
            let tail = ts
                .iter()
                .filter(|&&t| t >= tail_start)
                .map(|&t| norm(&stack.ym(t)) + z2.value_at(t))
                .fold(0.0, f64::max);
            Ok(tail_classify(threshold, tail))
        }
        Method::LinearizedZ3 { m, scheme } => {
            let stack = match escape_or(ctx.stack(x0, m, scheme, params))? {
                Ok(s) => s,
                Err(c) => return Ok(c),
            };
            if stack.is_divergent() {
                return Ok(Classification::Escaped);
            }
            let z3 = solve_z3(&ctx.model, &stack, &ctx.trace, &opts)?;
            Ok(match z3.lambda1() {
                Some(l) if l < 0.0 => Classification::Trapped,
                _ => Classification::Escaped,
            })
        }
        Method::TwoMaximaHeuristic { m, scheme } => {
            let stack = match escape_or(ctx.stack(x0, m, scheme, params))? {
                Ok(s) => s,
                Err(c) => return Ok(c),
            };
            if stack.is_divergent() {
                return Ok(Classification::Escaped);
            }
            Ok(match maxima_ratio(&stack) {
                Some(r) if r < 1.0 => Classification::Trapped,
                Some(r) if r > 1.0 => Classification::Escaped,
                _ => Classification::Undetermined,
            })
        }
    }
}

/// Samples per integrator step used when scanning `‖Y_m‖` for maxima.
const MAXIMA_SUBSAMPLES: usize = 8;
/// Neighbouring maxima closer than this are one plateau.
pub const PLATEAU_TOLERANCE: f64 = 1e-9;

/// Interior local maxima `(t, value)` of `‖Y_m(t)‖` on a refined grid.
pub fn local_maxima(stack: &ApproximationStack) -> Vec<(f64, f64)> {
    let grid = stack.grid();
    let mut ts = Vec::with_capacity(grid.len() * MAXIMA_SUBSAMPLES);
    for w in grid.windows(2) {
        for j in 0..MAXIMA_SUBSAMPLES {
            ts.push(w[0] + (w[1] - w[0]) * j as f64 / MAXIMA_SUBSAMPLES as f64);
        }
    }
    if let Some(&last) = grid.last() {
        ts.push(last);
    }
    let n = stack.dim();
    let mut buf = vec![0.0; n];
    let vals: Vec<f64> = ts
        .iter()
        .map(|&t| {
            stack.ym_into(t, &mut buf);
            norm(&buf)
        })
        .collect();
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut i = 1;
    while i + 1 < vals.len() {
        if vals[i] > vals[i - 1] {
            // walk across a plateau
            let mut j = i;
            while j + 1 < vals.len() && (vals[j + 1] - vals[i]).abs() <= PLATEAU_TOLERANCE {
                j += 1;
            }
            if j + 1 < vals.len() && vals[j + 1] < vals[i] {
                out.push((ts[(i + j) / 2], vals[i]));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Second over first local maximum of `‖Y_m‖`; `None` with fewer than two maxima.
pub fn maxima_ratio(stack: &ApproximationStack) -> Option<f64> {
    let maxima = local_maxima(stack);
    if maxima.len() < 2 || maxima[0].1 == 0.0 {
        return None;
    }
    Some(maxima[1].1 / maxima[0].1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub radius: f64,
    pub class: Classification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirectionFlag {
    Ok,
    /// The inner end of the bracket is not trapped.
    LowNotTrapped,
    /// The outer end of the bracket is trapped.
    HighTrapped,
    Failed(String),
}

impl DirectionFlag {
    pub fn is_ok(&self) -> bool {
        *self == DirectionFlag::Ok
    }
}

impl fmt::Display for DirectionFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirectionFlag::Ok => write!(f, "ok"),
            DirectionFlag::LowNotTrapped => write!(f, "low_not_trapped"),
            DirectionFlag::HighTrapped => write!(f, "high_trapped"),
            DirectionFlag::Failed(msg) => write!(f, "failed: {}", msg.replace([',', '\n'], ";")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    pub direction: Vec<f64>,
    /// Polar angle for planar systems.
    pub angle: Option<f64>,
    /// Largest radius known to be trapped (flagged results sit on a bracket end).
    pub threshold: f64,
    pub flag: DirectionFlag,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEstimate {
    pub method: Method,
    pub t0: f64,
    pub f0: f64,
    pub tolerance: f64,
    pub directions: Vec<DirectionResult>,
}

impl RegionEstimate {
    pub fn thresholds(&self) -> Vec<f64> {
        self.directions.iter().map(|d| d.threshold).collect()
    }

    pub fn all_failed(&self) -> bool {
        self.directions.iter().all(|d| !d.flag.is_ok())
    }
}

/// Unit directions: `±1` in 1D, uniform angles in 2D, a Fibonacci lattice in
/// 3D and a radially projected Kronecker sequence beyond.
pub fn directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * j as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        d => {
            // generalized golden ratio: root of x^{d+1} = x + 1
            let mut g = 2.0f64;
            for _ in 0..64 {
                g = (1.0 + g).powf(1.0 / (d as f64 + 1.0));
            }
            let alpha: Vec<f64> = (1..=d).map(|k| (1.0 / g.powi(k as i32)).fract()).collect();
            let mut out = Vec::with_capacity(n);
            let mut i = 0u64;
            while out.len() < n {
                i += 1;
                let p: Vec<f64> = alpha.iter().map(|a| 2.0 * (0.5 + a * i as f64).fract() - 1.0).collect();
                let r = norm(&p);
                if r > 0.1 && r <= 1.0 {
                    out.push(p.iter().map(|v| v / r).collect());
                }
            }
            out
        }
    }
}

fn angle_of(dir: &[f64]) -> Option<f64> {
    (dir.len() == 2).then(|| dir[1].atan2(dir[0]).rem_euclid(2.0 * std::f64::consts::PI))
}

/// Bisects the radius along `direction` between a trapped inner end and a
/// non-trapped outer end. `Undetermined` counts as not trapped, so the result
/// is the largest radius actually classified `Trapped`.
pub fn radial_bisect(ctx: &RegionContext, direction: &[f64], query: &RegionQuery) -> Result<DirectionResult> {
    query.validate()?;
    let mut probes = Vec::new();
    let mut probe = |r: f64| -> Result<Classification> {
        let x0: Vec<f64> = direction.iter().map(|d| d * r).collect();
        let class = classify(ctx, &x0, query.method, &query.params)?;
        probes.push(Probe { radius: r, class });
        Ok(class)
    };
    let lo_class = probe(query.r_lo)?;
    let hi_class = probe(query.r_hi)?;
    if lo_class != Classification::Trapped || hi_class == Classification::Trapped {
        return Err(Error::BracketInvalid {
            lo: format!("{:?} at r = {}", lo_class, query.r_lo),
            hi: format!("{:?} at r = {}", hi_class, query.r_hi),
        });
    }
    let (mut lo, mut hi) = (query.r_lo, query.r_hi);
    while hi - lo > query.tolerance {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? == Classification::Trapped {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DirectionResult {
        direction: direction.to_vec(),
        angle: angle_of(direction),
        threshold: lo,
        flag: DirectionFlag::Ok,
        probes,
    })
}

/// Radial bisection on the sign of `(second max)/(first max) − 1` of `‖Y_m(t)‖`.
pub fn two_maxima_threshold(ctx: &RegionContext, direction: &[f64], query: &RegionQuery) -> Result<f64> {
    let (m, scheme) = match query.method {
        Method::TwoMaximaHeuristic { m, scheme } => (m, scheme),
        other => {
            return Err(Error::InvalidArgument(format!(
                "two-maxima threshold needs the heuristic method, got {other}"
            )))
        }
    };
    for r in [query.r_lo, query.r_hi] {
        let x0: Vec<f64> = direction.iter().map(|d| d * r).collect();
        let stack = ctx.stack(&x0, m, scheme, &query.params)?;
        if stack.is_divergent() || local_maxima(&stack).len() < 2 {
            return Err(Error::InsufficientOscillation { radius: r });
        }
    }
    radial_bisect(ctx, direction, query).map(|d| d.threshold)
}

fn flag_of(e: &Error) -> DirectionFlag {
    match e {
        Error::BracketInvalid { lo, .. } if !lo.starts_with("Trapped") => DirectionFlag::LowNotTrapped,
        Error::BracketInvalid { .. } => DirectionFlag::HighTrapped,
        other => DirectionFlag::Failed(other.to_string()),
    }
}

/// Runs [`radial_bisect`] over the direction grid in parallel; failures are
/// recorded as per-direction flags.
pub fn estimate_region(model: &PolySystemModel, query: &RegionQuery) -> Result<RegionEstimate> {
    query.validate()?;
    let ctx = RegionContext::new(model, query.t0, query.t_end())?;
    estimate_region_with(&ctx, query)
}

pub fn estimate_region_with(ctx: &RegionContext, query: &RegionQuery) -> Result<RegionEstimate> {
    query.validate()?;
    if ctx.t0 != query.t0 || ctx.t_end < query.t_end() {
        return Err(Error::InvalidArgument("context does not match query horizon".into()));
    }
    let dirs = directions(ctx.model.dim(), query.n_directions);
    let directions = dirs
        .par_iter()
        .map(|d| match radial_bisect(ctx, d, query) {
            Ok(r) => r,
            Err(e) => {
                let flag = flag_of(&e);
                let threshold = if flag == DirectionFlag::HighTrapped {
                    query.r_hi
                } else {
                    query.r_lo
                };
                DirectionResult {
                    direction: d.clone(),
                    angle: angle_of(d),
                    threshold,
                    flag,
                    probes: Vec::new(),
                }
            }
        })
        .collect();
    Ok(RegionEstimate {
        method: query.method,
        t0: query.t0,
        f0: ctx.model.f0(),
        tolerance: query.tolerance,
        directions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T0Sweep {
    pub t0s: Vec<f64>,
    pub estimates: Vec<RegionEstimate>,
    /// `ratios[k][j]`: threshold at `t0s[k]` over threshold at `t0s[0]` in direction `j`.
    pub ratios: Vec<Vec<f64>>,
}

pub fn sweep_t0(model: &PolySystemModel, query: &RegionQuery, t0s: &[f64]) -> Result<T0Sweep> {
    if t0s.is_empty() {
        return Err(Error::InvalidArgument("need at least one t0".into()));
    }
    let estimates = t0s
        .iter()
        .map(|&t0| estimate_region(model, &RegionQuery { t0, ..query.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let base = estimates[0].thresholds();
    let ratios = estimates
        .iter()
        .map(|e| e.thresholds().iter().zip(&base).map(|(r, b)| r / b).collect())
        .collect();
    Ok(T0Sweep {
        t0s: t0s.to_vec(),
        estimates,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyfield::{Monomial, PolyVectorField};
    use crate::signals::TimeSignal;

    fn c(v: f64) -> TimeSignal {
        TimeSignal::constant(v)
    }

    /// `ẋ = −x + x³`, separatrix at `|x| = 1`.
    fn cubic() -> PolySystemModel {
        let f = PolyVectorField::new(1, vec![vec![Monomial::new(c(1.0), vec![3])]]).unwrap();
        PolySystemModel::new(vec![vec![c(-1.0)]], f, 0.0, vec![TimeSignal::zero()]).unwrap()
    }

    fn query(method: Method, r_lo: f64, r_hi: f64, tol: f64) -> RegionQuery {
        RegionQuery {
            t0: 0.0,
            horizon: 40.0,
            n_directions: 2,
            r_lo,
            r_hi,
            tolerance: tol,
            method,
            params: ClassifierParams::default(),
        }
    }

    #[test]
    fn cubic_separatrix() {
        let est = estimate_region(&cubic(), &query(Method::ReferenceDirect, 0.5, 2.0, 1e-4)).unwrap();
        for d in &est.directions {
            assert!(d.flag.is_ok());
            assert!((d.threshold - 1.0).abs() <= 1e-4, "{}", d.threshold);
        }
    }

    #[test]
    fn halving_tolerance_moves_threshold_little() {
        let m = cubic();
        let ctx = RegionContext::new(&m, 0.0, 40.0).unwrap();
        let a = radial_bisect(&ctx, &[1.0], &query(Method::ReferenceDirect, 0.5, 2.0, 1e-2)).unwrap();
        let b = radial_bisect(&ctx, &[1.0], &query(Method::ReferenceDirect, 0.5, 2.0, 5e-3)).unwrap();
        assert!((a.threshold - b.threshold).abs() <= 1e-2);
    }

    #[test]
    fn comparison_methods_inner_on_cubic() {
        let m = cubic();
        let ctx = RegionContext::new(&m, 0.0, 40.0).unwrap();
        let reference = radial_bisect(&ctx, &[1.0], &query(Method::ReferenceDirect, 0.05, 2.0, 1e-3)).unwrap();
        for k in 1..=3 {
            let q = query(
                Method::ComparisonZ2 {
                    m: k,
                    scheme: Scheme::A,
                },
                0.05,
                2.0,
                1e-3,
            );
            let z2 = radial_bisect(&ctx, &[1.0], &q).unwrap();
            assert!(z2.threshold <= reference.threshold + 1e-3);
            for p in z2.probes.iter().filter(|p| p.class == Classification::Trapped) {
                assert_eq!(
                    classify(&ctx, &[p.radius], Method::ReferenceDirect, &q.params).unwrap(),
                    Classification::Trapped
                );
            }
        }
    }

    #[test]
    fn origin_is_trapped_for_every_method() {
        let m = cubic();
        let ctx = RegionContext::new(&m, 0.0, 20.0).unwrap();
        let p = ClassifierParams::default();
        for method in [
            Method::ReferenceDirect,
            Method::ComparisonZ2 {
                m: 2,
                scheme: Scheme::B,
            },
            Method::LinearizedZ3 {
                m: 1,
                scheme: Scheme::A,
            },
        ] {
            assert_eq!(classify(&ctx, &[0.0], method, &p).unwrap(), Classification::Trapped);
        }
    }

    #[test]
    fn invalid_bracket_is_flagged() {
        let m = cubic();
        let ctx = RegionContext::new(&m, 0.0, 40.0).unwrap();
        let q = query(Method::ReferenceDirect, 1.5, 2.0, 1e-3);
        assert!(matches!(
            radial_bisect(&ctx, &[1.0], &q),
            Err(Error::BracketInvalid { .. })
        ));
        let est = estimate_region(&m, &q).unwrap();
        assert!(est.directions.iter().all(|d| d.flag == DirectionFlag::LowNotTrapped));
        assert!(est.all_failed());
        let q = query(Method::ReferenceDirect, 0.1, 0.5, 1e-3);
        let est = estimate_region(&m, &q).unwrap();
        assert!(est.directions.iter().all(|d| d.flag == DirectionFlag::HighTrapped));
        assert!(query(Method::ReferenceDirect, 2.0, 1.0, 1e-3).validate().is_err());
        assert!(query(Method::ReferenceDirect, 1.0, 2.0, 0.0).validate().is_err());
    }

    #[test]
    fn autonomous_t0_invariance() {
        let m = cubic();
        let q = query(Method::ReferenceDirect, 0.5, 2.0, 1e-3);
        let sweep = sweep_t0(&m, &q, &[0.0, 1.3, 7.0]).unwrap();
        for row in &sweep.ratios {
            for r in row {
                assert!((r - 1.0).abs() <= 2e-3 / 0.99, "{r}");
            }
        }
    }

    #[test]
    fn direction_grids() {
        let d2 = directions(2, 8);
        assert_eq!(d2.len(), 8);
        assert!((d2[2][0]).abs() < 1e-15 && (d2[2][1] - 1.0).abs() < 1e-15);
        for dim in [3, 4, 5] {
            let ds = directions(dim, 50);
            assert_eq!(ds.len(), 50);
            for d in &ds {
                assert!((norm(d) - 1.0).abs() < 1e-12);
            }
            let mean: Vec<f64> = (0..dim).map(|k| ds.iter().map(|d| d[k]).sum::<f64>() / 50.0).collect();
            assert!(norm(&mean) < 0.3);
        }
        assert_eq!(directions(1, 10).len(), 2);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::ReferenceDirect,
            Method::ComparisonZ2 {
                m: 3,
                scheme: Scheme::B,
            },
            Method::LinearizedZ3 {
                m: 1,
                scheme: Scheme::A,
            },
            Method::TwoMaximaHeuristic {
                m: 2,
                scheme: Scheme::A,
            },
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("z2-A-m0".parse::<Method>().is_err());
        assert!("z4-A-m1".parse::<Method>().is_err());
    }

    #[test]
    fn maxima_detection() {
        // damped oscillator: successive maxima decrease
        let model = PolySystemModel::linear(vec![vec![c(0.0), c(1.0)], vec![c(-4.0), c(-0.4)]]).unwrap();
        let cfg = ApproximationConfig::new(Scheme::A, 1, 0.0, vec![1.0, 0.0], 20.0);
        let st = run_scheme(&model, &cfg).unwrap();
        let maxima = local_maxima(&st);
        assert!(maxima.len() >= 4);
        assert!(maxima_ratio(&st).unwrap() < 1.0);
        let growing = PolySystemModel::linear(vec![vec![c(0.0), c(1.0)], vec![c(-4.0), c(0.4)]]).unwrap();
        let st = run_scheme(&growing, &cfg).unwrap();
        assert!(maxima_ratio(&st).unwrap() > 1.0);
        // monotone decay has no interior maximum
        let decay = PolySystemModel::linear(vec![vec![c(-1.0)]]).unwrap();
        let st = run_scheme(&decay, &ApproximationConfig::new(Scheme::A, 1, 0.0, vec![1.0], 5.0)).unwrap();
        assert!(maxima_ratio(&st).is_none());
    }
}
