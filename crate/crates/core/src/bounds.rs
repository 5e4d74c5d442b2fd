//! Scalar comparison equations bounding `‖x‖` and the error `‖z‖ = ‖x − Y_m‖`.
//!
//! Every equation has the form `Ż = p(t)Z + c(t)·g(t, Z)` with
//! `p = d ln σ_max/dt` and `c = σ_max/σ_min`. With `Z = σ_max(t)·U` this is
//! exactly `U̇ = g(t, σ_max U)/σ_min`, which is what gets integrated; `σ`
//! comes from the interpolated fundamental matrix, so `p` is never
//! differentiated numerically inside an ODE.

use std::sync::Arc;

use crate::approx::{ApproximationStack, Scheme};
use crate::error::{Error, Result};
use crate::linear::FundamentalMatrixTrace;
use crate::model::PolySystemModel;
use crate::odeint::{integrate_monitored, norm, IntegratorOptions, TerminalStatus, Trajectory};
use crate::polyfield::{LipschitzConstants, NormBoundPolynomial, ShiftedField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorBoundMode {
    /// `Z₁`: linear equation built from a Lipschitz constant.
    LinearLipschitz,
    /// `Z₂`: nonlinear polynomial comparison equation.
    NonlinearComparison,
    /// `Z₃`: `Z₂` with the terms of degree ≥ 2 dropped.
    LinearizedComparison,
    /// `X*`: bound on the solution norm itself.
    SolutionNorm,
}

/// Scalar bound `Z(t) = σ_max(t) U(t)`.
#[derive(Debug, Clone)]
pub struct BoundTrace {
    mode: ErrorBoundMode,
    sigma: Arc<FundamentalMatrixTrace>,
    u: Trajectory,
    status: TerminalStatus,
    lambda1: Option<f64>,
    ball_exceeded: bool,
}

impl BoundTrace {
    pub fn mode(&self) -> ErrorBoundMode {
        self.mode
    }

    pub fn status(&self) -> TerminalStatus {
        self.status
    }

    pub fn is_blowup(&self) -> bool {
        matches!(self.status, TerminalStatus::BlowUp { .. })
    }

    pub fn t0(&self) -> f64 {
        self.u.t0()
    }

    /// Last time at which the bound exists.
    pub fn t_end(&self) -> f64 {
        self.u.t_end()
    }

    /// Decay exponent of the linearized equation (only for `Z₃`).
    pub fn lambda1(&self) -> Option<f64> {
        self.lambda1
    }

    /// True when a trajectory left the ball on which the Lipschitz constant
    /// was computed (only for `Z₁`).
    pub fn ball_exceeded(&self) -> bool {
        self.ball_exceeded
    }

    pub fn times(&self) -> &[f64] {
        self.u.times()
    }

    pub fn values(&self) -> Vec<f64> {
        self.u
            .times()
            .iter()
            .enumerate()
            .map(|(i, &t)| (self.sigma.sigma_at(t).0 * self.u.state(i)[0]).max(0.0))
            .collect()
    }

    /// `Z(t)`, clipped at zero against interpolation noise; infinite past a blow-up.
    pub fn value_at(&self, t: f64) -> f64 {
        if t > self.t_end() {
            return f64::INFINITY;
        }
        let mut buf = vec![0.0; self.u.dim()];
        self.u.eval_into(t, &mut buf);
        (self.sigma.sigma_at(t).0 * buf[0]).max(0.0)
    }

    /// `sup Z` over the last `fraction` of `[t₀, t_end]` (infinite after a blow-up).
    pub fn tail_sup(&self, fraction: f64) -> f64 {
        if self.is_blowup() {
            return f64::INFINITY;
        }
        let start = self.t_end() - fraction * (self.t_end() - self.t0());
        self.u
            .times()
            .iter()
            .zip(self.values())
            .filter(|(t, _)| **t >= start)
            .map(|(_, v)| v)
            .fold(0.0, f64::max)
    }
}

fn finish(
    mode: ErrorBoundMode,
    sigma: &Arc<FundamentalMatrixTrace>,
    result: Result<Trajectory>,
    t0: f64,
    dim: usize,
) -> Result<BoundTrace> {
    let (u, status) = match result {
        Ok(u) => {
            let status = u.status();
            (u, status)
        }
        Err(e) if e.is_escape_like() => {
            let t = match e {
                Error::StepSizeUnderflow { t, .. } | Error::NonFinite { t } | Error::TooManySteps { t } => t,
                _ => unreachable!(),
            };
            let times = vec![t0];
            let u = Trajectory::from_samples(dim, times, vec![0.0; dim], vec![0.0; dim])?;
            (u, TerminalStatus::BlowUp { at_time: t.max(t0) })
        }
        Err(e) => return Err(e),
    };
    Ok(BoundTrace {
        mode,
        sigma: Arc::clone(sigma),
        status,
        u,
        lambda1: None,
        ball_exceeded: false,
    })
}

fn check_span(trace: &FundamentalMatrixTrace, t0: f64, t_end: f64) -> Result<()> {
    if trace.t0() != t0 || trace.t_end() < t_end {
        return Err(Error::InvalidArgument(format!(
            "fundamental matrix covers [{}, {}], need [{t0}, {t_end}]",
            trace.t0(),
            trace.t_end()
        )));
    }
    Ok(())
}

/// `Ẋ* = pX* + c(L(t,X*) + ‖F(t)‖)`, `X*(t₀) = ‖x₀‖`: an upper bound on `‖x(t)‖`.
pub fn norm_comparison_solve(
    model: &PolySystemModel,
    x0_norm: f64,
    trace: &Arc<FundamentalMatrixTrace>,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<BoundTrace> {
    let t0 = trace.t0();
    check_span(trace, t0, t_end)?;
    let f = model.f();
    let o = opts.clone().with_breakpoints(&model.breakpoints());
    let result = integrate_monitored(
        |t, u, out| {
            let (smax, smin) = trace.sigma_at(t);
            let l = f.norm_majorant(t).eval(smax * u[0]);
            out[0] = (l + model.forcing_norm(t)) / smin;
        },
        |t, u| trace.sigma_at(t).0 * u[0].abs(),
        t0,
        &[x0_norm],
        t_end,
        &o,
    );
    finish(ErrorBoundMode::SolutionNorm, trace, result, t0, 1)
}

/// Form of the forcing term of the linear error equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaForm {
    /// `c(t)(l₂‖y_m‖ + ‖f′(Y_{m−1})y_m‖)`.
    Exact,
    /// `ĉ‖y_m‖(l₂ + l₃‖Y_{m−1}‖)`.
    Conservative,
}

/// Samples of `Γ(t)` on the stack grid.
pub fn gamma_forcing(
    model: &PolySystemModel,
    stack: &ApproximationStack,
    trace: &FundamentalMatrixTrace,
    lip: &LipschitzConstants,
    form: GammaForm,
) -> (Vec<f64>, Vec<f64>) {
    let grid = stack.grid();
    let mut eval = GammaEval::new(model, stack, trace, lip, form);
    let values = grid.iter().map(|&t| eval.gamma(t)).collect();
    (grid, values)
}

struct GammaEval<'a> {
    model: &'a PolySystemModel,
    stack: &'a ApproximationStack,
    trace: &'a FundamentalMatrixTrace,
    lip: LipschitzConstants,
    form: GammaForm,
    c_hat: f64,
    ym: Vec<f64>,
    ym1: Vec<f64>,
    last: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'a> GammaEval<'a> {
    fn new(
        model: &'a PolySystemModel,
        stack: &'a ApproximationStack,
        trace: &'a FundamentalMatrixTrace,
        lip: &LipschitzConstants,
        form: GammaForm,
    ) -> Self {
        let n = model.dim();
        GammaEval {
            model,
            stack,
            trace,
            lip: *lip,
            form,
            c_hat: trace.c_max(),
            ym: vec![0.0; n],
            ym1: vec![0.0; n],
            last: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// `Γ(t)/c(t)` for the exact form; the caller multiplies by `c` or divides by `σ`.
    fn reduced(&mut self, t: f64) -> f64 {
        self.stack
            .references_into(t, &mut self.ym, &mut self.ym1, &mut self.last);
        let y = norm(&self.last);
        let mut g = self.lip.l2 * y;
        if self.stack.scheme() == Scheme::A {
            match self.form {
                GammaForm::Exact => {
                    self.model.f().jacobian_times(t, &self.ym1, &self.last, &mut self.tmp);
                    g += norm(&self.tmp);
                }
                GammaForm::Conservative => g += self.lip.l3 * norm(&self.ym1) * y,
            }
        }
        g
    }

    fn gamma(&mut self, t: f64) -> f64 {
        let g = self.reduced(t);
        match self.form {
            GammaForm::Exact => {
                let (smax, smin) = self.trace.sigma_at(t);
                g * smax / smin
            }
            GammaForm::Conservative => self.c_hat * g,
        }
    }
}

/// `Z₁` computed two ways.
#[derive(Debug, Clone)]
pub struct LinearBound {
    pub ode: BoundTrace,
    /// Closed-form quadrature at the ODE sample times.
    pub quadrature: Vec<f64>,
}

impl LinearBound {
    /// Largest relative difference between the two routes.
    pub fn max_relative_difference(&self) -> f64 {
        self.ode
            .values()
            .iter()
            .zip(&self.quadrature)
            .map(|(a, b)| {
                let scale = a.abs().max(b.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `Ż = (p + c·l₂)Z + Γ(t)`, `Z(t₀) = 0`, by ODE integration and by the
/// variation-of-constants quadrature.
///
/// `gamma_over_sigma(t)` must return `Γ(t)/σ_max(t)`.
pub fn solve_linear_comparison<G>(
    trace: &Arc<FundamentalMatrixTrace>,
    l2: f64,
    mut gamma_over_sigma: G,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<LinearBound>
where
    G: FnMut(f64) -> f64,
{
    let t0 = trace.t0();
    check_span(trace, t0, t_end)?;
    let o = opts.clone().with_breakpoints(trace.breakpoints());
    let result = integrate_monitored(
        |t, u, out| {
            let (smax, smin) = trace.sigma_at(t);
            out[0] = smax / smin * l2 * u[0] + gamma_over_sigma(t);
        },
        |t, u| trace.sigma_at(t).0 * u[0].abs(),
        t0,
        &[0.0],
        t_end,
        &o,
    );
    let ode = finish(ErrorBoundMode::LinearLipschitz, trace, result, t0, 1)?;
    let quadrature = linear_quadrature(trace, l2, &mut gamma_over_sigma, ode.times());
    Ok(LinearBound { ode, quadrature })
}

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

fn gauss<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES
        .iter()
        .zip(&GL_WEIGHTS)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// `Z(t) = σ_max(t) ∫_{t₀}^t e^{G(t)−G(s)} g(s) ds`, `G = l₂ ∫ c`, accumulated
/// interval by interval so no exponential is ever large.
fn linear_quadrature<G: FnMut(f64) -> f64>(
    trace: &FundamentalMatrixTrace,
    l2: f64,
    g: &mut G,
    grid: &[f64],
) -> Vec<f64> {
    let c = |t: f64| {
        let (a, b) = trace.sigma_at(t);
        a / b
    };
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let growth = if l2 == 0.0 { 0.0 } else { l2 * gauss(a, b, c) };
        let local = gauss(a, b, |s| {
            let inner = if l2 == 0.0 { 0.0 } else { l2 * gauss(s, b, c) };
            inner.exp() * g(s)
        });
        acc = growth.exp() * acc + local;
        out.push(trace.sigma_at(b).0 * acc);
    }
    out
}

/// `Z₁` for a completed stack: `Γ = c(l₂‖y_m‖ + ‖f′(Y_{m−1})y_m‖)` for
/// scheme A, `c·l₂‖y_m‖` for scheme B, with `l₂` valid on the ball `‖x‖ ≤ radius`.
pub fn solve_z1(
    model: &PolySystemModel,
    stack: &ApproximationStack,
    trace: &Arc<FundamentalMatrixTrace>,
    radius: f64,
    form: GammaForm,
    opts: &IntegratorOptions,
) -> Result<LinearBound> {
    ensure_stack(stack)?;
    let lip = model.f().lipschitz_constants(radius, stack.t0(), stack.t_end())?;
    let mut eval = GammaEval::new(model, stack, trace, &lip, form);
    let c_hat = trace.c_max();
    let mut bound = solve_linear_comparison(
        trace,
        lip.l2,
        |t| match form {
            GammaForm::Exact => eval.reduced(t) / trace.sigma_at(t).1,
            GammaForm::Conservative => c_hat * eval.reduced(t) / trace.sigma_at(t).0,
        },
        stack.t_end(),
        opts,
    )?;
    // the Lipschitz constant only holds while Y_{m−1}, Y_m and Y_m + z stay in the ball
    let n = stack.dim();
    let (mut ym, mut ym1, mut last) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let values = bound.ode.values();
    let exceeded = bound.ode.times().iter().zip(&values).any(|(&t, z)| {
        stack.references_into(t, &mut ym, &mut ym1, &mut last);
        norm(&ym1) > radius || norm(&ym) + z > radius
    });
    bound.ode.ball_exceeded = exceeded;
    Ok(bound)
}

/// Whether `λ(t) = p(t) + c(t)·l₂ < −λ̂` holds for some `λ̂ > 0` on the
/// trace grid, i.e. whether the linear bound is guaranteed to stay bounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayHypothesis {
    pub l2: f64,
    /// `sup_t λ(t)`.
    pub sup_lambda: f64,
    pub holds: bool,
}

pub fn decay_hypothesis(trace: &FundamentalMatrixTrace, l2: f64) -> DecayHypothesis {
    let sup_lambda = trace
        .p()
        .iter()
        .zip(trace.c())
        .map(|(p, c)| p + c * l2)
        .fold(f64::NEG_INFINITY, f64::max);
    DecayHypothesis {
        l2,
        sup_lambda,
        holds: sup_lambda < 0.0,
    }
}

fn ensure_stack(stack: &ApproximationStack) -> Result<()> {
    if stack.is_divergent() {
        return Err(Error::InvalidArgument("approximation stack is divergent".into()));
    }
    Ok(())
}

/// Builds the norm-bound polynomial of the error nonlinearity
/// `π(t, z) = f(z + Y_m) − f(Y_{m−1}) [− f′(Y_{m−1})y_m]` at any `t`.
///
/// The `z`-dependent coefficients come from expanding `f` around `Y_m`; the
/// `z`-free part is taken from the expansion around `Y_{m−1}` evaluated at
/// `y_m`, keeping the terms of degree ≥ 2 (scheme A) or ≥ 1 (scheme B), which
/// avoids cancellation between nearly equal values of `f`.
pub struct ErrorPolynomial<'a> {
    model: &'a PolySystemModel,
    stack: &'a ApproximationStack,
    shifted: ShiftedField,
    ym: Vec<f64>,
    ym1: Vec<f64>,
    last: Vec<f64>,
}

impl<'a> ErrorPolynomial<'a> {
    pub fn new(model: &'a PolySystemModel, stack: &'a ApproximationStack) -> Self {
        let n = model.dim();
        ErrorPolynomial {
            model,
            stack,
            shifted: model.f().shift_expand(),
            ym: vec![0.0; n],
            ym1: vec![0.0; n],
            last: vec![0.0; n],
        }
    }

    pub fn bound_at(&mut self, t: f64) -> NormBoundPolynomial {
        self.stack
            .references_into(t, &mut self.ym, &mut self.ym1, &mut self.last);
        let coeffs = self.model.f().coeffs_at(t);
        let min_degree = match self.stack.scheme() {
            Scheme::A => 2,
            Scheme::B => 1,
        };
        let free = self
            .shifted
            .evaluate_with(&coeffs, &self.ym1)
            .eval_min_degree(&self.last, min_degree);
        self.shifted
            .evaluate_with(&coeffs, &self.ym)
            .with_constant(&free)
            .norm_bound()
    }
}

/// `Ż₂ = pZ₂ + c(Π(t, Z₂) + γ(t))`, `Z₂(t₀) = 0`.
pub fn solve_z2(
    model: &PolySystemModel,
    stack: &ApproximationStack,
    trace: &Arc<FundamentalMatrixTrace>,
    opts: &IntegratorOptions,
) -> Result<BoundTrace> {
    ensure_stack(stack)?;
    let (t0, t_end) = (stack.t0(), stack.t_end());
    check_span(trace, t0, t_end)?;
    let mut poly = ErrorPolynomial::new(model, stack);
    let o = opts.clone().with_breakpoints(&model.breakpoints());
    let result = integrate_monitored(
        |t, u, out| {
            let (smax, smin) = trace.sigma_at(t);
            let q = poly.bound_at(t);
            out[0] = q.eval(smax * u[0]) / smin;
        },
        |t, u| trace.sigma_at(t).0 * u[0].abs(),
        t0,
        &[0.0],
        t_end,
        &o,
    );
    finish(ErrorBoundMode::NonlinearComparison, trace, result, t0, 1)
}

/// `Ż₃ = (p + cD)Z₃ + cγ`, `Z₃(t₀) = 0`, and
/// `λ₁ = max_{t in last half} (t − t₀)⁻¹ ∫_{t₀}^t (p + cD)`.
///
/// `λ₁ < 0` means the linearized bound decays.
pub fn solve_z3(
    model: &PolySystemModel,
    stack: &ApproximationStack,
    trace: &Arc<FundamentalMatrixTrace>,
    opts: &IntegratorOptions,
) -> Result<BoundTrace> {
    ensure_stack(stack)?;
    let (t0, t_end) = (stack.t0(), stack.t_end());
    check_span(trace, t0, t_end)?;
    let mut poly = ErrorPolynomial::new(model, stack);
    let o = opts.clone().with_breakpoints(&model.breakpoints());
    // G(t) = ∫ c·D, integrated on its own so λ₁ exists even when Z₃ overflows
    let g = integrate_monitored(
        |t, _, out| {
            let (smax, smin) = trace.sigma_at(t);
            out[0] = smax / smin * poly.bound_at(t).linear();
        },
        |_, _| 0.0,
        t0,
        &[0.0],
        t_end,
        &o,
    );
    let half = t0 + 0.5 * (t_end - t0);
    let lambda1 = match g {
        Ok(g) => g
            .times()
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= half && t > t0)
            .map(|(i, &t)| (trace.sigma_at(t).0.ln() + g.state(i)[0]) / (t - t0))
            .fold(f64::NEG_INFINITY, f64::max),
        Err(e) if e.is_escape_like() => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let result = integrate_monitored(
        |t, u, out| {
            let (smax, smin) = trace.sigma_at(t);
            let q = poly.bound_at(t);
            out[0] = (q.linear() * smax * u[0] + q.gamma()) / smin;
        },
        |t, u| trace.sigma_at(t).0 * u[0].abs(),
        t0,
        &[0.0],
        t_end,
        &o,
    );
    let mut bound = finish(ErrorBoundMode::LinearizedComparison, trace, result, t0, 1)?;
    bound.lambda1 = Some(lambda1);
    Ok(bound)
}

/// `max(‖Y_m‖ − Z, 0) ≤ ‖x‖ ≤ ‖Y_m‖ + Z` sampled on the bound's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BilateralBounds {
    pub times: Vec<f64>,
    pub ym_norm: Vec<f64>,
    pub z: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn bilateral_bounds(stack: &ApproximationStack, bound: &BoundTrace) -> BilateralBounds {
    let times = bound.times().to_vec();
    let z = bound.values();
    let ym_norm: Vec<f64> = times.iter().map(|&t| norm(&stack.ym(t))).collect();
    let lower = ym_norm.iter().zip(&z).map(|(y, z)| (y - z).max(0.0)).collect();
    let upper = ym_norm.iter().zip(&z).map(|(y, z)| y + z).collect();
    BilateralBounds {
        times,
        ym_norm,
        z,
        lower,
        upper,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{direct_error, direct_solve, run_scheme, ApproximationConfig};
    use crate::linear::fundamental_matrix;
    use crate::polyfield::{Monomial, PolyVectorField};
    use crate::signals::TimeSignal;

    fn c(v: f64) -> TimeSignal {
        TimeSignal::constant(v)
    }

    fn opts() -> IntegratorOptions {
        IntegratorOptions::with_tolerances(1e-12, 1e-16)
    }

    fn oscillator(alpha2: f64, f0: f64) -> PolySystemModel {
        let omega2 = TimeSignal::Sum(vec![c(4.0), TimeSignal::sin(2.0, 3.0, 0.0)]);
        let f = PolyVectorField::new(2, vec![vec![], vec![Monomial::new(c(-alpha2), vec![0, 3])]]).unwrap();
        PolySystemModel::new(
            vec![vec![c(0.0), c(1.0)], vec![omega2.neg(), c(-1.2)]],
            f,
            f0,
            vec![TimeSignal::zero(), TimeSignal::sin(1.0, 1.3, 0.0)],
        )
        .unwrap()
    }

    fn trace_of(model: &PolySystemModel, t_end: f64) -> Arc<FundamentalMatrixTrace> {
        Arc::new(fundamental_matrix(model.a(), 0.0, t_end, &opts()).unwrap())
    }

    fn neg_identity() -> PolySystemModel {
        PolySystemModel::linear(vec![vec![c(-1.0), c(0.0)], vec![c(0.0), c(-1.0)]]).unwrap()
    }

    #[test]
    fn norm_comparison_linear_exact() {
        let model = neg_identity();
        let tr = trace_of(&model, 6.0);
        let b = norm_comparison_solve(&model, 0.7, &tr, 6.0, &opts()).unwrap();
        for (t, v) in b.times().iter().zip(b.values()) {
            assert!((v - 0.7 * (-t).exp()).abs() < 1e-10);
        }
        let zero = norm_comparison_solve(&model, 0.0, &tr, 6.0, &opts()).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn norm_comparison_dominates_solution() {
        let model = oscillator(-100.0, 0.0);
        let tr = trace_of(&model, 20.0);
        let x0 = [0.008, -0.006];
        let b = norm_comparison_solve(&model, norm(&x0), &tr, 20.0, &opts()).unwrap();
        assert!(!b.is_blowup());
        let x = direct_solve(&model, 0.0, &x0, 20.0, &opts()).unwrap();
        for &t in x.times() {
            assert!(b.value_at(t) >= x.norm_at(t) - 1e-9);
        }
    }

    #[test]
    fn linear_comparison_analytic() {
        // A = −I gives p = −1, c = 1; with l₂ = 0 and Γ ≡ 1, Z = 1 − e^{−t}
        let tr = trace_of(&neg_identity(), 5.0);
        let tr2 = Arc::clone(&tr);
        let b = solve_linear_comparison(&tr, 0.0, move |t| 1.0 / tr2.sigma_at(t).0, 5.0, &opts()).unwrap();
        for ((t, v), q) in b.ode.times().iter().zip(b.ode.values()).zip(&b.quadrature) {
            let exact = 1.0 - (-t).exp();
            assert!((v - exact).abs() < 1e-9);
            assert!((q - exact).abs() < 1e-9);
        }
        let zero = solve_linear_comparison(&tr, 0.5, |_| 0.0, 5.0, &opts()).unwrap();
        assert!(zero.ode.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decay_hypothesis_on_stable_diagonal() {
        let tr = trace_of(&neg_identity(), 5.0);
        let h = decay_hypothesis(&tr, 0.5);
        assert!(h.holds && (h.sup_lambda + 0.5).abs() < 1e-6);
        assert!(!decay_hypothesis(&tr, 1.5).holds);
    }

    #[test]
    fn quadrature_agrees_with_ode() {
        let model = oscillator(-100.0, 0.1);
        let tr = trace_of(&model, 20.0);
        let cfg = ApproximationConfig::new(Scheme::A, 2, 0.0, vec![0.02, 0.01], 20.0).with_options(opts());
        let st = run_scheme(&model, &cfg).unwrap();
        let z1 = solve_z1(&model, &st, &tr, 0.1, GammaForm::Exact, &opts()).unwrap();
        assert!(z1.max_relative_difference() < 1e-6, "{}", z1.max_relative_difference());
    }

    #[test]
    fn gamma_vanishes_without_nonlinearity() {
        let model = oscillator(-100.0, 0.2).without_nonlinearity();
        let tr = trace_of(&model, 5.0);
        let cfg = ApproximationConfig::new(Scheme::A, 2, 0.0, vec![0.02, 0.01], 5.0).with_options(opts());
        let st = run_scheme(&model, &cfg).unwrap();
        let lip = model.f().lipschitz_constants(0.1, 0.0, 5.0).unwrap();
        let (_, g) = gamma_forcing(&model, &st, &tr, &lip, GammaForm::Exact);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_gamma_below_conservative() {
        let model = oscillator(-100.0, 0.0);
        let tr = trace_of(&model, 20.0);
        let cfg = ApproximationConfig::new(Scheme::A, 2, 0.0, vec![0.03, -0.02], 20.0).with_options(opts());
        let st = run_scheme(&model, &cfg).unwrap();
        let lip = model.f().lipschitz_constants(0.1, 0.0, 20.0).unwrap();
        let (_, exact) = gamma_forcing(&model, &st, &tr, &lip, GammaForm::Exact);
        let (_, cons) = gamma_forcing(&model, &st, &tr, &lip, GammaForm::Conservative);
        for (e, c) in exact.iter().zip(&cons) {
            assert!(e <= &(c * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn first_level_error_polynomial_form() {
        // m = 1: q(s) = c|α₂|(3y₂₁²s + 3|y₂₁|s² + s³ + |y₂₁|³)
        let a2: f64 = -100.0;
        let model = oscillator(a2, 0.0);
        let cfg = ApproximationConfig::new(Scheme::A, 1, 0.0, vec![0.03, -0.02], 5.0).with_options(opts());
        let st = run_scheme(&model, &cfg).unwrap();
        let mut poly = ErrorPolynomial::new(&model, &st);
        for &t in &[0.0, 0.4, 2.2] {
            let y = st.level(1).eval(t)[1];
            let q = poly.bound_at(t);
            let expect = [
                a2.abs() * y.abs().powi(3),
                3.0 * a2.abs() * y * y,
                3.0 * a2.abs() * y.abs(),
                a2.abs(),
            ];
            for (d, e) in expect.iter().enumerate() {
                assert!((q.coeff(d) - e).abs() <= 1e-12 * e.max(1.0), "degree {d}");
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_bounds() {
        let model = oscillator(-100.0, 0.0);
        let tr = trace_of(&model, 5.0);
        let cfg = ApproximationConfig::new(Scheme::A, 2, 0.0, vec![0.0, 0.0], 5.0).with_options(opts());
        let st = run_scheme(&model, &cfg).unwrap();
        let z2 = solve_z2(&model, &st, &tr, &opts()).unwrap();
        assert!(z2.values().iter().all(|&v| v == 0.0));
        let z3 = solve_z3(&model, &st, &tr, &opts()).unwrap();
        assert!(z3.values().iter().all(|&v| v == 0.0));
        // λ₁ from p alone: the fitted decay of the linear part
        let lam = z3.lambda1().unwrap();
        assert!(lam < 0.0);
    }

    #[test]
    fn dominance_chain() {
        for scheme in [Scheme::A, Scheme::B] {
            for m in 1..=3 {
                let model = oscillator(-100.0, 0.0);
                let t_end = 20.0;
                let tr = trace_of(&model, t_end);
                let x0 = vec![0.012, -0.009];
                let cfg = ApproximationConfig::new(scheme, m, 0.0, x0.clone(), t_end).with_options(opts());
                let st = run_scheme(&model, &cfg).unwrap();
                let z = direct_error(&model, &st, &opts()).unwrap();
                let z2 = solve_z2(&model, &st, &tr, &opts()).unwrap();
                let z3 = solve_z3(&model, &st, &tr, &opts()).unwrap();
                let z1 = solve_z1(&model, &st, &tr, 0.1, GammaForm::Exact, &opts()).unwrap();
                assert!(!z2.is_blowup());
                for &t in z.times() {
                    let e = z.norm_at(t);
                    assert!(
                        z2.value_at(t) >= e - 1e-12,
                        "{scheme} m={m} t={t}: Z2 {} < {e}",
                        z2.value_at(t)
                    );
                    assert!(z1.ode.value_at(t) >= e - 1e-12);
                    assert!(
                        z3.value_at(t) <= z2.value_at(t) * (1.0 + 1e-8) + 1e-12,
                        "{scheme} m={m} t={t} z3 {} z2 {}",
                        z3.value_at(t),
                        z2.value_at(t)
                    );
                }
                for v in z2.values().into_iter().chain(z3.values()).chain(z1.ode.values()) {
                    assert!(v >= 0.0);
                }
                let x = direct_solve(&model, 0.0, &x0, t_end, &opts()).unwrap();
                let bb = bilateral_bounds(&st, &z2);
                for (i, &t) in bb.times.iter().enumerate() {
                    let xn = x.norm_at(t);
                    assert!(bb.lower[i] <= xn + 1e-12 && xn <= bb.upper[i] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn bilateral_clamps_lower() {
        let model = oscillator(-100.0, 0.0);
        let tr = trace_of(&model, 5.0);
        let cfg = ApproximationConfig::new(Scheme::B, 1, 0.0, vec![0.05, 0.0], 5.0).with_options(opts());
        let st = run_scheme(&model, &cfg).unwrap();
        let z2 = solve_z2(&model, &st, &tr, &opts()).unwrap();
        let bb = bilateral_bounds(&st, &z2);
        assert!(bb.lower.iter().all(|&v| v >= 0.0));
        for i in 0..bb.times.len() {
            if bb.z[i] > bb.ym_norm[i] {
                assert_eq!(bb.lower[i], 0.0);
            }
            assert_eq!(bb.upper[i], bb.ym_norm[i] + bb.z[i]);
        }
    }

    #[test]
    fn far_initial_state_escapes() {
        let model = oscillator(-100.0, 0.0);
        let tr = trace_of(&model, 20.0);
        let cfg = ApproximationConfig::new(Scheme::A, 1, 0.0, vec![0.5, 0.5], 20.0).with_options(opts());
        let st = run_scheme(&model, &cfg).unwrap();
        let z2 = solve_z2(&model, &st, &tr, &opts()).unwrap();
        assert!(z2.is_blowup());
        assert_eq!(z2.tail_sup(0.25), f64::INFINITY);
    }
}
