//! Successive approximations `y₁ … y_m`, their sum `Y_m`, the direct
//! solution and the exact error `z = x − Y_m`.
//!
//! With `Y₀ ≡ 0`, level `k ≥ 2` solves
//!
//! * scheme A: `ẏ_k = (A + f′(Y_{k−1}))y_k + f(Y_{k−1}) − f(Y_{k−2}) − f′(Y_{k−2})y_{k−1}`
//! * scheme B: `ẏ_k = A y_k + f(Y_{k−1}) − f(Y_{k−2})`
//!
//! and `ẏ₁ = A y₁ + F`, `y₁(t₀) = x₀`, `y_k(t₀) = 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PolySystemModel;
use crate::odeint::{integrate, IntegratorOptions, Trajectory};
use crate::signals::sort_dedup;

/// Default cap on the number of levels.
pub const DEFAULT_MAX_LEVELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    A,
    B,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::A => "A",
            Scheme::B => "B",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Scheme::A),
            "B" | "b" => Ok(Scheme::B),
            other => Err(Error::InvalidArgument(format!(
                "unknown scheme `{other}` (expected A or B)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproximationConfig {
    pub scheme: Scheme,
    pub m: usize,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub opts: IntegratorOptions,
    pub max_levels: usize,
}

impl ApproximationConfig {
    pub fn new(scheme: Scheme, m: usize, t0: f64, x0: Vec<f64>, t_end: f64) -> Self {
        ApproximationConfig {
            scheme,
            m,
            t0,
            x0,
            t_end,
            opts: IntegratorOptions::default(),
            max_levels: DEFAULT_MAX_LEVELS,
        }
    }

    pub fn with_options(mut self, opts: IntegratorOptions) -> Self {
        self.opts = opts;
        self
    }

    fn validate(&self, model: &PolySystemModel) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        if self.m > self.max_levels {
            return Err(Error::InvalidArgument(format!(
                "m = {} exceeds the level cap {}",
                self.m, self.max_levels
            )));
        }
        if !(self.t_end > self.t0) {
            return Err(Error::InvalidArgument("horizon must exceed t0".into()));
        }
        if self.x0.len() != model.dim() {
            return Err(Error::InvalidArgument(format!(
                "x0 has {} components, model has {}",
                self.x0.len(),
                model.dim()
            )));
        }
        Ok(())
    }
}

/// Completed levels of a successive-approximation run.
#[derive(Debug, Clone)]
pub struct ApproximationStack {
    scheme: Scheme,
    t0: f64,
    t_end: f64,
    dim: usize,
    levels: Vec<Trajectory>,
    divergent_at: Option<usize>,
}

impl ApproximationStack {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of computed levels.
    pub fn m(&self) -> usize {
        self.levels.len()
    }

    /// Level `k` (1-based).
    pub fn level(&self, k: usize) -> &Trajectory {
        &self.levels[k - 1]
    }

    pub fn levels(&self) -> &[Trajectory] {
        &self.levels
    }

    /// Level at which a `y_k` blew up, if any.
    pub fn divergent_level(&self) -> Option<usize> {
        self.divergent_at
    }

    pub fn is_divergent(&self) -> bool {
        self.divergent_at.is_some()
    }

    /// `Y_k(t) = y₁(t) + … + y_k(t)`; `Y₀ ≡ 0`.
    pub fn partial_sum_into(&self, k: usize, t: f64, out: &mut [f64]) {
        partial_sum(&self.levels[..k], t, out);
    }

    pub fn ym_into(&self, t: f64, out: &mut [f64]) {
        self.partial_sum_into(self.m(), t, out);
    }

    pub fn ym(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.ym_into(t, &mut out);
        out
    }

    /// `(Y_m(t), Y_{m−1}(t), y_m(t))`.
    pub fn references_into(&self, t: f64, ym: &mut [f64], ym1: &mut [f64], last: &mut [f64]) {
        let m = self.m();
        self.partial_sum_into(m - 1, t, ym1);
        self.levels[m - 1].eval_into(t, last);
        for i in 0..self.dim {
            ym[i] = ym1[i] + last[i];
        }
    }

    /// Union of the sample grids of all levels.
    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.levels.iter().flat_map(|l| l.times().iter().copied()).collect();
        sort_dedup(&mut g);
        g
    }

    /// `Y_m` sampled on the union grid, with Hermite dense output.
    pub fn ym_trajectory(&self) -> Trajectory {
        let grid = self.grid();
        let d = self.dim;
        let mut states = Vec::with_capacity(grid.len() * d);
        let mut derivs = vec![0.0; grid.len() * d];
        let mut buf = vec![0.0; d];
        for (i, &t) in grid.iter().enumerate() {
            self.ym_into(t, &mut buf);
            states.extend_from_slice(&buf);
            for l in &self.levels {
                l.eval_derivative_into(t, &mut buf);
                for j in 0..d {
                    derivs[i * d + j] += buf[j];
                }
            }
        }
        Trajectory::from_samples(d, grid, states, derivs).expect("union grid is strictly increasing")
    }
}

fn partial_sum(levels: &[Trajectory], t: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut buf = vec![0.0; out.len()];
    for l in levels {
        l.eval_into(t, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o += b;
        }
    }
}

/// Right-hand side of level `k` given the completed levels `1 … k−1`.
pub struct LevelRhs<'a> {
    model: &'a PolySystemModel,
    scheme: Scheme,
    prior: &'a [Trajectory],
    u: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'a> LevelRhs<'a> {
    pub fn new(model: &'a PolySystemModel, scheme: Scheme, prior: &'a [Trajectory]) -> Self {
        let n = model.dim();
        LevelRhs {
            model,
            scheme,
            prior,
            u: vec![0.0; n],
            v: vec![0.0; n],
            w: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    pub fn eval(&mut self, t: f64, y: &[f64], out: &mut [f64]) {
        let model = self.model;
        let f = model.f();
        model.apply_a(t, y, out);
        let k = self.prior.len() + 1;
        if k == 1 {
            model.add_forcing(t, out);
            return;
        }
        // u = Y_{k−1}, v = Y_{k−2}, w = y_{k−1}
        partial_sum(&self.prior[..k - 2], t, &mut self.v);
        self.prior[k - 2].eval_into(t, &mut self.w);
        for i in 0..self.u.len() {
            self.u[i] = self.v[i] + self.w[i];
        }
        f.eval_into(t, &self.u, &mut self.tmp);
        add(out, &self.tmp, 1.0);
        if k > 2 {
            f.eval_into(t, &self.v, &mut self.tmp);
            add(out, &self.tmp, -1.0);
        }
        if self.scheme == Scheme::A {
            f.jacobian_times(t, &self.u, y, &mut self.tmp);
            add(out, &self.tmp, 1.0);
            if k > 2 {
                f.jacobian_times(t, &self.v, &self.w, &mut self.tmp);
                add(out, &self.tmp, -1.0);
            }
        }
    }
}

fn add(out: &mut [f64], v: &[f64], s: f64) {
    for (o, x) in out.iter_mut().zip(v) {
        *o += s * x;
    }
}

fn with_model_breakpoints(model: &PolySystemModel, opts: &IntegratorOptions) -> IntegratorOptions {
    opts.clone().with_breakpoints(&model.breakpoints())
}

/// Integrates levels `1 … m` sequentially.
///
/// If a level blows up the stack stops there and is marked divergent.
pub fn run_scheme(model: &PolySystemModel, cfg: &ApproximationConfig) -> Result<ApproximationStack> {
    cfg.validate(model)?;
    let n = model.dim();
    let opts = with_model_breakpoints(model, &cfg.opts);
    let mut levels: Vec<Trajectory> = Vec::with_capacity(cfg.m);
    let mut divergent_at = None;
    let zero = vec![0.0; n];
    for k in 1..=cfg.m {
        let x0 = if k == 1 { &cfg.x0 } else { &zero };
        let traj = if k > 1 && model.f().is_zero() {
            Trajectory::zeros(n, cfg.t0, cfg.t_end)
        } else {
            let mut rhs = LevelRhs::new(model, cfg.scheme, &levels);
            integrate(|t, y, out| rhs.eval(t, y, out), cfg.t0, x0, cfg.t_end, &opts)?
        };
        let blew_up = traj.is_blowup();
        levels.push(traj);
        if blew_up {
            divergent_at = Some(k);
            break;
        }
    }
    Ok(ApproximationStack {
        scheme: cfg.scheme,
        t0: cfg.t0,
        t_end: cfg.t_end,
        dim: n,
        levels,
        divergent_at,
    })
}

/// Solution of the full nonlinear system.
pub fn direct_solve(
    model: &PolySystemModel,
    t0: f64,
    x0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if x0.len() != model.dim() {
        return Err(Error::InvalidArgument("x0 dimension does not match the model".into()));
    }
    let opts = with_model_breakpoints(model, opts);
    integrate(|t, x, out| model.rhs(t, x, out), t0, x0, t_end, &opts)
}

/// Exact error `z = x − Y_m` from
/// `ż = Az + f(z + Y_m) − f(Y_{m−1}) − f′(Y_{m−1})y_m` (scheme A; the last
/// term is absent for scheme B), `z(t₀) = 0`.
pub fn direct_error(
    model: &PolySystemModel,
    stack: &ApproximationStack,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if stack.is_divergent() {
        return Err(Error::InvalidArgument("approximation stack is divergent".into()));
    }
    let n = model.dim();
    let f = model.f();
    let opts = with_model_breakpoints(model, opts);
    if f.is_zero() {
        return Ok(Trajectory::zeros(n, stack.t0, stack.t_end));
    }
    let (mut ym, mut ym1, mut last) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut s, mut tmp) = (vec![0.0; n], vec![0.0; n]);
    integrate(
        |t, z, out| {
            stack.references_into(t, &mut ym, &mut ym1, &mut last);
            model.apply_a(t, z, out);
            for i in 0..n {
                s[i] = z[i] + ym[i];
            }
            f.eval_into(t, &s, &mut tmp);
            add(out, &tmp, 1.0);
            f.eval_into(t, &ym1, &mut tmp);
            add(out, &tmp, -1.0);
            if stack.scheme == Scheme::A {
                f.jacobian_times(t, &ym1, &last, &mut tmp);
                add(out, &tmp, -1.0);
            }
        },
        stack.t0,
        &vec![0.0; n],
        stack.t_end,
        &opts,
    )
}
