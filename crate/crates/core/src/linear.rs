//! Fundamental matrix of `ẋ = A(t)x` and the scalar diagnostics derived
//! from it: `p = d ln σ_max/dt`, the running condition number `c`, decay
//! exponent fits and the envelope recursion for successive approximations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::odeint::{integrate, IntegratorOptions, Trajectory};
use crate::signals::{sort_dedup, TimeSignal};

/// Default cap on `c(t)` above which the boundedness assumption is flagged.
pub const DEFAULT_C_CAP: f64 = 1e4;

/// Samples of `w(t)` with `w(t₀) = I` together with `σ_max`, `σ_min`, `p`, `c`.
#[derive(Debug, Clone)]
pub struct FundamentalMatrixTrace {
    t0: f64,
    dim: usize,
    w: Trajectory,
    breakpoints: Vec<f64>,
    sigma_max: Vec<f64>,
    sigma_min: Vec<f64>,
    p: Vec<f64>,
    c: Vec<f64>,
}

/// Integrates `Ẇ = A(t)W`, `W(t₀) = I` on `[t0, t_end]`.
pub fn fundamental_matrix(
    a: &[Vec<TimeSignal>],
    t0: f64,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<FundamentalMatrixTrace> {
    let n = a.len();
    if n == 0 || a.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("A must be a nonempty square matrix".into()));
    }
    let mut breakpoints: Vec<f64> = a.iter().flatten().flat_map(|s| s.breakpoints()).collect();
    breakpoints.extend_from_slice(&opts.breakpoints);
    sort_dedup(&mut breakpoints);
    let mut o = opts.clone().with_breakpoints(&breakpoints);
    o.scale_by_norm = true;
    o.abs_tol = o.abs_tol.min(1e-300);
    o.blowup_threshold = f64::MAX;

    let mut x0 = vec![0.0; n * n];
    for i in 0..n {
        x0[i * n + i] = 1.0;
    }
    let mut am = vec![0.0; n * n];
    let w = integrate(
        |t, x, out| {
            for (i, row) in a.iter().enumerate() {
                for (k, s) in row.iter().enumerate() {
                    am[i * n + k] = s.eval(t);
                }
            }
            // column-major W
            for j in 0..n {
                for i in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += am[i * n + k] * x[j * n + k];
                    }
                    out[j * n + i] = acc;
                }
            }
        },
        t0,
        &x0,
        t_end,
        &o,
    )?;

    let (sigma_max, sigma_min): (Vec<f64>, Vec<f64>) = (0..w.len()).map(|i| singular_extremes(w.state(i), n)).unzip();
    let log_s: Vec<f64> = sigma_max.iter().map(|s| s.ln()).collect();
    let p = grid_derivative(w.times(), &log_s, &breakpoints);
    let c = sigma_max
        .iter()
        .zip(&sigma_min)
        .map(|(a, b)| (a / b).max(1.0))
        .collect();
    Ok(FundamentalMatrixTrace {
        t0,
        dim: n,
        w,
        breakpoints,
        sigma_max,
        sigma_min,
        p,
        c,
    })
}

/// `(σ_max, σ_min)` of an `n×n` matrix stored column-major.
pub fn singular_extremes(m: &[f64], n: usize) -> (f64, f64) {
    match n {
        1 => (m[0].abs(), m[0].abs()),
        2 => {
            let (a, c, b, d) = (m[0], m[1], m[2], m[3]);
            let s = 0.5 * (a * a + b * b + c * c + d * d);
            let det = a * d - b * c;
            let disc = ((s - det) * (s + det)).max(0.0).sqrt();
            let smax = (s + disc).sqrt();
            let smin = if smax > 0.0 { det.abs() / smax } else { 0.0 };
            (smax, smin)
        }
        _ => {
            let sv = DMatrix::from_column_slice(n, n, m).singular_values();
            let max = sv.iter().cloned().fold(0.0, f64::max);
            let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            (max, min)
        }
    }
}

/// Finite-difference derivative on a nonuniform grid: centered in the
/// interior, one-sided at the ends and forward at breakpoints.
fn grid_derivative(t: &[f64], y: &[f64], breakpoints: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let is_break = |ti: f64| breakpoints.contains(&ti);
    (0..n)
        .map(|i| {
            if i == 0 || (is_break(t[i]) && i + 1 < n) {
                (y[i + 1] - y[i]) / (t[i + 1] - t[i])
            } else if i == n - 1 {
                (y[i] - y[i - 1]) / (t[i] - t[i - 1])
            } else {
                let hm = t[i] - t[i - 1];
                let hp = t[i + 1] - t[i];
                (hm * hm * (y[i + 1] - y[i]) + hp * hp * (y[i] - y[i - 1])) / (hm * hp * (hm + hp))
            }
        })
        .collect()
}

impl FundamentalMatrixTrace {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.w.t_end()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        self.w.times()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn sigma_max(&self) -> &[f64] {
        &self.sigma_max
    }

    pub fn sigma_min(&self) -> &[f64] {
        &self.sigma_min
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// `ĉ = max c(t)` over the samples.
    pub fn c_max(&self) -> f64 {
        self.c.iter().cloned().fold(1.0, f64::max)
    }

    /// False when `c(t)` exceeds `cap` somewhere, i.e. the assumption
    /// `c ≤ ĉ` is doubtful on this horizon.
    pub fn c_within(&self, cap: f64) -> bool {
        self.c_max() <= cap
    }

    /// `w(t)` as a dense matrix (interpolated).
    pub fn w_at(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.dim, self.dim, &self.w.eval(t))
    }

    /// `(σ_max, σ_min)` of the interpolated `w(t)`.
    pub fn sigma_at(&self, t: f64) -> (f64, f64) {
        let mut buf = [0.0; 4];
        if self.dim <= 2 {
            let k = self.dim * self.dim;
            self.w.eval_into(t, &mut buf[..k]);
            singular_extremes(&buf[..k], self.dim)
        } else {
            singular_extremes(&self.w.eval(t), self.dim)
        }
    }

    /// `‖W(t,s)‖ = ‖w(t) w(s)⁻¹‖`.
    pub fn transition_norm(&self, t: f64, s: f64) -> Result<f64> {
        if !(s >= self.t0 && s <= t && t <= self.t_end()) {
            return Err(Error::InvalidArgument(format!(
                "transition_norm needs t0 ≤ s ≤ t ≤ T, got s = {s}, t = {t}"
            )));
        }
        if s == t {
            return Ok(1.0);
        }
        let ws = self.w_at(s);
        let (smax, smin) = singular_extremes(ws.as_slice(), self.dim);
        if smin < 1e-12 * smax {
            return Err(Error::SingularTransition { t: s });
        }
        let inv = ws.try_inverse().ok_or(Error::SingularTransition { t: s })?;
        let m = self.w_at(t) * inv;
        Ok(singular_extremes(m.as_slice(), self.dim).0)
    }

    /// Cumulative trapezoid of `p`; its exponential approximates `‖w(t)‖`.
    pub fn log_norm_from_p(&self) -> Vec<f64> {
        let t = self.times();
        let mut out = Vec::with_capacity(t.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..t.len() {
            acc += 0.5 * (self.p[i] + self.p[i - 1]) * (t[i] - t[i - 1]);
            out.push(acc);
        }
        out
    }

    /// Fits `‖W(t,t₀)‖ ≤ N₁ e^{−v₁(t−t₀)}` and estimates `λ̂`.
    pub fn exponent_estimate(&self) -> ExponentEstimate {
        let t0 = self.t0;
        let t = self.times();
        let lambda_hat = -t
            .iter()
            .zip(&self.sigma_max)
            .filter(|(ti, _)| **ti > t0)
            .map(|(ti, s)| s.ln() / (ti - t0))
            .fold(f64::NEG_INFINITY, f64::max);

        // least squares on a uniform resampling so grid density does not bias the fit
        let samples = 4001;
        let span = self.t_end() - t0;
        let uniform: Vec<(f64, f64)> = (0..samples)
            .map(|i| {
                let ti = t0 + span * i as f64 / (samples - 1) as f64;
                (ti, self.sigma_at(ti).0.ln())
            })
            .collect();
        let nf = samples as f64;
        let mt = uniform.iter().map(|p| p.0).sum::<f64>() / nf;
        let my = uniform.iter().map(|p| p.1).sum::<f64>() / nf;
        let sxy: f64 = uniform.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = uniform.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let v1 = -sxy / sxx;

        let log_n1 = uniform
            .iter()
            .map(|&(ti, ls)| (ti, ls))
            .chain(t.iter().zip(&self.sigma_max).map(|(ti, s)| (*ti, s.ln())))
            .map(|(ti, ls)| ls + v1 * (ti - t0))
            .fold(f64::NEG_INFINITY, f64::max);
        ExponentEstimate {
            lambda_hat,
            v1,
            n1: log_n1.exp(),
            valid: v1 > 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentEstimate {
    /// `λ̂ = −sup (t−t₀)⁻¹ ∫p`.
    pub lambda_hat: f64,
    pub v1: f64,
    pub n1: f64,
    pub valid: bool,
}

/// Envelope curves `ỹ_k` on a grid and the absolute-convergence test.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRecursion {
    pub grid: Vec<f64>,
    /// `curves[k-1][i] = ỹ_k(grid[i])`.
    pub curves: Vec<Vec<f64>>,
    /// `l·N₁·F₀/v₁`.
    pub certificate_value: f64,
    pub certificate: bool,
}

impl EnvelopeRecursion {
    /// `sup_t ỹ_{k+1}(t)/ỹ_k(t)` over grid points where `ỹ_k > 0` (1-based `k`).
    pub fn sup_ratio(&self, k: usize) -> f64 {
        let (a, b) = (&self.curves[k - 1], &self.curves[k]);
        a.iter()
            .zip(b)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| y / x)
            .fold(0.0, f64::max)
    }
}

/// `ỹ₁(t) = N₁((‖x₀‖ − F₀/v₁)e^{−v₁(t−t₀)} + F₀/v₁)` and
/// `ỹ_{k+1}(t) = N₁ l ∫_{t₀}^t e^{−v₁(t−τ)} ỹ_k(τ) dτ` by the trapezoid rule.
pub fn envelope_recursion(
    v1: f64,
    n1: f64,
    l: f64,
    f0: f64,
    x0_norm: f64,
    k_max: usize,
    grid: &[f64],
) -> Result<EnvelopeRecursion> {
    if !(v1 > 0.0) {
        return Err(Error::NonPositiveDecay { v1 });
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must be nonempty and increasing".into()));
    }
    let t0 = grid[0];
    let mut curves = Vec::with_capacity(k_max);
    if k_max > 0 {
        curves.push(
            grid.iter()
                .map(|t| n1 * ((x0_norm - f0 / v1) * (-v1 * (t - t0)).exp() + f0 / v1))
                .collect::<Vec<f64>>(),
        );
    }
    for k in 1..k_max {
        let prev: &Vec<f64> = &curves[k - 1];
        let mut next = vec![0.0; grid.len()];
        let mut acc = 0.0;
        for i in 1..grid.len() {
            let h = grid[i] - grid[i - 1];
            let e = (-v1 * h).exp();
            acc = e * acc + 0.5 * h * (e * prev[i - 1] + prev[i]);
            next[i] = n1 * l * acc;
        }
        curves.push(next);
    }
    let certificate_value = l * n1 * f0 / v1;
    Ok(EnvelopeRecursion {
        grid: grid.to_vec(),
        curves,
        certificate_value,
        certificate: certificate_value < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> TimeSignal {
        TimeSignal::constant(v)
    }

    fn opts() -> IntegratorOptions {
        IntegratorOptions::with_tolerances(1e-11, 1e-14)
    }

    fn mat(rows: &[[f64; 2]; 2]) -> Vec<Vec<TimeSignal>> {
        rows.iter().map(|r| r.iter().map(|&v| c(v)).collect()).collect()
    }

    /// Scaling-and-squaring Taylor exponential, independent of the integrator.
    fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let norm = a.iter().map(|v| v.abs()).sum::<f64>();
        let s = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let b = a / 2f64.powi(s);
        let n = a.nrows();
        let mut term = DMatrix::identity(n, n);
        let mut sum = DMatrix::identity(n, n);
        for k in 1..30 {
            term = &term * &b / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn identity_at_start() {
        let tr = fundamental_matrix(&mat(&[[0.0, 1.0], [-4.0, -1.2]]), 0.0, 5.0, &opts()).unwrap();
        let w0 = tr.w_at(0.0);
        assert_eq!(w0, DMatrix::identity(2, 2));
        assert_eq!(tr.sigma_max()[0], 1.0);
        assert!(tr.c().iter().all(|&v| v >= 1.0));
    }

    #[test]
    fn negative_identity() {
        let tr = fundamental_matrix(&mat(&[[-1.0, 0.0], [0.0, -1.0]]), 0.0, 10.0, &opts()).unwrap();
        for (i, &t) in tr.times().iter().enumerate() {
            assert!((tr.sigma_max()[i] - (-t).exp()).abs() <= 1e-9 * (-t).exp());
            assert!((tr.c()[i] - 1.0).abs() < 1e-9);
            assert!((tr.p()[i] + 1.0).abs() < 1e-6, "p = {}", tr.p()[i]);
        }
        let e = tr.exponent_estimate();
        assert!((e.lambda_hat - 1.0).abs() < 1e-6);
        assert!((e.v1 - 1.0).abs() < 1e-6);
        assert!((e.n1 - 1.0).abs() < 1e-6);
        assert!(e.valid);
        assert!((tr.transition_norm(7.0, 2.0).unwrap() - (-5.0f64).exp()).abs() < 1e-9);
        assert_eq!(tr.transition_norm(3.0, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn diagonal_condition_number_grows() {
        let tr = fundamental_matrix(&mat(&[[-1.0, 0.0], [0.0, -2.0]]), 0.0, 8.0, &opts()).unwrap();
        for (i, &t) in tr.times().iter().enumerate() {
            assert!((tr.c()[i] - t.exp()).abs() <= 1e-7 * t.exp());
        }
        let last = tr.p().len() - 1;
        assert!((tr.p()[last] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn matches_matrix_exponential() {
        let a = [[0.0, 1.0], [-4.0, -1.2]];
        let tr = fundamental_matrix(&mat(&a), 0.0, 20.0, &opts()).unwrap();
        let am = DMatrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]]);
        for k in 0..=80 {
            let t = 0.25 * k as f64;
            let e = expm(&(&am * t));
            let oracle = singular_extremes(DMatrix::from(e).as_slice(), 2).0;
            let got = tr.sigma_at(t).0;
            assert!(
                (got - oracle).abs() <= 1e-6 * oracle.max(1e-300),
                "t = {t}: {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn p_integrates_to_log_norm() {
        let a = vec![
            vec![c(0.0), c(1.0)],
            vec![TimeSignal::Sum(vec![c(-4.0), TimeSignal::sin(2.0, 3.0, 0.0)]), c(-1.0)],
        ];
        let tr = fundamental_matrix(&a, 0.0, 20.0, &opts()).unwrap();
        let lp = tr.log_norm_from_p();
        for (i, s) in tr.sigma_max().iter().enumerate() {
            assert!((lp[i].exp() / s - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn transition_is_submultiplicative() {
        let a = vec![
            vec![c(0.0), c(1.0)],
            vec![TimeSignal::Sum(vec![c(-4.0), TimeSignal::sin(5.0, 15.0, 0.0)]), c(-1.2)],
        ];
        let tr = fundamental_matrix(&a, 0.0, 10.0, &opts()).unwrap();
        for k in 0..40 {
            let s = 0.1 + 0.2 * k as f64 / 4.0;
            let r = s + 0.37;
            let t = r + 1.13;
            if t > 10.0 {
                break;
            }
            let lhs = tr.transition_norm(t, s).unwrap();
            let rhs = tr.transition_norm(t, r).unwrap() * tr.transition_norm(r, s).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-9));
        }
        assert!(tr.transition_norm(1.0, 2.0).is_err());
    }

    #[test]
    fn complex_pair_decay_rate() {
        // eigenvalues −1 ± 2i, non-normal
        let tr = fundamental_matrix(&mat(&[[0.0, 1.0], [-5.0, -2.0]]), 0.0, 40.0, &opts()).unwrap();
        let e = tr.exponent_estimate();
        assert!((e.v1 - 1.0).abs() < 0.05, "v1 = {}", e.v1);
        for (i, &t) in tr.times().iter().enumerate() {
            assert!(tr.sigma_max()[i] <= e.n1 * (-e.v1 * t).exp() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn unstable_is_invalid() {
        let tr = fundamental_matrix(&mat(&[[1.0, 0.0], [0.0, 1.0]]), 0.0, 5.0, &opts()).unwrap();
        assert!(!tr.exponent_estimate().valid);
    }

    #[test]
    fn breakpoint_derivative_is_one_sided() {
        let a = vec![vec![TimeSignal::Sum(vec![c(-1.0), TimeSignal::pulse(-2.0, 1.0)])]];
        let tr = fundamental_matrix(&a, 0.0, 2.0, &opts()).unwrap();
        let k = tr.times().iter().position(|&t| t == 1.0).unwrap();
        // after the switch A = −1
        assert!((tr.p()[k] + 1.0).abs() < 1e-6);
        assert!((tr.p()[k - 1] + 3.0).abs() < 1e-3);
    }

    #[test]
    fn envelope_second_level_closed_form() {
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let (v, n, l, x) = (0.7, 1.8, 0.3, 0.4);
        let env = envelope_recursion(v, n, l, 0.0, x, 3, &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = n * n * l * x * t * (-v * t).exp();
            assert!((env.curves[1][i] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_zero_data() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let env = envelope_recursion(1.0, 2.0, 3.0, 0.0, 0.0, 5, &grid).unwrap();
        assert!(env.curves.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn envelope_certificate() {
        let env = envelope_recursion(1.0, 1.0, 0.5, 0.1, 1.0, 2, &[0.0, 1.0]).unwrap();
        assert!((env.certificate_value - 0.05).abs() < 1e-15);
        assert!(env.certificate);
        assert!(envelope_recursion(0.0, 1.0, 0.5, 0.1, 1.0, 2, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn envelope_geometric_tail() {
        // N₁l/v₁ < 1 makes successive levels shrink
        let grid: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.02).collect();
        let env = envelope_recursion(1.0, 1.2, 0.5, 0.2, 0.3, 8, &grid).unwrap();
        for k in 3..8 {
            assert!(env.sup_ratio(k) < 1.0);
        }
    }
}
