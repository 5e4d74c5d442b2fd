//! The system `ẋ = A(t)x + f(t,x) + F₀η(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyfield::PolyVectorField;
use crate::signals::{sort_dedup, TimeSignal};

/// Slack allowed on `sup ‖η‖ ≤ 1`.
pub const ETA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySystemModel {
    dim: usize,
    a: Vec<Vec<TimeSignal>>,
    f: PolyVectorField,
    f0: f64,
    eta: Vec<TimeSignal>,
}

impl PolySystemModel {
    pub fn new(a: Vec<Vec<TimeSignal>>, f: PolyVectorField, f0: f64, eta: Vec<TimeSignal>) -> Result<Self> {
        let dim = a.len();
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        if a.iter().any(|row| row.len() != dim) {
            return Err(Error::InvalidModel(format!("A must be {dim}×{dim}")));
        }
        if f.dim() != dim {
            return Err(Error::InvalidModel(format!(
                "nonlinearity has dimension {} but A is {dim}×{dim}",
                f.dim()
            )));
        }
        if eta.len() != dim {
            return Err(Error::InvalidModel(format!("η must have {dim} components")));
        }
        if let Some(d) = f.min_degree() {
            if d < 2 {
                return Err(Error::InvalidModel(format!(
                    "nonlinearity contains a monomial of degree {d}; all degrees must be at least 2"
                )));
            }
        }
        if !(f0 >= 0.0 && f0.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "F0 must be finite and nonnegative, got {f0}"
            )));
        }
        Ok(PolySystemModel { dim, a, f, f0, eta })
    }

    /// Purely linear homogeneous model `ẋ = A(t)x`.
    pub fn linear(a: Vec<Vec<TimeSignal>>) -> Result<Self> {
        let dim = a.len();
        Self::new(a, PolyVectorField::zero(dim), 0.0, vec![TimeSignal::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a(&self) -> &[Vec<TimeSignal>] {
        &self.a
    }

    pub fn f(&self) -> &PolyVectorField {
        &self.f
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn eta(&self) -> &[TimeSignal] {
        &self.eta
    }

    pub fn with_f0(mut self, f0: f64) -> Result<Self> {
        if !(f0 >= 0.0 && f0.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "F0 must be finite and nonnegative, got {f0}"
            )));
        }
        self.f0 = f0;
        Ok(self)
    }

    /// Same model with the nonlinearity removed.
    pub fn without_nonlinearity(&self) -> Self {
        PolySystemModel {
            f: PolyVectorField::zero(self.dim),
            ..self.clone()
        }
    }

    /// Checks `sup ‖η(t)‖₂ ≤ 1 + tol` on `[t_lo, t_hi]`.
    ///
    /// The componentwise bound is tried first; if it is inconclusive the
    /// norm is sampled densely.
    pub fn check_forcing(&self, t_lo: f64, t_hi: f64, tol: f64) -> Result<()> {
        let bound = self
            .eta
            .iter()
            .map(|s| s.abs_sup(t_lo, t_hi).powi(2))
            .sum::<f64>()
            .sqrt();
        if bound <= 1.0 + tol {
            return Ok(());
        }
        let samples = 20_000;
        let mut worst: f64 = 0.0;
        for i in 0..=samples {
            let t = t_lo + (t_hi - t_lo) * i as f64 / samples as f64;
            let n = self.eta.iter().map(|s| s.eval(t).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(n);
        }
        if worst <= 1.0 + tol {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("sup ‖η‖ = {worst} exceeds 1")))
        }
    }

    /// `A(t)` in row-major order.
    pub fn a_at(&self, t: f64, out: &mut [f64]) {
        let n = self.dim;
        for (i, row) in self.a.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                out[i * n + j] = s.eval(t);
            }
        }
    }

    /// `out = A(t) x`.
    pub fn apply_a(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.a) {
            *o = row.iter().zip(x).map(|(s, xj)| s.eval(t) * xj).sum();
        }
    }

    /// `out += F₀ η(t)`.
    pub fn add_forcing(&self, t: f64, out: &mut [f64]) {
        if self.f0 == 0.0 {
            return;
        }
        for (o, s) in out.iter_mut().zip(&self.eta) {
            *o += self.f0 * s.eval(t);
        }
    }

    pub fn forcing_norm(&self, t: f64) -> f64 {
        self.f0 * self.eta.iter().map(|s| s.eval(t).powi(2)).sum::<f64>().sqrt()
    }

    /// Full right-hand side `A(t)x + f(t,x) + F₀η(t)`.
    pub fn rhs(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.apply_a(t, x, out);
        let mut buf = vec![0.0; self.dim];
        self.f.eval_into(t, x, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o += b;
        }
        self.add_forcing(t, out);
    }

    /// Switch times of every pulse in `A`, `f` and `η`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.a.iter().flatten().flat_map(|s| s.breakpoints()).collect();
        out.extend(self.f.breakpoints());
        out.extend(self.eta.iter().flat_map(|s| s.breakpoints()));
        sort_dedup(&mut out);
        out
    }

    /// True when no coefficient depends on time.
    pub fn is_autonomous(&self) -> bool {
        self.a.iter().flatten().all(TimeSignal::is_constant)
            && self.f.monomials().all(|(_, m)| m.coeff.is_constant())
            && (self.f0 == 0.0 || self.eta.iter().all(TimeSignal::is_constant))
    }
}
