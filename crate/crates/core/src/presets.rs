//! Parametrized planar oscillators and the named parameter sets.
//!
//! `ẋ₁ = x₂`, `ẋ₂ = −ω²(t)x₁ − α₁x₂ − α₂·(x₂³ or x₁³) + a·sin(ω₂t)` with
//! `ω²(t) = ω₀² + a₁ sin r₁t + a₂ sin r₂t + ν(1 − H(t − t_s))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PolySystemModel;
use crate::polyfield::{Monomial, PolyVectorField};
use crate::signals::TimeSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `α₂x₂³`
    VanDerPol,
    /// `α₂x₁³`
    Duffing,
}

/// Forcing frequency used when none is given.
pub const DEFAULT_OMEGA2: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorParams {
    pub nonlinearity: Nonlinearity,
    pub omega0_sq: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    #[serde(default)]
    pub a1: f64,
    #[serde(default)]
    pub a2: f64,
    #[serde(default = "default_r1")]
    pub r1: f64,
    #[serde(default = "default_r2")]
    pub r2: f64,
    /// Forcing amplitude, `F₀`.
    #[serde(default)]
    pub a: f64,
    #[serde(default = "default_omega2")]
    pub omega2: f64,
    /// Pulse level `ν` added to `ω²` before `pulse_switch`.
    #[serde(default)]
    pub pulse_level: f64,
    #[serde(default = "default_switch")]
    pub pulse_switch: f64,
}

fn default_r1() -> f64 {
    4.8 * std::f64::consts::PI
}
fn default_r2() -> f64 {
    21.0
}
fn default_omega2() -> f64 {
    DEFAULT_OMEGA2
}
fn default_switch() -> f64 {
    std::f64::consts::FRAC_PI_2
}

impl OscillatorParams {
    pub fn new(nonlinearity: Nonlinearity, omega0_sq: f64, alpha1: f64, alpha2: f64) -> Self {
        OscillatorParams {
            nonlinearity,
            omega0_sq,
            alpha1,
            alpha2,
            a1: 0.0,
            a2: 0.0,
            r1: default_r1(),
            r2: default_r2(),
            a: 0.0,
            omega2: default_omega2(),
            pulse_level: 0.0,
            pulse_switch: default_switch(),
        }
    }

    /// `ω²(t)` as a signal.
    pub fn omega_sq(&self) -> TimeSignal {
        let mut parts = vec![TimeSignal::constant(self.omega0_sq)];
        if self.a1 != 0.0 {
            parts.push(TimeSignal::sin(self.a1, self.r1, 0.0));
        }
        if self.a2 != 0.0 {
            parts.push(TimeSignal::sin(self.a2, self.r2, 0.0));
        }
        if self.pulse_level != 0.0 {
            parts.push(TimeSignal::pulse(self.pulse_level, self.pulse_switch));
        }
        if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            TimeSignal::Sum(parts)
        }
    }

    pub fn model(&self) -> Result<PolySystemModel> {
        let values = [
            self.omega0_sq,
            self.alpha1,
            self.alpha2,
            self.a1,
            self.a2,
            self.r1,
            self.r2,
            self.a,
            self.omega2,
            self.pulse_level,
            self.pulse_switch,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("oscillator parameters must be finite".into()));
        }
        let c = TimeSignal::constant;
        let a = vec![vec![c(0.0), c(1.0)], vec![self.omega_sq().neg(), c(-self.alpha1)]];
        let exps = match self.nonlinearity {
            Nonlinearity::VanDerPol => vec![0, 3],
            Nonlinearity::Duffing => vec![3, 0],
        };
        let second = if self.alpha2 == 0.0 {
            vec![]
        } else {
            vec![Monomial::new(c(-self.alpha2), exps)]
        };
        let f = PolyVectorField::new(2, vec![vec![], second])?;
        let eta = vec![TimeSignal::zero(), TimeSignal::sin(1.0, self.omega2, 0.0)];
        PolySystemModel::new(a, f, self.a, eta)
    }
}

/// A named parameter set with run settings suited to its region scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub params: OscillatorParams,
    pub horizon: f64,
    /// Radius bracket for region bisection.
    pub bracket: (f64, f64),
    /// Initial state well inside the region.
    pub interior_x0: [f64; 2],
}

pub const PRESET_NAMES: &[&str] = &[
    "vanderpol-8.1",
    "vanderpol-8.1-forced",
    "vanderpol-fig3",
    "duffing-6a",
    "duffing-6b",
    "duffing-6c",
    "duffing-6f",
    "duffing-pulse",
    "duffing-pulse-up",
];

pub fn preset(name: &str) -> Result<Preset> {
    use Nonlinearity::*;
    let vdp = || OscillatorParams {
        a1: 5.0,
        a2: 5.0,
        ..OscillatorParams::new(VanDerPol, 4.0, 1.2, -100.0)
    };
    let duffing = || OscillatorParams {
        a1: 5.0,
        a2: 5.0,
        ..OscillatorParams::new(Duffing, 4.0, 1.0, -10.0)
    };
    let pulse = |nu: f64| OscillatorParams {
        a: 1.5,
        pulse_level: nu,
        ..OscillatorParams::new(Duffing, 4.0, 1.0, -10.0)
    };
    let (params, horizon, bracket, interior_x0) = match name {
        "vanderpol-8.1" => (vdp(), 40.0, (0.005, 0.5), [0.03, -0.02]),
        "vanderpol-8.1-forced" => (OscillatorParams { a: 0.23, ..vdp() }, 40.0, (0.005, 0.5), [0.02, -0.01]),
        "vanderpol-fig3" => (
            OscillatorParams {
                alpha1: 1.0,
                alpha2: -1.0,
                ..vdp()
            },
            40.0,
            (0.05, 5.0),
            [0.3, -0.2],
        ),
        "duffing-6a" => (duffing(), 40.0, (0.01, 4.0), [0.1, -0.1]),
        "duffing-6b" => (
            OscillatorParams { a: 3.5, ..duffing() },
            40.0,
            (0.01, 4.0),
            [0.05, -0.05],
        ),
        "duffing-6c" => (
            OscillatorParams {
                alpha1: 0.05,
                ..duffing()
            },
            400.0,
            (0.01, 4.0),
            [0.05, -0.05],
        ),
        "duffing-6f" => (pulse(0.0), 40.0, (0.01, 4.0), [0.05, -0.05]),
        "duffing-pulse" => (pulse(-2.0), 40.0, (0.01, 4.0), [0.05, -0.05]),
        "duffing-pulse-up" => (pulse(4.0), 40.0, (0.01, 4.0), [0.05, -0.05]),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset `{name}`; known: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let name = PRESET_NAMES.iter().find(|n| **n == name).copied().unwrap();
    Ok(Preset {
        name,
        params,
        horizon,
        bracket,
        interior_x0,
    })
}
