//! Scalar time signals used as coefficients of `A(t)`, `f(t,x)` and `η(t)`.
//!
//! A signal is one of a constant, a sinusoid, a Heaviside pulse
//! `level·(1 − H(t − switch_time))`, or a finite sum of signals. Signals have
//! a compact text form that round-trips through [`std::fmt::Display`] and
//! [`std::str::FromStr`]:
//!
//! ```text
//! const(4)   sin(5, 15.079644737231007, 0)   pulse(-2, pi/2)   sum(const(4), sin(5, 21, 0))
//! ```

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TimeSignal {
    Constant(f64),
    /// `amplitude · sin(angular_frequency · t + phase)`
    Sinusoid {
        amplitude: f64,
        angular_frequency: f64,
        phase: f64,
    },
    /// `level` for `t < switch_time`, zero at and after `switch_time`.
    HeavisidePulse {
        level: f64,
        switch_time: f64,
    },
    Sum(Vec<TimeSignal>),
}

impl TimeSignal {
    pub fn constant(value: f64) -> Self {
        TimeSignal::Constant(value)
    }

    pub fn sin(amplitude: f64, angular_frequency: f64, phase: f64) -> Self {
        TimeSignal::Sinusoid {
            amplitude,
            angular_frequency,
            phase,
        }
    }

    pub fn pulse(level: f64, switch_time: f64) -> Self {
        TimeSignal::HeavisidePulse { level, switch_time }
    }

    pub fn zero() -> Self {
        TimeSignal::Constant(0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeSignal::Constant(v) => *v,
            TimeSignal::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } => amplitude * (angular_frequency * t + phase).sin(),
            TimeSignal::HeavisidePulse { level, switch_time } => {
                if t < *switch_time {
                    *level
                } else {
                    0.0
                }
            }
            TimeSignal::Sum(members) => members.iter().map(|m| m.eval(t)).sum(),
        }
    }

    /// Upper bound on `sup |s(t)|` over `[t_lo, t_hi]`. Exact for constants,
    /// sinusoids and pulses; a sum is bounded by the sum of member bounds.
    pub fn abs_sup(&self, t_lo: f64, t_hi: f64) -> f64 {
        debug_assert!(t_lo <= t_hi);
        match self {
            TimeSignal::Constant(v) => v.abs(),
            TimeSignal::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } => {
                let amp = amplitude.abs();
                if *angular_frequency == 0.0 {
                    return (amplitude * phase.sin()).abs();
                }
                // |sin θ| = 1 at θ = π/2 + kπ; check whether the phase range hits one.
                let (a, b) = {
                    let a = angular_frequency * t_lo + phase;
                    let b = angular_frequency * t_hi + phase;
                    if a <= b {
                        (a, b)
                    } else {
                        (b, a)
                    }
                };
                let k = ((a - PI / 2.0) / PI).ceil();
                if PI / 2.0 + k * PI <= b {
                    amp
                } else {
                    amp * a.sin().abs().max(b.sin().abs())
                }
            }
            TimeSignal::HeavisidePulse { level, switch_time } => {
                if t_lo < *switch_time {
                    level.abs()
                } else {
                    0.0
                }
            }
            TimeSignal::Sum(members) => members.iter().map(|m| m.abs_sup(t_lo, t_hi)).sum(),
        }
    }

    /// Switch times of every pulse in the signal, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breakpoints(&mut out);
        sort_dedup(&mut out);
        out
    }

    fn collect_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            TimeSignal::HeavisidePulse { switch_time, .. } => out.push(*switch_time),
            TimeSignal::Sum(members) => members.iter().for_each(|m| m.collect_breakpoints(out)),
            _ => {}
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn scale(&self, k: f64) -> Self {
        match self {
            TimeSignal::Constant(v) => TimeSignal::Constant(k * v),
            TimeSignal::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } => TimeSignal::Sinusoid {
                amplitude: k * amplitude,
                angular_frequency: *angular_frequency,
                phase: *phase,
            },
            TimeSignal::HeavisidePulse { level, switch_time } => TimeSignal::HeavisidePulse {
                level: k * level,
                switch_time: *switch_time,
            },
            TimeSignal::Sum(members) => TimeSignal::Sum(members.iter().map(|m| m.scale(k)).collect()),
        }
    }

    /// True when the signal does not depend on time.
    pub fn is_constant(&self) -> bool {
        match self {
            TimeSignal::Constant(_) => true,
            TimeSignal::Sinusoid {
                amplitude,
                angular_frequency,
                ..
            } => *amplitude == 0.0 || *angular_frequency == 0.0,
            TimeSignal::HeavisidePulse { level, .. } => *level == 0.0,
            TimeSignal::Sum(members) => members.iter().all(TimeSignal::is_constant),
        }
    }

    /// True when the signal evaluates to zero everywhere (structurally).
    pub fn is_zero(&self) -> bool {
        match self {
            TimeSignal::Constant(v) => *v == 0.0,
            TimeSignal::Sinusoid { amplitude, .. } => *amplitude == 0.0,
            TimeSignal::HeavisidePulse { level, .. } => *level == 0.0,
            TimeSignal::Sum(members) => members.iter().all(TimeSignal::is_zero),
        }
    }
}

pub(crate) fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
}

impl fmt::Display for TimeSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeSignal::Constant(v) => write!(f, "const({v:?})"),
            TimeSignal::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } => write!(f, "sin({amplitude:?}, {angular_frequency:?}, {phase:?})"),
            TimeSignal::HeavisidePulse { level, switch_time } => {
                write!(f, "pulse({level:?}, {switch_time:?})")
            }
            TimeSignal::Sum(members) => {
                f.write_str("sum(")?;
                for (i, m) in members.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{m}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for TimeSignal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser { src: s, pos: 0 };
        let sig = p.signal()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(p.err("trailing input"));
        }
        Ok(sig)
    }
}

impl Serialize for TimeSignal {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeSignal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, reason: &str) -> Error {
        Error::SignalParse {
            input: self.src.to_string(),
            reason: format!("{reason} at offset {}", self.pos),
        }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.err(&format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<&str> {
        self.skip_ws();
        let start = self.pos;
        let len = self
            .rest()
            .find(|c: char| !c.is_ascii_alphabetic())
            .unwrap_or(self.rest().len());
        if len == 0 {
            return Err(self.err("expected signal name"));
        }
        self.pos += len;
        Ok(&self.src[start..start + len])
    }

    fn signal(&mut self) -> Result<TimeSignal> {
        let name = self.ident()?.to_ascii_lowercase();
        self.eat('(')?;
        let sig = match name.as_str() {
            "const" => TimeSignal::Constant(self.number()?),
            "sin" => {
                let amplitude = self.number()?;
                self.eat(',')?;
                let angular_frequency = self.number()?;
                let phase = if self.peek_comma() {
                    self.eat(',')?;
                    self.number()?
                } else {
                    0.0
                };
                TimeSignal::sin(amplitude, angular_frequency, phase)
            }
            "pulse" => {
                let level = self.number()?;
                self.eat(',')?;
                TimeSignal::pulse(level, self.number()?)
            }
            "sum" => {
                let mut members = vec![self.signal()?];
                while self.peek_comma() {
                    self.eat(',')?;
                    members.push(self.signal()?);
                }
                TimeSignal::Sum(members)
            }
            other => return Err(self.err(&format!("unknown signal `{other}`"))),
        };
        self.eat(')')?;
        Ok(sig)
    }

    fn peek_comma(&mut self) -> bool {
        self.skip_ws();
        self.rest().starts_with(',')
    }

    /// A real literal, optionally combined with `pi`/`tau`: `2`, `-1.5e-3`,
    /// `pi`, `-pi/2`, `4.8*pi`.
    fn number(&mut self) -> Result<f64> {
        let mut value = self.factor()?;
        loop {
            self.skip_ws();
            if self.rest().starts_with('*') {
                self.pos += 1;
                value *= self.factor()?;
            } else if self.rest().starts_with('/') {
                self.pos += 1;
                value /= self.factor()?;
            } else {
                return Ok(value);
            }
        }
    }

    fn factor(&mut self) -> Result<f64> {
        self.skip_ws();
        let mut sign = 1.0;
        if self.rest().starts_with('-') {
            sign = -1.0;
            self.pos += 1;
        } else if self.rest().starts_with('+') {
            self.pos += 1;
        }
        self.skip_ws();
        let rest = self.rest();
        for (name, v) in [("pi", PI), ("tau", TAU)] {
            if rest.len() >= name.len() && rest[..name.len()].eq_ignore_ascii_case(name) {
                self.pos += name.len();
                return Ok(sign * v);
            }
        }
        let len = rest
            .char_indices()
            .find(|&(i, c)| {
                !(c.is_ascii_digit()
                    || c == '.'
                    || c == 'e'
                    || c == 'E'
                    || ((c == '-' || c == '+') && i > 0 && matches!(rest.as_bytes()[i - 1], b'e' | b'E')))
            })
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        let text = &rest[..len];
        let v: f64 = text.parse().map_err(|_| self.err(&format!("bad number `{text}`")))?;
        self.pos += len;
        Ok(sign * v)
    }
}
