//! Numerical toolkit for nonautonomous polynomial systems
//! `ẋ = A(t)x + f(t,x) + F₀η(t)`.
//!
//! The crate builds successive linear approximations `y₁ … y_m` whose sum
//! `Y_m` tracks the true solution, bounds the norm of the remainder with
//! scalar comparison equations, and uses those bounds to estimate
//! trapping/stability regions by radial bisection.

pub mod approx;
pub mod bounds;
pub mod linear;
pub mod model;
pub mod odeint;
pub mod polyfield;
pub mod presets;
pub mod region;
pub mod signals;

mod error;

pub use error::{Error, Result};
