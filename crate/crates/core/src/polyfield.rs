//! Polynomial vector fields with time-dependent coefficients.
//!
//! Besides evaluation and exact Jacobians, this module expands `f(t, z + u)`
//! in powers of `z` (coefficients are polynomials in `u`) and turns a
//! numerically evaluated expansion into a scalar majorant `q(‖z‖)` with
//! nonnegative coefficients, using `‖·‖₂ ≤ ‖·‖₁` and `|z_j| ≤ ‖z‖₂`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{sort_dedup, TimeSignal};

/// `coeff(t) · x₁^{d₁} ⋯ x_n^{d_n}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: TimeSignal,
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(coeff: TimeSignal, exponents: Vec<u32>) -> Self {
        Monomial { coeff, exponents }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    fn power(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .filter(|(d, _)| **d > 0)
            .map(|(d, xi)| xi.powi(*d as i32))
            .product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyVectorField {
    dim: usize,
    components: Vec<Vec<Monomial>>,
}

impl PolyVectorField {
    pub fn new(dim: usize, components: Vec<Vec<Monomial>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("field dimension must be positive".into()));
        }
        if components.len() != dim {
            return Err(Error::InvalidModel(format!(
                "field has {} components, expected {dim}",
                components.len()
            )));
        }
        for (i, comp) in components.iter().enumerate() {
            for m in comp {
                if m.exponents.len() != dim {
                    return Err(Error::InvalidModel(format!(
                        "monomial in component {i} has {} exponents, expected {dim}",
                        m.exponents.len()
                    )));
                }
            }
        }
        Ok(PolyVectorField { dim, components })
    }

    pub fn zero(dim: usize) -> Self {
        PolyVectorField {
            dim,
            components: vec![Vec::new(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Vec<Monomial>] {
        &self.components
    }

    pub fn monomials(&self) -> impl Iterator<Item = (usize, &Monomial)> {
        self.components
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.iter().map(move |m| (i, m)))
    }

    pub fn is_zero(&self) -> bool {
        self.monomials().all(|(_, m)| m.coeff.is_zero())
    }

    pub fn min_degree(&self) -> Option<u32> {
        self.monomials().map(|(_, m)| m.degree()).min()
    }

    pub fn max_degree(&self) -> u32 {
        self.monomials().map(|(_, m)| m.degree()).max().unwrap_or(0)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.monomials().flat_map(|(_, m)| m.coeff.breakpoints()).collect();
        sort_dedup(&mut out);
        out
    }

    /// Coefficient values `ζ(t)` for every monomial, laid out like `components`.
    pub fn coeffs_at(&self, t: f64) -> Vec<Vec<f64>> {
        self.components
            .iter()
            .map(|c| c.iter().map(|m| m.coeff.eval(t)).collect())
            .collect()
    }

    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (o, comp) in out.iter_mut().zip(&self.components) {
            *o = comp.iter().map(|m| m.coeff.eval(t) * m.power(x)).sum();
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, x, &mut out);
        out
    }

    /// Exact Jacobian `∂f_i/∂x_j` at `(t, x)`.
    pub fn jacobian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let mut jac = DMatrix::zeros(n, n);
        let mut e = vec![0u32; n];
        for (i, comp) in self.components.iter().enumerate() {
            for m in comp {
                let z = m.coeff.eval(t);
                if z == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let d = m.exponents[j];
                    if d == 0 {
                        continue;
                    }
                    e.copy_from_slice(&m.exponents);
                    e[j] -= 1;
                    let p: f64 = e
                        .iter()
                        .zip(x)
                        .filter(|(d, _)| **d > 0)
                        .map(|(d, xi)| xi.powi(*d as i32))
                        .product();
                    jac[(i, j)] += z * d as f64 * p;
                }
            }
        }
        jac
    }

    /// `f′(t, x) v` without forming the matrix.
    pub fn jacobian_times(&self, t: f64, x: &[f64], v: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for (i, comp) in self.components.iter().enumerate() {
            let mut acc = 0.0;
            for m in comp {
                let z = m.coeff.eval(t);
                if z == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let d = m.exponents[j];
                    if d == 0 || v[j] == 0.0 {
                        continue;
                    }
                    let mut p = d as f64 * v[j];
                    for (k, (&dk, &xk)) in m.exponents.iter().zip(x).enumerate() {
                        let e = if k == j { dk - 1 } else { dk };
                        if e > 0 {
                            p *= xk.powi(e as i32);
                        }
                    }
                    acc += z * p;
                }
            }
            out[i] = acc;
        }
    }

    /// Multinomial expansion of `f(t, z + u)` grouped by monomials in `z`.
    pub fn shift_expand(&self) -> ShiftedField {
        let n = self.dim;
        let mut components = Vec::with_capacity(n);
        for comp in &self.components {
            let mut groups: BTreeMap<Vec<u32>, Vec<ShiftTerm>> = BTreeMap::new();
            for (idx, m) in comp.iter().enumerate() {
                let mut k = vec![0u32; n];
                loop {
                    let mult: f64 = k.iter().zip(&m.exponents).map(|(&kj, &dj)| binomial(dj, kj)).product();
                    let u_exp: Vec<u32> = m.exponents.iter().zip(&k).map(|(d, kj)| d - kj).collect();
                    groups.entry(k.clone()).or_default().push(ShiftTerm {
                        monomial: idx,
                        multiplier: mult,
                        u_exp,
                    });
                    // odometer over 0 ≤ k_j ≤ d_j
                    let mut j = 0;
                    loop {
                        if j == n {
                            break;
                        }
                        if k[j] < m.exponents[j] {
                            k[j] += 1;
                            break;
                        }
                        k[j] = 0;
                        j += 1;
                    }
                    if j == n {
                        break;
                    }
                }
            }
            let mut groups: Vec<ShiftGroup> = groups
                .into_iter()
                .map(|(z_exp, terms)| ShiftGroup {
                    z_degree: z_exp.iter().sum(),
                    z_exp,
                    terms,
                })
                .collect();
            groups.sort_by(|a, b| a.z_degree.cmp(&b.z_degree).then_with(|| a.z_exp.cmp(&b.z_exp)));
            components.push(groups);
        }
        ShiftedField {
            dim: n,
            field: self.clone(),
            components,
        }
    }

    /// `L(t, s)`: majorant of `‖f(t, x)‖` in terms of `s = ‖x‖`.
    pub fn norm_majorant(&self, t: f64) -> NormBoundPolynomial {
        let mut coeffs = vec![0.0; self.max_degree() as usize + 1];
        for (_, m) in self.monomials() {
            coeffs[m.degree() as usize] += m.coeff.eval(t).abs();
        }
        NormBoundPolynomial::new(coeffs)
    }

    /// Conservative Lipschitz-type constants on the ball `‖x‖ ≤ radius`
    /// over `[t_lo, t_hi]`.
    pub fn lipschitz_constants(&self, radius: f64, t_lo: f64, t_hi: f64) -> Result<LipschitzConstants> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        if t_hi < t_lo {
            return Err(Error::InvalidArgument("t_hi < t_lo".into()));
        }
        let analytic = self.analytic_lipschitz(radius, t_lo, t_hi);
        let sampled = self.sampled_lipschitz(radius, t_lo, t_hi);
        Ok(LipschitzConstants {
            l1: analytic.l1.max(sampled.l1),
            l2: analytic.l2.max(sampled.l2),
            l3: analytic.l3.max(sampled.l3),
        })
    }

    /// Monomial-wise bounds: `|ζ x^d| ≤ sup|ζ| R^{|d|}` and the Frobenius
    /// bound on the Jacobian.
    pub fn analytic_lipschitz(&self, radius: f64, t_lo: f64, t_hi: f64) -> LipschitzConstants {
        let n = self.dim;
        let mut l1 = 0.0;
        let mut entry2 = vec![0.0; n * n];
        let mut entry3 = vec![0.0; n * n];
        for (i, m) in self.monomials() {
            let sup = m.coeff.abs_sup(t_lo, t_hi);
            if sup == 0.0 {
                continue;
            }
            let deg = m.degree() as i32;
            l1 += if deg >= 1 {
                sup * radius.powi(deg - 1)
            } else {
                f64::INFINITY
            };
            for j in 0..n {
                let d = m.exponents[j];
                if d == 0 {
                    continue;
                }
                entry2[i * n + j] += sup * d as f64 * radius.powi(deg - 1);
                entry3[i * n + j] += if deg >= 2 {
                    sup * d as f64 * radius.powi(deg - 2)
                } else {
                    f64::INFINITY
                };
            }
        }
        let frob = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        LipschitzConstants {
            l1,
            l2: frob(&entry2),
            l3: frob(&entry3),
        }
    }

    /// Dense deterministic sampling of the same three quantities; a lower
    /// estimate used to cross-check the analytic constants.
    pub fn sampled_lipschitz(&self, radius: f64, t_lo: f64, t_hi: f64) -> LipschitzConstants {
        let n = self.dim;
        let times: Vec<f64> = if t_hi > t_lo {
            (0..=64).map(|i| t_lo + (t_hi - t_lo) * i as f64 / 64.0).collect()
        } else {
            vec![t_lo]
        };
        let dirs = sample_directions(n, 256);
        let mut out = LipschitzConstants::default();
        let mut fx = vec![0.0; n];
        let mut x = vec![0.0; n];
        for &t in &times {
            for d in &dirs {
                for frac in [0.5, 1.0] {
                    let r = radius * frac;
                    x.iter_mut().zip(d).for_each(|(xi, di)| *xi = r * di);
                    self.eval_into(t, &x, &mut fx);
                    let fnorm = norm2(&fx);
                    out.l1 = out.l1.max(fnorm / r);
                    let jn = spectral_norm(&self.jacobian(t, &x));
                    out.l2 = out.l2.max(jn);
                    out.l3 = out.l3.max(jn / r);
                }
            }
        }
        out
    }
}

/// Constants with `‖f(t,x)‖ ≤ l1‖x‖`, `‖f(t,a) − f(t,b)‖ ≤ l2‖a − b‖` and
/// `‖f′(t,x)‖ ≤ l3‖x‖` on a ball.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct ShiftTerm {
    monomial: usize,
    multiplier: f64,
    u_exp: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
struct ShiftGroup {
    z_exp: Vec<u32>,
    z_degree: u32,
    terms: Vec<ShiftTerm>,
}

/// Symbolic expansion of `f(t, z + u)`: per component, a list of
/// `z`-monomials whose coefficients are polynomials in `u` with
/// time-dependent factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedField {
    dim: usize,
    field: PolyVectorField,
    components: Vec<Vec<ShiftGroup>>,
}

impl ShiftedField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(z exponents, [(multiplier, u exponents)])` per component, for
    /// inspection; the multiplier excludes the time coefficient.
    pub fn groups(&self, component: usize) -> Vec<(Vec<u32>, Vec<(f64, Vec<u32>)>)> {
        self.components[component]
            .iter()
            .map(|g| {
                (
                    g.z_exp.clone(),
                    g.terms.iter().map(|t| (t.multiplier, t.u_exp.clone())).collect(),
                )
            })
            .collect()
    }

    /// Numeric polynomial in `z` at fixed `t` and reference `u`.
    pub fn evaluate(&self, t: f64, u: &[f64]) -> ZPolynomial {
        let coeffs = self.field.coeffs_at(t);
        self.evaluate_with(&coeffs, u)
    }

    /// As [`Self::evaluate`] with precomputed monomial coefficients
    /// (see [`PolyVectorField::coeffs_at`]).
    pub fn evaluate_with(&self, coeffs: &[Vec<f64>], u: &[f64]) -> ZPolynomial {
        let components = self
            .components
            .iter()
            .zip(coeffs)
            .map(|(groups, zeta)| {
                groups
                    .iter()
                    .map(|g| {
                        let c = g
                            .terms
                            .iter()
                            .map(|term| {
                                let mut v = zeta[term.monomial] * term.multiplier;
                                for (e, ui) in term.u_exp.iter().zip(u) {
                                    if *e > 0 {
                                        v *= ui.powi(*e as i32);
                                    }
                                }
                                v
                            })
                            .sum();
                        ZTerm {
                            z_exp: g.z_exp.clone(),
                            degree: g.z_degree,
                            coeff: c,
                        }
                    })
                    .collect()
            })
            .collect();
        ZPolynomial {
            dim: self.dim,
            components,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZTerm {
    pub z_exp: Vec<u32>,
    pub degree: u32,
    pub coeff: f64,
}

/// Vector polynomial in `z` with numeric coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ZPolynomial {
    dim: usize,
    components: Vec<Vec<ZTerm>>,
}

impl ZPolynomial {
    /// A `z`-free polynomial equal to the given vector.
    pub fn constant(values: &[f64]) -> Self {
        let dim = values.len();
        ZPolynomial {
            dim,
            components: values
                .iter()
                .map(|&v| {
                    vec![ZTerm {
                        z_exp: vec![0; dim],
                        degree: 0,
                        coeff: v,
                    }]
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self, component: usize) -> &[ZTerm] {
        &self.components[component]
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.eval_min_degree(z, 0)
    }

    /// Sum of the terms with `z`-degree at least `min_degree`.
    pub fn eval_min_degree(&self, z: &[f64], min_degree: u32) -> Vec<f64> {
        self.components
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .filter(|t| t.degree >= min_degree)
                    .map(|t| {
                        t.coeff
                            * t.z_exp
                                .iter()
                                .zip(z)
                                .filter(|(e, _)| **e > 0)
                                .map(|(e, zi)| zi.powi(*e as i32))
                                .product::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    /// Replaces the `z`-free part with `values`.
    pub fn with_constant(mut self, values: &[f64]) -> Self {
        for (terms, &v) in self.components.iter_mut().zip(values) {
            match terms.iter_mut().find(|t| t.degree == 0) {
                Some(t) => t.coeff = v,
                None => terms.insert(
                    0,
                    ZTerm {
                        z_exp: vec![0; self.dim],
                        degree: 0,
                        coeff: v,
                    },
                ),
            }
        }
        self
    }

    /// Scalar majorant `q(s)` with `‖π(z)‖₂ ≤ q(‖z‖₂)` for every `z`.
    pub fn norm_bound(&self) -> NormBoundPolynomial {
        let max_deg = self.components.iter().flatten().map(|t| t.degree).max().unwrap_or(0);
        let mut coeffs = vec![0.0; max_deg as usize + 1];
        for t in self.components.iter().flatten() {
            coeffs[t.degree as usize] += t.coeff.abs();
        }
        NormBoundPolynomial::new(coeffs)
    }
}

/// `q(s) = Σ c_k s^k` with `c_k ≥ 0`. `γ = q(0)`, `D = c₁`, `Π(s) = q(s) − γ`
/// and `Π₋(s) = Σ_{k≥2} c_k s^k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormBoundPolynomial {
    coeffs: Vec<f64>,
}

impl NormBoundPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        debug_assert!(coeffs.iter().all(|c| *c >= 0.0));
        NormBoundPolynomial { coeffs }
    }

    /// Nonzero `(degree, coefficient)` pairs.
    pub fn terms(&self) -> Vec<(usize, f64)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| (k, *c))
            .collect()
    }

    pub fn coeff(&self, degree: usize) -> f64 {
        self.coeffs.get(degree).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    pub fn gamma(&self) -> f64 {
        self.coeff(0)
    }

    pub fn linear(&self) -> f64 {
        self.coeff(1)
    }

    pub fn pi(&self, s: f64) -> f64 {
        self.eval(s) - self.gamma()
    }

    pub fn pi_minus(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (_, c)| acc * s + c)
            * s
            * s
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.singular_values().max()
}

/// Deterministic unit vectors in `R^n` (Halton points mapped to the sphere;
/// uniform angles for `n = 2`, `±1` for `n = 1`).
fn sample_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
            (1..=count)
                .filter_map(|k| {
                    let v: Vec<f64> = (0..n)
                        .map(|j| 2.0 * radical_inverse(k as u32, PRIMES[j % PRIMES.len()]) - 1.0)
                        .collect();
                    let nv = norm2(&v);
                    (nv > 1e-9).then(|| v.iter().map(|x| x / nv).collect())
                })
                .collect()
        }
    }
}

fn radical_inverse(mut k: u32, base: u32) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(v: f64) -> TimeSignal {
        TimeSignal::constant(v)
    }

    /// f = [0, −α₂ x₂³]
    fn vdp(alpha2: f64) -> PolyVectorField {
        PolyVectorField::new(2, vec![vec![], vec![Monomial::new(c(-alpha2), vec![0, 3])]]).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(vdp(-100.0).eval(3.0, &[0.0, 1.0]), vec![0.0, 100.0]);
        assert_eq!(vdp(-100.0).eval(3.0, &[0.0, 0.0]), vec![0.0, 0.0]);
        let duffing = PolyVectorField::new(2, vec![vec![], vec![Monomial::new(c(10.0), vec![3, 0])]]).unwrap();
        assert_eq!(duffing.eval(0.0, &[2.0, 5.0]), vec![0.0, 80.0]);
    }

    #[test]
    fn jacobian_examples() {
        let f = vdp(-100.0);
        let y = 0.07;
        let j = f.jacobian(0.0, &[0.0, y]);
        assert_eq!(j[(1, 0)], 0.0);
        assert!((j[(1, 1)] - (-3.0 * -100.0 * y * y)).abs() < 1e-14);
        assert!(f.jacobian(1.0, &[0.0, 0.0]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shift_expand_cubic() {
        // −α₂(z + Y)³ = −α₂(z³ + 3Y z² + 3Y² z + Y³)
        let alpha2 = -100.0;
        let f = vdp(alpha2);
        let ex = f.shift_expand();
        let y22 = 0.3;
        let p = ex.evaluate(0.0, &[0.7, y22]);
        let mut by_deg = [0.0; 4];
        for t in p.terms(1) {
            assert_eq!(t.z_exp[0], 0);
            by_deg[t.degree as usize] += t.coeff;
        }
        let k = -alpha2;
        assert!((by_deg[0] - k * y22.powi(3)).abs() < 1e-14);
        assert!((by_deg[1] - k * 3.0 * y22 * y22).abs() < 1e-13);
        assert!((by_deg[2] - k * 3.0 * y22).abs() < 1e-13);
        assert!((by_deg[3] - k).abs() < 1e-13);
        assert!(p.terms(0).is_empty());
    }

    #[test]
    fn shift_by_zero_is_identity_and_binomial() {
        let f = PolyVectorField::new(1, vec![vec![Monomial::new(c(1.0), vec![2])]]).unwrap();
        let ex = f.shift_expand();
        let at0 = ex.evaluate(0.0, &[0.0]);
        assert_eq!(at0.eval(&[1.7]), f.eval(0.0, &[1.7]));
        let a = 0.4;
        let p = ex.evaluate(0.0, &[a]);
        let coeffs: Vec<(u32, f64)> = p.terms(0).iter().map(|t| (t.degree, t.coeff)).collect();
        assert_eq!(coeffs, vec![(0, a * a), (1, 2.0 * a), (2, 1.0)]);
    }

    #[test]
    fn norm_bound_for_cubic_damping() {
        // π₂ = −α₂(3Y²z + 3Yz² + z³ + (3y₂₁ + y₂₂)y₂₂²)
        let alpha2 = -100.0;
        let f = vdp(alpha2);
        let (y21, y22) = (-0.05, 0.02);
        let big_y = y21 + y22;
        let ex = f.shift_expand();
        let tail = ex.evaluate(0.0, &[0.0, y21]).eval_min_degree(&[0.0, y22], 2);
        let pi = ex.evaluate(0.0, &[0.0, big_y]).with_constant(&tail);
        let q = pi.norm_bound();
        let k = alpha2.abs();
        let expected = [
            k * ((3.0 * y21 + y22) * y22 * y22).abs(),
            k * 3.0 * big_y * big_y,
            k * 3.0 * big_y.abs(),
            k,
        ];
        for (d, e) in expected.iter().enumerate() {
            assert!((q.coeff(d) - e).abs() <= 1e-12 * e.abs().max(1.0), "degree {d}");
        }
        assert_eq!(q.gamma(), q.coeff(0));
        assert_eq!(q.linear(), q.coeff(1));
    }

    #[test]
    fn z_free_polynomial_bound_is_constant() {
        let q = ZPolynomial::constant(&[3.0, -4.0]).norm_bound();
        assert_eq!(q.terms(), vec![(0, 7.0)]);
        assert_eq!(q.pi(10.0), 0.0);
    }

    #[test]
    fn norm_majorant_mixed_monomials() {
        let f = PolyVectorField::new(
            2,
            vec![
                vec![Monomial::new(c(-2.0), vec![2, 1])],
                vec![Monomial::new(c(0.5), vec![1, 1])],
            ],
        )
        .unwrap();
        assert_eq!(f.norm_majorant(0.0).terms(), vec![(2, 0.5), (3, 2.0)]);
    }

    #[test]
    fn lipschitz_examples() {
        let f = vdp(-100.0);
        let l = f.lipschitz_constants(0.1, 0.0, 10.0).unwrap();
        let oracle = f.sampled_lipschitz(0.1, 0.0, 10.0);
        assert!((oracle.l2 - 3.0).abs() < 1e-9);
        assert!(l.l2 >= oracle.l2);
        assert!((l.l2 - 3.0).abs() < 1e-12);
        assert!((l.l1 - 1.0).abs() < 1e-12);
        assert!((l.l3 - 30.0).abs() < 1e-12);

        let tiny = f.lipschitz_constants(1e-8, 0.0, 1.0).unwrap();
        assert!(tiny.l1 < 1e-12 && tiny.l2 < 1e-12 && tiny.l3 < 1e-5);
        assert_eq!(
            PolyVectorField::zero(3).lipschitz_constants(1.0, 0.0, 1.0).unwrap(),
            LipschitzConstants::default()
        );
        assert!(f.lipschitz_constants(0.0, 0.0, 1.0).is_err());
        assert!(f.lipschitz_constants(-1.0, 0.0, 1.0).is_err());
    }

    fn field_strategy() -> impl Strategy<Value = PolyVectorField> {
        (1usize..=4).prop_flat_map(|n| {
            let mono = (
                -3.0..3.0f64,
                prop::collection::vec(0u32..=2, n),
                prop_oneof![Just(0.0), 0.5..5.0f64],
            )
                .prop_map(|(a, e, w)| {
                    let coeff = if w == 0.0 {
                        TimeSignal::constant(a)
                    } else {
                        TimeSignal::Sum(vec![TimeSignal::constant(a), TimeSignal::sin(1.0, w, 0.3)])
                    };
                    Monomial::new(coeff, e)
                })
                .prop_filter("degree at most 4", |m| m.degree() <= 4);
            prop::collection::vec(prop::collection::vec(mono, 0..4), n)
                .prop_map(move |comps| PolyVectorField::new(n, comps).unwrap())
        })
    }

    fn vec_strategy(n: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-scale..scale, n)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn jacobian_matches_central_differences(
            (f, x) in field_strategy().prop_flat_map(|f| { let n = f.dim(); (Just(f), vec_strategy(n, 1.5)) }),
            t in 0.0..5.0f64,
        ) {
            let n = f.dim();
            let jac = f.jacobian(t, &x);
            let h = 1e-7;
            for j in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fp = f.eval(t, &xp);
                let fm = f.eval(t, &xm);
                for i in 0..n {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    prop_assert!((fd - jac[(i, j)]).abs() <= 1e-6 * (1.0 + jac[(i, j)].abs()),
                        "entry ({}, {}): fd {} vs exact {}", i, j, fd, jac[(i, j)]);
                }
            }
            let v: Vec<f64> = (0..n).map(|k| 0.3 - 0.2 * k as f64).collect();
            let mut jv = vec![0.0; n];
            f.jacobian_times(t, &x, &v, &mut jv);
            let dense = &jac * nalgebra::DVector::from_column_slice(&v);
            for i in 0..n {
                prop_assert!((jv[i] - dense[i]).abs() <= 1e-12 * (1.0 + dense[i].abs()));
            }
        }

        #[test]
        fn expansion_reproduces_shifted_field(
            (f, u, z) in field_strategy().prop_flat_map(|f| {
                let n = f.dim();
                (Just(f), vec_strategy(n, 2.0), vec_strategy(n, 2.0))
            }),
            t in 0.0..5.0f64,
        ) {
            let ex = f.shift_expand();
            let p = ex.evaluate(t, &u);
            let x: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a + b).collect();
            let direct = f.eval(t, &x);
            let via = p.eval(&z);
            let scale = f.monomials().map(|(_, m)| m.coeff.abs_sup(t, t)).sum::<f64>() * 64.0 + 1.0;
            for (a, b) in direct.iter().zip(&via) {
                prop_assert!((a - b).abs() <= 1e-10 * scale, "{} vs {}", a, b);
            }
        }

        #[test]
        fn norm_bound_sandwich(
            (f, u, z, s) in field_strategy().prop_flat_map(|f| {
                let n = f.dim();
                (Just(f), vec_strategy(n, 2.0), vec_strategy(n, 2.0), vec_strategy(n, 1.0))
            }),
            t in 0.0..5.0f64,
            scheme_a in any::<bool>(),
        ) {
            // π = f(z + u) − f(u − s) − [f′(u − s)s], with u = Y_m, s = y_m
            let n = f.dim();
            let ex = f.shift_expand();
            let prev: Vec<f64> = u.iter().zip(&s).map(|(a, b)| a - b).collect();
            let min_deg = if scheme_a { 2 } else { 1 };
            let constant = ex.evaluate(t, &prev).eval_min_degree(&s, min_deg);
            let pi = ex.evaluate(t, &u).with_constant(&constant);
            let q = pi.norm_bound();
            let x: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a + b).collect();
            let mut exact = f.eval(t, &x);
            let fp = f.eval(t, &prev);
            let mut js = vec![0.0; n];
            if scheme_a {
                f.jacobian_times(t, &prev, &s, &mut js);
            }
            for i in 0..n {
                exact[i] -= fp[i] + js[i];
            }
            prop_assert!(norm2(&exact) <= q.eval(norm2(&z)) * (1.0 + 1e-12) + 1e-12);
            // and the polynomial evaluated symbolically agrees with the direct residual
            let via = pi.eval(&z);
            for i in 0..n {
                prop_assert!((via[i] - exact[i]).abs() <= 1e-9 * (1.0 + exact[i].abs()));
            }
        }

        #[test]
        fn analytic_constants_dominate_samples(f in field_strategy(), r in 0.05..2.0f64) {
            let a = f.analytic_lipschitz(r, 0.0, 3.0);
            let s = f.sampled_lipschitz(r, 0.0, 3.0);
            if f.min_degree().unwrap_or(2) >= 2 {
                prop_assert!(a.l1 * (1.0 + 1e-12) >= s.l1);
                prop_assert!(a.l3 * (1.0 + 1e-12) >= s.l3);
            }
            if f.min_degree().unwrap_or(1) >= 1 {
                prop_assert!(a.l2 * (1.0 + 1e-12) >= s.l2);
            }
        }
    }
}
