//! Klein-Gordon field whose mass is switched from m² to m² + δm².
//!
//! Modes are integrated through the switch and projected on the
//! post-quench plane waves. For the sharp quench the non-stationary part O of
//! the two-point function and its expansion in δm² are evaluated as radial
//! oscillatory integrals. Everything that oscillates is also available as an
//! analytic signal (cos ω₁T → e^{iω₁T}) whose modulus is the envelope.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{fit_growth_exponent, integrate_radial_oscillatory, Decay, GrowthFit, RadialIntegrand};
use crate::switching::SwitchFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassQuench {
    pub m: f64,
    pub delta_m2: f64,
    pub switch: SwitchFunction,
}

impl MassQuench {
    pub fn new(m: f64, delta_m2: f64, switch: SwitchFunction) -> Result<Self> {
        check_masses(m, delta_m2)?;
        Ok(Self { m, delta_m2, switch })
    }

    pub fn sharp(m: f64, delta_m2: f64) -> Result<Self> {
        Self::new(m, delta_m2, SwitchFunction::sharp())
    }

    pub fn final_mass(&self) -> f64 {
        (self.m * self.m + self.delta_m2).sqrt()
    }
}

fn check_masses(m: f64, delta_m2: f64) -> Result<()> {
    if !(m > 0.0) || !(m * m + delta_m2 > 0.0) {
        return Err(Error::InvalidMass(format!("m = {m}, m² + δm² = {}", m * m + delta_m2)));
    }
    Ok(())
}

/// Coefficients of ξ_p = (α e^{−iω₁t} + β e^{iω₁t}) / √(2ω₁) after the switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BogoliubovPair {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub p: f64,
}

impl BogoliubovPair {
    /// |α|² − |β|², equal to 1 for a properly normalised mode.
    pub fn norm_defect(&self) -> f64 {
        self.alpha.norm_sqr() - self.beta.norm_sqr() - 1.0
    }
}

/// Closed-form coefficients for the instantaneous quench.
pub fn bogoliubov_step(p: f64, m: f64, delta_m2: f64) -> Result<BogoliubovPair> {
    check_masses(m, delta_m2)?;
    let w0 = (p * p + m * m).sqrt();
    let w1 = (p * p + m * m + delta_m2).sqrt();
    let (a, b) = ((w1 / w0).sqrt(), (w0 / w1).sqrt());
    Ok(BogoliubovPair { alpha: Complex64::new(0.5 * (a + b), 0.0), beta: Complex64::new(0.5 * (a - b), 0.0), p })
}

type State = [Complex64; 2];

// Dormand-Prince 5(4) tableau
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

const MAX_STEPS: usize = 2_000_000;

/// Integrates ξ̈ = −k(t) ξ from t0 to t1.
fn dopri5(k: &dyn Fn(f64) -> f64, mut y: State, t0: f64, t1: f64, tol: f64) -> Result<State> {
    let rhs = |t: f64, y: &State| -> State { [y[1], -k(t) * y[0]] };
    let mut t = t0;
    let mut h = ((t1 - t0) / 100.0).min(0.1 / k(t0).abs().sqrt().max(1.0));
    let mut steps = 0;
    while t < t1 {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::NonConvergent(format!("mode ODE exceeded {MAX_STEPS} steps")));
        }
        h = h.min(t1 - t);
        let mut ks = [[Complex64::new(0.0, 0.0); 2]; 7];
        for s in 0..7 {
            let mut ys = y;
            for (j, kj) in ks.iter().enumerate().take(s) {
                ys[0] += kj[0] * (h * A[s][j]);
                ys[1] += kj[1] * (h * A[s][j]);
            }
            ks[s] = rhs(t + C[s] * h, &ys);
        }
        let mut y5 = y;
        let mut err = 0.0f64;
        for c in 0..2 {
            let mut d = Complex64::new(0.0, 0.0);
            for s in 0..7 {
                y5[c] += ks[s][c] * (h * B5[s]);
                d += ks[s][c] * (h * (B5[s] - B4[s]));
            }
            let sc = tol * (1.0 + y[c].norm().max(y5[c].norm()));
            err = err.max(d.norm() / sc);
        }
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        if !err.is_finite() {
            return Err(Error::NonConvergent("mode ODE produced a non-finite state".into()));
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h < 1e-14 * (t1 - t0).abs().max(1.0) {
            return Err(Error::NonConvergent(format!("mode ODE step collapsed at t = {t}")));
        }
    }
    Ok(y)
}

/// Integrates the mode through the switch and projects it at `t_end`.
pub fn solve_mode(q: &MassQuench, p: f64, t_end: f64, rel_tol: f64) -> Result<BogoliubovPair> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    if !(rel_tol > 0.0 && rel_tol < 1e-2) {
        return Err(Error::InvalidTolerance(rel_tol));
    }
    let w0 = (p * p + q.m * q.m).sqrt();
    let w1 = (p * p + q.m * q.m + q.delta_m2).sqrt();
    let k = |t: f64| w0 * w0 + q.delta_m2 * q.switch.chi(t);
    let mut tol = rel_tol * 1e-2;
    for _ in 0..3 {
        let start = if q.switch.is_sharp() { 0.0 } else { -2.0 * q.switch.epsilon };
        let ph = Complex64::new(0.0, -w0 * start).exp() / (2.0 * w0).sqrt();
        let mut y = [ph, Complex64::new(0.0, -w0) * ph];
        let mut knots = vec![start];
        if !q.switch.is_sharp() {
            knots.push(-q.switch.epsilon);
            if -q.switch.epsilon < 0.0 {
                knots.push(0.0);
            }
        }
        knots.push(t_end);
        for w in knots.windows(2) {
            y = dopri5(&k, y, w[0], w[1], tol)?;
        }
        // Im(ξ̄ ξ̇) = −1/2 for all t
        let drift = ((y[0].conj() * y[1]).im + 0.5).abs() * 2.0;
        let rot = Complex64::new(0.0, w1 * t_end).exp();
        let s = (0.5 * w1).sqrt();
        let iv = Complex64::new(0.0, 1.0 / w1) * y[1];
        let pair = BogoliubovPair { alpha: rot * s * (y[0] + iv), beta: rot.conj() * s * (y[0] - iv), p };
        if drift <= rel_tol.max(1e-13) {
            return Ok(pair);
        }
        tol *= 1e-2;
    }
    Err(Error::NonConvergent(format!("Wronskian drift exceeds {rel_tol} at p = {p}")))
}

const INV_4PI2: f64 = 0.025_330_295_910_584_444; // 1/(4π²)

/// Analytic signal of O at t_x + t_y = T and |x − y| = r, sharp quench.
pub fn oscillating_term_analytic(t_sum: f64, q: &MassQuench, r: f64, rel_tol: f64) -> Result<Complex64> {
    if !q.switch.is_sharp() {
        return Err(Error::InvalidArgument("the closed form of O needs a sharp quench".into()));
    }
    if !(t_sum > 0.0) {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t_sum}")));
    }
    if q.delta_m2 == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (m, d) = (q.m, q.delta_m2);
    let amp = move |p: f64| {
        let w0 = (p * p + m * m).sqrt();
        Complex64::new(1.0 / ((p * p + m * m + d) * w0), 0.0)
    };
    let g = RadialIntegrand::new(&amp, q.final_mass(), t_sum).sign(1).decay(Decay::Abel);
    let v = integrate_radial_oscillatory(&g, r, rel_tol)?;
    Ok(v.value * (d * INV_4PI2))
}

/// O(T, r): the part of the two-point function depending on t_x + t_y.
pub fn oscillating_term_o(t_sum: f64, q: &MassQuench, r: f64, rel_tol: f64) -> Result<f64> {
    Ok(oscillating_term_analytic(t_sum, q, r, rel_tol)?.re)
}

/// Terms c ω^a T^b of (1/n!) dⁿ/d(δm²)ⁿ [e^{iωT}/ω²] at δm² = 0, with ω² = ω₀² + δm².
fn order_monomials(n: u32) -> Vec<(i32, u32, Complex64)> {
    let mut terms: BTreeMap<(i32, u32), Complex64> = BTreeMap::new();
    terms.insert((-2, 0), Complex64::new(1.0, 0.0));
    for _ in 0..n {
        let mut next: BTreeMap<(i32, u32), Complex64> = BTreeMap::new();
        // d/dδ = (1/2ω) d/dω
        for (&(a, b), &c) in &terms {
            if a != 0 {
                *next.entry((a - 2, b)).or_default() += c * (0.5 * a as f64);
            }
            *next.entry((a - 1, b + 1)).or_default() += c * Complex64::new(0.0, 0.5);
        }
        terms = next;
    }
    let fact: f64 = (1..=n).map(f64::from).product();
    terms.into_iter().map(|((a, b), c)| (a, b, c / fact)).collect()
}

/// Analytic signal of the order-(δm²)^{n+1} term of O at r = 0.
pub fn perturbative_order_analytic(n: u32, t_sum: f64, m: f64, delta_m2: f64, rel_tol: f64) -> Result<Complex64> {
    perturbative_order_analytic_at(n, t_sum, 0.0, m, delta_m2, rel_tol)
}

pub fn perturbative_order_analytic_at(
    n: u32,
    t_sum: f64,
    r: f64,
    m: f64,
    delta_m2: f64,
    rel_tol: f64,
) -> Result<Complex64> {
    if n > 5 {
        return Err(Error::InvalidArgument(format!("order {n} is above the supported maximum 5")));
    }
    check_masses(m, delta_m2)?;
    if !(t_sum > 0.0) {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t_sum}")));
    }
    let terms: Vec<(i32, f64, Complex64)> =
        order_monomials(n).into_iter().map(|(a, b, c)| (a - 1, t_sum.powi(b as i32), c)).collect();
    let amp = |p: f64| {
        let w0 = (p * p + m * m).sqrt();
        terms.iter().map(|&(a, tb, c)| c * (tb * w0.powi(a))).sum::<Complex64>()
    };
    let g = RadialIntegrand::new(&amp, m, t_sum).sign(1).decay(Decay::Abel);
    let v = integrate_radial_oscillatory(&g, r, rel_tol)?;
    Ok(v.value * (delta_m2.powi(n as i32 + 1) * INV_4PI2))
}

/// O_n(T): the term of order (δm²)^{n+1} in the expansion of O, at r = 0.
pub fn perturbative_order_term(n: u32, t_sum: f64, m: f64, delta_m2: f64, rel_tol: f64) -> Result<f64> {
    Ok(perturbative_order_analytic(n, t_sum, m, delta_m2, rel_tol)?.re)
}

/// Central finite-difference weights for the n-th derivative on nodes −k..k.
fn central_weights(n: usize, k: usize) -> Vec<f64> {
    // Fornberg's recursion at x₀ = 0
    let xs: Vec<f64> = (0..=2 * k).map(|j| j as f64 - k as f64).collect();
    let np = xs.len();
    let mut c = vec![vec![0.0; n + 1]; np];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    for i in 1..np {
        let mut c2 = 1.0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            for l in (0..=n.min(i)).rev() {
                let prev = if l > 0 { c[i - 1][l - 1] } else { 0.0 };
                if j == i - 1 {
                    c[i][l] = c1 * (l as f64 * prev - xs[i - 1] * c[i - 1][l]) / c2;
                }
                let cjl1 = if l > 0 { c[j][l - 1] } else { 0.0 };
                c[j][l] = (xs[i] * c[j][l] - l as f64 * cjl1) / c3;
            }
        }
        c1 = c2;
    }
    c.iter().map(|row| row[n]).collect()
}

/// O_n from divided differences of the exact O in δm², nodes spaced 0.05 m².
///
/// Only usable while the phase shift T·h/(2m) across the stencil stays small.
pub fn perturbative_order_term_stencil(n: u32, t_sum: f64, m: f64, delta_m2: f64, rel_tol: f64) -> Result<f64> {
    let h = 0.05 * m * m;
    let spread = t_sum * h * n.max(1) as f64 / (2.0 * m);
    if spread > 0.5 {
        return Err(Error::StencilIllConditioned(format!(
            "phase spread {spread:.3} across the δm² stencil at T = {t_sum}"
        )));
    }
    let n_us = n as usize;
    let k = n_us.max(1);
    // F(δ) = O(T; δ)/δ, finite at δ = 0
    let f = |d: f64| -> Result<f64> {
        check_masses(m, d)?;
        let amp = move |p: f64| {
            let w0 = (p * p + m * m).sqrt();
            Complex64::new(1.0 / ((p * p + m * m + d) * w0), 0.0)
        };
        let g = RadialIntegrand::new(&amp, (m * m + d).sqrt(), t_sum).sign(1).decay(Decay::Abel);
        Ok(integrate_radial_oscillatory(&g, 0.0, rel_tol)?.value.re * INV_4PI2)
    };
    let deriv = |step: f64| -> Result<f64> {
        let w = central_weights(n_us, k);
        let mut acc = 0.0;
        for (j, wj) in w.iter().enumerate() {
            acc += wj * f((j as f64 - k as f64) * step)?;
        }
        Ok(acc / step.powi(n as i32))
    };
    let d = if n == 0 { f(0.0)? } else { (4.0 * deriv(0.5 * h)? - deriv(h)?) / 3.0 };
    let fact: f64 = (1..=n).map(f64::from).product();
    Ok(d / fact * delta_m2.powi(n as i32 + 1))
}

/// Envelope |Ô_n(T)| over a grid, evaluated in parallel.
pub fn order_envelope_scan(
    n: u32,
    grid: &[f64],
    m: f64,
    delta_m2: f64,
    rel_tol: f64,
) -> Result<Vec<(f64, Complex64)>> {
    grid.par_iter()
        .map(|&t| Ok((t, perturbative_order_analytic(n, t, m, delta_m2, rel_tol)?)))
        .collect()
}

/// Fitted exponent of the O_n envelope over `window`.
pub fn order_growth_fit(n: u32, grid: &[f64], m: f64, delta_m2: f64, rel_tol: f64) -> Result<GrowthFit> {
    let scan = order_envelope_scan(n, grid, m, delta_m2, rel_tol)?;
    let samples: Vec<(f64, f64)> = scan.iter().map(|&(t, v)| (t, v.norm())).collect();
    let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().cloned().fold(0.0, f64::max);
    fit_growth_exponent(&samples, (lo, hi))
}

/// n log-spaced points covering [a, b].
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![a];
    }
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}
