//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Composite Simpson rule on [a, b] with n (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// K₁(x) = ∫₀^∞ e^{−x cosh u} cosh u du (trapezoid, doubly exponential decay).
pub fn bessel_k1(x: f64) -> f64 {
    let h = 1e-3;
    let mut s = 0.5 * (-x).exp();
    let mut u: f64 = h;
    loop {
        let c = u.cosh();
        let v = (-x * c).exp() * c;
        s += v;
        if v < 1e-30 {
            break;
        }
        u += h;
    }
    s * h
}

/// J₁(x) = (1/π) ∫₀^π cos(τ − x sin τ) dτ.
pub fn bessel_j1(x: f64) -> f64 {
    simpson(|t| (t - x * t.sin()).cos(), 0.0, PI, 20000) / PI
}

/// Y₁(x) = (1/π) ∫₀^π sin(x sin τ − τ) dτ − (1/π) ∫₀^∞ 2 sinh(u) e^{−x sinh u} du.
pub fn bessel_y1(x: f64) -> f64 {
    let a = simpson(|t| (x * t.sin() - t).sin(), 0.0, PI, 20000) / PI;
    let b = simpson(|u| 2.0 * u.sinh() * (-x * u.sinh()).exp(), 0.0, 12.0, 200000) / PI;
    a - b
}

/// Vacuum two-point function at equal times, m K₁(m r)/(4π² r).
pub fn vacuum_equal_time(m: f64, r: f64) -> f64 {
    m * bessel_k1(m * r) / (4.0 * PI * PI * r)
}

/// t^{3/2}|ω₂^∞(t, 0)| at large t: √(2m)/(8π^{3/2}).
pub fn vacuum_envelope_limit(m: f64) -> f64 {
    (2.0 * m).sqrt() / (8.0 * PI.powf(1.5))
}

/// Analytic signal of O(T) at r = 0 for the sharp quench, with the ω₁ contour
/// turned to m₁ + is so that the integrand decays like e^{−sT}.
pub fn quench_o_rotated(m: f64, dm: f64, t: f64) -> num_complex::Complex64 {
    use num_complex::Complex64 as C;
    let m1 = (m * m + dm).sqrt();
    let g = |w: C| (w * w - m1 * m1).sqrt() * w / (w * w * (w * w - dm).sqrt());
    // s = u² removes the square-root endpoint
    let f = |u: f64| g(C::new(m1, u * u)) * (2.0 * u * (-u * u * t).exp());
    let top = (60.0 / t).sqrt();
    let re = simpson(|u| f(u).re, 0.0, top, 20000);
    let im = simpson(|u| f(u).im, 0.0, top, 20000);
    C::i() * C::new(0.0, m1 * t).exp() * C::new(re, im) * (dm / (4.0 * PI * PI))
}
