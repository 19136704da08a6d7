//! Oscillatory radial quadrature, regularized half-line moments, principal
//! values and power-law fits.
//!
//! The workhorse is a globally adaptive 7/15 point Gauss-Kronrod rule acting on
//! complex-valued integrands. Half-line integrals are summed panel by panel,
//! each panel spanning roughly one period of the dominant oscillation.

use std::cell::Cell;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SUBINTERVALS: usize = 2000;
const MAX_PANELS: usize = 400_000;

/// Value of an integral together with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: Complex<T>,
    pub error: T,
}

impl<T: Real> Estimate<T> {
    pub fn zero() -> Self {
        Self { value: Complex::new(T::zero(), T::zero()), error: T::zero() }
    }

    pub fn scale(self, c: Complex<T>) -> Self {
        Self { value: self.value * c, error: self.error * c.norm() }
    }
}

impl<T: Real> std::ops::Add for Estimate<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { value: self.value + o.value, error: self.error + o.error }
    }
}

fn gk15<T: Real, F: FnMut(T) -> Complex<T>>(f: &mut F, a: T, b: T) -> (Complex<T>, T, T) {
    let half = (b - a) * T::c(0.5);
    let mid = a + half;
    let fc = f(mid);
    let mut kronrod = fc * T::c(WGK[7]);
    let mut gauss = fc * T::c(WG[3]);
    let mut abs_sum = fc.norm() * T::c(WGK[7]);
    for j in 0..7 {
        let dx = half * T::c(XGK[j]);
        let f1 = f(mid - dx);
        let f2 = f(mid + dx);
        kronrod = kronrod + (f1 + f2) * T::c(WGK[j]);
        abs_sum = abs_sum + (f1.norm() + f2.norm()) * T::c(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + (f1 + f2) * T::c(WG[j / 2]);
        }
    }
    let value = kronrod * half;
    let raw = ((kronrod - gauss) * half).norm();
    let abs_int = abs_sum * half.abs();
    // QUADPACK-style sharpening of the raw Gauss/Kronrod difference.
    let mut err = raw;
    if abs_int > T::zero() && raw > T::zero() {
        let ratio = (T::c(200.0) * raw / abs_int).powf(T::c(1.5));
        err = abs_int * ratio.min(T::one());
    }
    let floor = T::c(50.0) * T::epsilon() * abs_int;
    (value, err.max(floor), abs_int)
}

/// Globally adaptive Gauss-Kronrod integration of a complex integrand on [a, b].
pub fn integrate_adaptive<T, F>(mut f: F, a: T, b: T, abs_tol: T, rel_tol: T) -> Result<Estimate<T>>
where
    T: Real,
    F: FnMut(T) -> Complex<T>,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("bounds [{a:?}, {b:?}] must be finite")));
    }
    if a == b {
        return Ok(Estimate::zero());
    }
    let floor_of = |abs_int: T| T::c(50.0) * T::epsilon() * abs_int;
    let (v, e, ai) = gk15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e, floor_of(ai))];
    let mut total = v;
    let mut total_err = e;
    let mut total_floor = floor_of(ai);
    loop {
        let target = abs_tol.max(rel_tol * total.norm());
        // stop when converged or when every part sits at its roundoff floor
        if total_err <= target || total_err <= T::c(1.01) * total_floor {
            break;
        }
        if !total_err.is_finite() {
            return Err(Error::NonConvergent(format!("non-finite integrand on [{a:?}, {b:?}]")));
        }
        if parts.len() >= MAX_SUBINTERVALS {
            return Err(Error::NonConvergent(format!(
                "{} subintervals on [{:?}, {:?}], error {:?} > {:?}",
                parts.len(),
                a,
                b,
                total_err,
                target
            )));
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (lo, hi, pv, pe, pf) = parts.swap_remove(idx);
        let mid = (lo + hi) * T::c(0.5);
        if mid <= lo || mid >= hi {
            // interval exhausted at machine resolution
            parts.push((lo, hi, pv, pf, pf));
            total_err = total_err - pe + pf;
            continue;
        }
        let (v1, e1, a1) = gk15(&mut f, lo, mid);
        let (v2, e2, a2) = gk15(&mut f, mid, hi);
        let (f1, f2) = (floor_of(a1), floor_of(a2));
        total = total - pv + v1 + v2;
        total_err = total_err - pe + e1 + e2;
        total_floor = total_floor - pf + f1 + f2;
        parts.push((lo, mid, v1, e1, f1));
        parts.push((mid, hi, v2, e2, f2));
    }
    // re-sum to shed accumulated rounding from the running updates
    let value = parts.iter().fold(Complex::new(T::zero(), T::zero()), |s, p| s + p.2);
    let error = parts.iter().fold(T::zero(), |s, p| s + p.3);
    Ok(Estimate { value, error })
}

/// Real-valued convenience wrapper around [`integrate_adaptive`].
pub fn integrate_real<T, F>(mut f: F, a: T, b: T, abs_tol: T, rel_tol: T) -> Result<(T, T)>
where
    T: Real,
    F: FnMut(T) -> T,
{
    let est = integrate_adaptive(|x| Complex::new(f(x), T::zero()), a, b, abs_tol, rel_tol)?;
    Ok((est.value.re, est.error))
}

/// Sum of panel integrals over [start, ∞).
///
/// Panels have width `panel`. Summation stops once three consecutive panels
/// have a peak modulus below `rel_tol * peak` and `min_extent` has been passed.
pub fn integrate_halfline<T, F>(
    f: F,
    start: T,
    panel: T,
    min_extent: T,
    rel_tol: T,
) -> Result<Estimate<T>>
where
    T: Real,
    F: Fn(T) -> Complex<T>,
{
    let peak = Cell::new(T::zero());
    let local = Cell::new(T::zero());
    let tracked = |x: T| {
        let v = f(x);
        let n = v.norm();
        if n > local.get() {
            local.set(n);
        }
        v
    };
    let mut acc = Estimate::zero();
    let mut quiet = 0usize;
    let mut a = start;
    for _ in 0..MAX_PANELS {
        let b = a + panel;
        local.set(T::zero());
        let abs_tol = rel_tol * T::c(1e-3) * peak.get() * panel;
        let est = integrate_adaptive(tracked, a, b, abs_tol, rel_tol * T::c(1e-2))?;
        acc = acc + est;
        if local.get() > peak.get() {
            peak.set(local.get());
        }
        if !(peak.get() > T::zero()) || local.get() < rel_tol * T::c(1e-2) * peak.get() {
            quiet += 1;
        } else {
            quiet = 0;
        }
        a = b;
        if quiet >= 3 && a - start >= min_extent {
            acc.error = acc.error + local.get() * panel;
            return Ok(acc);
        }
    }
    Err(Error::NonConvergent(format!("half-line sum exceeded {MAX_PANELS} panels")))
}

/// Angular kernel left after integrating a plane wave over directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadialKernel {
    /// sin(x)/x, from ∫dΩ e^{ip·r}.
    Sinc,
    /// (x cos x − sin x)/x², from the component of ∫dΩ p̂ e^{ip·r} along r̂ (times −i).
    DSinc,
}

impl RadialKernel {
    pub fn eval<T: Real>(self, x: T) -> T {
        match self {
            RadialKernel::Sinc => sinc(x),
            RadialKernel::DSinc => dsinc(x),
        }
    }
}

pub fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::c(1e-4) {
        let x2 = x * x;
        T::one() - x2 / T::c(6.0) + x2 * x2 / T::c(120.0)
    } else {
        x.sin() / x
    }
}

pub fn dsinc<T: Real>(x: T) -> T {
    if x.abs() < T::c(1e-3) {
        let x2 = x * x;
        -x / T::c(3.0) + x * x2 / T::c(30.0) - x * x2 * x2 / T::c(840.0)
    } else {
        (x * x.cos() - x.sin()) / (x * x)
    }
}

/// How the amplitude behaves at large momentum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decay {
    /// Absolutely integrable against p².
    Rapid,
    /// Bounded or polynomially growing; summed in the Abel sense with an
    /// e^{−δω} regulator that is extrapolated to δ → 0.
    Abel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialMethod {
    Auto,
    Direct,
    WSubstitution,
}

/// ∫₀^∞ dp p² a(p) K(p r) e^{iσ ω_p t} with ω_p = √(p² + m²).
pub struct RadialIntegrand<'a, T> {
    pub amplitude: &'a (dyn Fn(T) -> Complex<T> + Sync + 'a),
    pub phase_sign: i32,
    pub mass: T,
    pub time: T,
    pub kernel: RadialKernel,
    pub decay: Decay,
    /// Momentum scale over which the amplitude varies.
    pub scale: T,
}

impl<'a, T: Real> RadialIntegrand<'a, T> {
    pub fn new(amplitude: &'a (dyn Fn(T) -> Complex<T> + Sync + 'a), mass: T, time: T) -> Self {
        Self {
            amplitude,
            phase_sign: 1,
            mass,
            time,
            kernel: RadialKernel::Sinc,
            decay: Decay::Rapid,
            scale: T::one(),
        }
    }

    pub fn sign(mut self, s: i32) -> Self {
        self.phase_sign = s;
        self
    }

    pub fn kernel(mut self, k: RadialKernel) -> Self {
        self.kernel = k;
        self
    }

    pub fn decay(mut self, d: Decay) -> Self {
        self.decay = d;
        self
    }

    pub fn scale(mut self, s: T) -> Self {
        self.scale = s;
        self
    }
}

fn check_tol<T: Real>(rel_tol: T) -> Result<()> {
    let r = rel_tol.as_f64();
    if !(r > 1e-14 && r < 1e-2) {
        return Err(Error::InvalidTolerance(r));
    }
    Ok(())
}

pub fn integrate_radial_oscillatory<T: Real>(
    integrand: &RadialIntegrand<'_, T>,
    sinc_radius: T,
    rel_tol: T,
) -> Result<Estimate<T>> {
    integrate_radial_with(integrand, sinc_radius, rel_tol, RadialMethod::Auto)
}

pub fn integrate_radial_with<T: Real>(
    integrand: &RadialIntegrand<'_, T>,
    r: T,
    rel_tol: T,
    method: RadialMethod,
) -> Result<Estimate<T>> {
    check_tol(rel_tol)?;
    if integrand.phase_sign.abs() != 1 {
        return Err(Error::InvalidArgument("phase_sign must be +1 or -1".into()));
    }
    if !(integrand.mass > T::zero()) || integrand.time < T::zero() || r < T::zero() {
        return Err(Error::InvalidArgument("need m > 0, t >= 0, r >= 0".into()));
    }
    match integrand.decay {
        Decay::Rapid => {
            let use_w = match method {
                RadialMethod::Auto => integrand.time >= T::one(),
                RadialMethod::Direct => false,
                RadialMethod::WSubstitution => true,
            };
            if use_w && integrand.time > T::zero() {
                radial_w(integrand, r, rel_tol, T::zero())
            } else {
                radial_direct(integrand, r, rel_tol, T::zero())
            }
        }
        Decay::Abel => radial_abel(integrand, r, rel_tol),
    }
}

fn radial_direct<T: Real>(g: &RadialIntegrand<'_, T>, r: T, rel_tol: T, delta: T) -> Result<Estimate<T>> {
    let m = g.mass;
    let t = g.time;
    let sig = T::from_i32(g.phase_sign).unwrap();
    let freq = t + r;
    let mut panel = g.scale;
    if freq > T::zero() {
        panel = panel.min(T::c(2.0) * T::PI() / freq);
    }
    let mut extent = T::c(8.0) * g.scale;
    if delta > T::zero() {
        panel = panel.min(T::one() / delta);
        extent = extent.max(T::c(4.0) / delta);
    }
    let f = |p: T| {
        let w = (p * p + m * m).sqrt();
        let damp = if delta > T::zero() { (-delta * (w - m)).exp() } else { T::one() };
        let ph = Complex::new(T::zero(), sig * w * t).exp();
        (g.amplitude)(p) * ph * (p * p * g.kernel.eval(p * r) * damp)
    };
    integrate_halfline(f, T::zero(), panel, extent, rel_tol)
}

/// Substitution w = (ω − m) t, with the leading √w behaviour at w → 0
/// integrated in closed form.
fn radial_w<T: Real>(g: &RadialIntegrand<'_, T>, r: T, rel_tol: T, delta: T) -> Result<Estimate<T>> {
    let m = g.mass;
    let t = g.time;
    let sig = T::from_i32(g.phase_sign).unwrap();
    let two = T::c(2.0);
    // integrand in w: p ω a(p) K(p r) / t, behaving as c0 √w near 0
    let h = |w: T| -> Complex<T> {
        let u = w / t;
        let p = (u * (u + two * m)).sqrt();
        let om = u + m;
        let damp = if delta > T::zero() { (-delta * u).exp() } else { T::one() };
        (g.amplitude)(p) * (p * om * g.kernel.eval(p * r) * damp / t)
    };
    let k0 = match g.kernel {
        RadialKernel::Sinc => T::one(),
        RadialKernel::DSinc => T::zero(),
    };
    let c0 = (g.amplitude)(T::zero()) * (m * (two * m / t).sqrt() * k0 / t);
    let phase = |w: T| Complex::new(T::zero(), sig * w).exp();
    let rem = |w: T| {
        let sub = c0 * (w.sqrt() * (-w).exp());
        (h(w) - sub) * phase(w)
    };
    // the amplitude varies on the scale t * scale^2 / (2m) in w once p is small
    let wscale = (g.scale * g.scale * t / (two * m)).max(g.scale * t).max(T::one());
    let panel = two * T::PI();
    let mut extent = T::c(8.0) * wscale;
    if delta > T::zero() {
        extent = extent.max(T::c(4.0) * t / delta);
    }
    let body = integrate_halfline(rem, T::zero(), panel, extent, rel_tol)?;
    // ∫₀^∞ √w e^{-w} e^{iσw} dw = Γ(3/2) / (1 − iσ)^{3/2}
    let lead = c0 * (T::PI().sqrt() / two) * Complex::new(T::one(), -sig).powf(T::c(-1.5));
    let total = body + Estimate { value: lead, error: T::zero() };
    Ok(total.scale(Complex::new(T::zero(), sig * m * t).exp()))
}

/// Abel summation: evaluate with regulators δ_j = δ₀ 2^{-j} and extrapolate δ → 0.
fn radial_abel<T: Real>(g: &RadialIntegrand<'_, T>, r: T, rel_tol: T) -> Result<Estimate<T>> {
    let t = g.time;
    let sep = (t * t - r * r).abs();
    if sep < T::c(1e-6) {
        return Err(Error::SingularSeparation(sep.as_f64()));
    }
    let dist = (t.abs() - r).abs();
    let levels = 8;
    let d0 = T::c(0.4) * dist;
    let mut xs = Vec::with_capacity(levels);
    let mut ys = Vec::with_capacity(levels);
    let mut err = T::zero();
    for j in 0..levels {
        let d = d0 / T::c(2f64.powi(j as i32));
        let est = radial_direct(g, r, rel_tol * T::c(1e-3), d)?;
        err = err.max(est.error);
        xs.push(d);
        ys.push(est.value);
    }
    let (value, extrap_err) = neville_at_zero(&xs, &ys);
    Ok(Estimate { value, error: err + extrap_err })
}

/// Polynomial extrapolation to x = 0. Returns the value and the difference
/// between the two highest-order estimates.
pub fn neville_at_zero<T: Real>(xs: &[T], ys: &[Complex<T>]) -> (Complex<T>, T) {
    let n = xs.len();
    let mut p: Vec<Complex<T>> = ys.to_vec();
    let mut last_two = (ys[n - 1], ys[n - 1]);
    for k in 1..n {
        for i in 0..n - k {
            let xi = xs[i];
            let xk = xs[i + k];
            p[i] = (p[i + 1] * xi - p[i] * xk) / (xi - xk);
        }
        if k == n - 1 {
            last_two.0 = p[0];
        }
        if k == n - 2 {
            last_two.1 = p[0];
        }
    }
    (p[0], (last_two.0 - last_two.1).norm())
}

/// lim_{ε→0⁺} ∫₀^∞ w^k e^{(iσ−ε)w} dw = Γ(k+1) / (−iσ)^{k+1}, principal branch.
pub fn regularized_halfline_moment<T: Real>(k_half: T, sigma: i32) -> Result<Complex<T>> {
    let k = k_half.as_f64();
    let gamma = if (k - 0.5).abs() < 1e-12 {
        0.5
    } else if (k - 1.5).abs() < 1e-12 {
        0.75
    } else if (k - 2.5).abs() < 1e-12 {
        1.875
    } else {
        return Err(Error::UnsupportedExponent(k));
    } * std::f64::consts::PI.sqrt();
    if sigma.abs() != 1 {
        return Err(Error::InvalidArgument("sigma must be +1 or -1".into()));
    }
    // (−iσ)^{−(k+1)} = e^{iσπ(k+1)/2}
    let arg = sigma as f64 * std::f64::consts::FRAC_PI_2 * (k + 1.0);
    Ok(Complex::from_polar(T::c(gamma), T::c(arg)))
}

/// Weight in ∫_{−t}^{t} dr w(r) e^{ira}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    Flat,
    AbsR,
}

pub fn windowed_fourier<T: Real>(a: T, t: T, weight: Window) -> Complex<T> {
    let x = a * t;
    let two = T::c(2.0);
    let re = match weight {
        Window::Flat => {
            if x.abs() < T::c(1e-4) {
                let x2 = x * x;
                two * t * (T::one() - x2 / T::c(6.0) + x2 * x2 / T::c(120.0))
            } else {
                two * x.sin() / a
            }
        }
        Window::AbsR => {
            if x.abs() < T::c(1e-3) {
                // t² Σ_k (−1)^k x^{2k} 2(2k+1)/(2k+2)!
                let x2 = x * x;
                t * t * (T::one() - x2 / T::c(4.0) + x2 * x2 / T::c(72.0) - x2 * x2 * x2 / T::c(2880.0))
            } else {
                two * ((x.cos() - T::one()) / (a * a) + t * x.sin() / a)
            }
        }
    };
    Complex::new(re, T::zero())
}

/// Result of a log-log least-squares fit y ≈ C t^γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit<T = f64> {
    pub exponent: T,
    pub coefficient: T,
    pub r_squared: T,
    pub window: (T, T),
    pub samples: usize,
}

pub fn fit_growth_exponent<T: Real>(samples: &[(T, T)], window: (T, T)) -> Result<GrowthFit<T>> {
    let pts: Vec<(T, T)> =
        samples.iter().copied().filter(|&(t, _)| t >= window.0 && t <= window.1).collect();
    if pts.len() < 8 {
        return Err(Error::InsufficientSamples { needed: 8, got: pts.len() });
    }
    if let Some(w) = pts.windows(2).find(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidArgument(format!("t not strictly increasing at {:?}", w[1].0)));
    }
    if let Some(&(_, y)) = pts.iter().find(|p| !(p.1 > T::zero())) {
        return Err(Error::NonPositiveValue(y.as_f64()));
    }
    let n = T::from_usize(pts.len()).unwrap();
    let (sx, sy) = pts.iter().fold((T::zero(), T::zero()), |(a, b), &(t, y)| (a + t.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(t, y) in &pts {
        let dx = t.ln() - mx;
        let dy = y.ln() - my;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > T::zero() { (sxy * sxy / (sxx * syy)).min(T::one()) } else { T::one() };
    Ok(GrowthFit {
        exponent: slope,
        coefficient: intercept.exp(),
        r_squared: r2,
        window: (pts[0].0, pts[pts.len() - 1].0),
        samples: pts.len(),
    })
}

/// PV ∫_{s0−h}^{s0+h} f(s)/(s − s0) ds by symmetric subtraction.
pub fn principal_value_1d<T, F>(f: F, s0: T, halfwidth: T, rel_tol: T) -> Result<T>
where
    T: Real,
    F: Fn(T) -> T,
{
    let g = |u: T| {
        if u == T::zero() {
            T::zero()
        } else {
            (f(s0 + u) - f(s0 - u)) / u
        }
    };
    let scale = halfwidth.abs() * (f(s0).abs() + f(s0 + halfwidth).abs() + f(s0 - halfwidth).abs());
    let (v, _) = integrate_real(g, T::zero(), halfwidth, rel_tol * T::c(1e-3) * scale, rel_tol)?;
    Ok(v)
}

/// PV ∫_a^b f(s)/(s − s0) ds for a < s0 < b: symmetric window plus regular remainder.
pub fn principal_value<T, F>(f: F, a: T, b: T, s0: T, rel_tol: T) -> Result<T>
where
    T: Real,
    F: Fn(T) -> T,
{
    if !(a < s0 && s0 < b) {
        let (v, _) = integrate_real(|s| f(s) / (s - s0), a, b, T::zero(), rel_tol)?;
        return Ok(v);
    }
    let h = (s0 - a).min(b - s0);
    let core = principal_value_1d(&f, s0, h, rel_tol)?;
    let tol_abs = rel_tol * core.abs().max(T::c(1e-300));
    let (left, _) = integrate_real(|s| f(s) / (s - s0), a, s0 - h, tol_abs, rel_tol)?;
    let (right, _) = integrate_real(|s| f(s) / (s - s0), s0 + h, b, tol_abs, rel_tol)?;
    Ok(core + left + right)
}
