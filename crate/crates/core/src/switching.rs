//! Switch-on functions χ and Gaussian smearing packets.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::spacetime::{dot, Momentum3, SpacetimePoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum SwitchShape {
    /// Polynomial of degree 2k+1 with k vanishing derivatives at both ends.
    Smoothstep { k: u32 },
    /// Heaviside step at t = 0 (the ε → 0 limit), χ̇ = δ.
    SharpStep,
}

/// Serialized form of a [`SwitchFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchSpec {
    #[serde(default)]
    pub epsilon: f64,
    #[serde(flatten)]
    pub shape: SwitchShape,
}

/// χ rises from 0 at t = −2ε to 1 at t = −ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SwitchSpec", into = "SwitchSpec")]
pub struct SwitchFunction {
    pub epsilon: f64,
    pub shape: SwitchShape,
    coeffs: Vec<f64>,
}

impl From<SwitchSpec> for SwitchFunction {
    fn from(s: SwitchSpec) -> Self {
        Self::from_shape(s.epsilon, s.shape)
    }
}

impl From<SwitchFunction> for SwitchSpec {
    fn from(s: SwitchFunction) -> Self {
        Self { epsilon: s.epsilon, shape: s.shape }
    }
}

impl SwitchFunction {
    pub fn smoothstep(epsilon: f64, k: u32) -> Self {
        assert!(epsilon > 0.0 && k >= 1, "smoothstep needs epsilon > 0 and k >= 1");
        Self { epsilon, shape: SwitchShape::Smoothstep { k }, coeffs: smoothstep_coeffs(k) }
    }

    pub fn sharp() -> Self {
        Self { epsilon: 0.0, shape: SwitchShape::SharpStep, coeffs: Vec::new() }
    }

    pub fn from_shape(epsilon: f64, shape: SwitchShape) -> Self {
        match shape {
            SwitchShape::Smoothstep { k } => Self::smoothstep(epsilon, k),
            SwitchShape::SharpStep => Self::sharp(),
        }
    }

    pub fn is_sharp(&self) -> bool {
        matches!(self.shape, SwitchShape::SharpStep)
    }

    fn x(&self, t: f64) -> f64 {
        (t + 2.0 * self.epsilon) / self.epsilon
    }

    pub fn chi(&self, t: f64) -> f64 {
        if self.is_sharp() {
            return if t >= 0.0 { 1.0 } else { 0.0 };
        }
        let x = self.x(t);
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else if x > 0.5 {
            // S(x) = 1 − S(1 − x) keeps the upper half accurate
            1.0 - poly_eval(&self.coeffs, 1.0 - x)
        } else {
            poly_eval(&self.coeffs, x)
        }
    }

    pub fn chi_dot(&self, t: f64) -> f64 {
        if self.is_sharp() {
            return 0.0;
        }
        let x = self.x(t);
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        poly_eval(&poly_deriv(&self.coeffs), x) / self.epsilon
    }

    pub fn chi_ddot(&self, t: f64) -> f64 {
        if self.is_sharp() {
            return 0.0;
        }
        let x = self.x(t);
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        poly_eval(&poly_deriv(&poly_deriv(&self.coeffs)), x) / (self.epsilon * self.epsilon)
    }

    /// ∫ χ̇(τ) e^{iωτ} dτ.
    pub fn chi_dot_hat(&self, omega: f64) -> Complex64 {
        self.chi_dot_hat_deriv(Complex64::new(omega, 0.0), 0)
    }

    /// ∫ χ̇(τ) (iτ)^j e^{iωτ} dτ, the j-th ω-derivative of χ̇̂, at complex ω.
    pub fn chi_dot_hat_deriv(&self, omega: Complex64, j: u32) -> Complex64 {
        if self.is_sharp() {
            return if j == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
        }
        let eps = self.epsilon;
        // τ = ε(x − 2): integrand S'(x) (iε(x − 2))^j e^{iωε(x−2)} on [0, 1]
        let mut p = poly_deriv(&self.coeffs);
        for _ in 0..j {
            p = poly_mul(&p, &[-2.0, 1.0]);
        }
        let pref = Complex64::new(0.0, eps).powu(j) * (Complex64::i() * omega * (-2.0 * eps)).exp();
        pref * poly_fourier_unit(&p, omega * eps)
    }
}

/// Coefficients (ascending powers) of the order-(2k+1) smoothstep polynomial.
fn smoothstep_coeffs(k: u32) -> Vec<f64> {
    let k = k as usize;
    let mut c = vec![0.0; 2 * k + 2];
    for j in 0..=k {
        let v = binom(k + j, j) * binom(2 * k + 1, k - j) * if j % 2 == 0 { 1.0 } else { -1.0 };
        c[k + 1 + j] = v;
    }
    c
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, &a)| a * i as f64).collect()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// ∫₀¹ P(x) e^{iΩx} dx for a real polynomial P and complex Ω.
fn poly_fourier_unit(p: &[f64], om: Complex64) -> Complex64 {
    let i = Complex64::i();
    if om.norm() <= 8.0 {
        // Σ_j (iΩ)^j / j! Σ_n c_n / (n + j + 1)
        let z = i * om;
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        for j in 0..200usize {
            let inner: f64 = p.iter().enumerate().map(|(n, &c)| c / (n + j + 1) as f64).sum();
            let add = term * inner;
            sum += add;
            if j > 8 && add.norm() < 1e-18 * sum.norm().max(1e-300) {
                break;
            }
            term = term * z / (j + 1) as f64;
        }
        sum
    } else {
        // repeated integration by parts, terminating for polynomials
        let e1 = (i * om).exp();
        let mut d = p.to_vec();
        let mut sum = Complex64::new(0.0, 0.0);
        let mut denom = i * om;
        let mut sign = 1.0;
        while !d.is_empty() {
            let at1 = poly_eval(&d, 1.0);
            let at0 = d[0];
            sum += (e1 * at1 - at0) * sign / denom;
            d = poly_deriv(&d);
            denom *= i * om;
            sign = -sign;
        }
        sum
    }
}

/// Gaussian packet A exp(−(t − t_c)²/(2σ_t²) − |x − x_c|²/(2σ_x²) − iν(t − t_c)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: SpacetimePoint,
    pub time_width: f64,
    pub space_width: f64,
    pub amplitude: Complex64,
    /// Carrier frequency ν; f̂ peaks at p⁰ = ν.
    #[serde(default)]
    pub carrier: f64,
}

impl TestFunction {
    pub fn gaussian(center: SpacetimePoint, time_width: f64, space_width: f64) -> Self {
        Self { center, time_width, space_width, amplitude: Complex64::new(1.0, 0.0), carrier: 0.0 }
    }

    pub fn with_carrier(self, carrier: f64) -> Self {
        Self { carrier, ..self }
    }

    /// f_t(x) = f(t_x − t, x): the packet moved forward by t.
    pub fn translated(&self, t: f64) -> Self {
        Self { center: self.center.shifted(t), ..*self }
    }

    pub fn value(&self, x: &SpacetimePoint) -> Complex64 {
        let dt = x.t - self.center.t;
        let d = crate::spacetime::sub(x.x, self.center.x);
        let e = -dt * dt / (2.0 * self.time_width.powi(2)) - dot(d, d) / (2.0 * self.space_width.powi(2));
        self.amplitude * Complex64::new(e, -self.carrier * dt).exp()
    }

    /// f̂(p⁰, p) = ∫ f(t, x) e^{ip⁰t − ip·x} dt d³x.
    pub fn test_hat(&self, p0: f64, p: Momentum3) -> Complex64 {
        let st = self.time_width;
        let sx = self.space_width;
        let norm = (2.0 * std::f64::consts::PI).powi(2) * st * sx.powi(3);
        let w = p0 - self.carrier;
        let gauss = (-0.5 * st * st * w * w - 0.5 * sx * sx * dot(p, p)).exp();
        let phase = Complex64::new(0.0, p0 * self.center.t - dot(p, self.center.x)).exp();
        self.amplitude * norm * gauss * phase
    }

    /// ∂f̂/∂p⁰.
    pub fn test_hat_dp0(&self, p0: f64, p: Momentum3) -> Complex64 {
        Complex64::new(-self.time_width.powi(2) * (p0 - self.carrier), self.center.t) * self.test_hat(p0, p)
    }

    /// ∂f̂/∂p_i.
    pub fn test_hat_dp(&self, p0: f64, p: Momentum3, i: usize) -> Complex64 {
        Complex64::new(-self.space_width.powi(2) * p[i], -self.center.x[i]) * self.test_hat(p0, p)
    }
}
