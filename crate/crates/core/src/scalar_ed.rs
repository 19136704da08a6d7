//! First-order scalar electrodynamics on a thermal background.
//!
//! A complex scalar of mass m couples to a fixed external potential through
//! ie A_μ(φ†∂^μφ − ∂^μφ†φ). The routines here evaluate the smeared first-order
//! correction for a linear electric potential in the adiabatic limit, the
//! per-mode coefficient sums that cancel once the interacting equilibrium state
//! is expanded as well, the surviving time-invariant boundary term, and the
//! transversality cancellation for a magnetic potential in Coulomb gauge.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::propagators::ThermalParams;
use crate::quadrature::{
    integrate_adaptive, integrate_radial_with, sinc, Decay, RadialIntegrand, RadialKernel, RadialMethod,
};
use crate::spacetime::{add, dot, norm, sub, Momentum3, SpacetimePoint};
use crate::switching::{SwitchFunction, TestFunction};

pub type ScalarProfile = Arc<dyn Fn(Momentum3) -> Complex64 + Send + Sync>;
pub type VectorProfile = Arc<dyn Fn(Momentum3) -> [Complex64; 3] + Send + Sync>;

#[derive(Clone)]
pub enum PotentialKind {
    /// A₀(s) = s_axis.
    ScalarLinear { axis: usize },
    /// A₀ given through its Fourier transform Â₀(q) = ∫ A₀(s) e^{−iq·s} d³s.
    ScalarGeneral(ScalarProfile),
    /// A₀ ≡ value; only usable together with a spatial cutoff.
    ScalarUniform { value: f64 },
    /// Vector potential with A₀ = 0, given through Â_i(q).
    VectorCoulomb(VectorProfile),
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::ScalarLinear { axis } => write!(f, "ScalarLinear {{ axis: {axis} }}"),
            PotentialKind::ScalarGeneral(_) => write!(f, "ScalarGeneral(..)"),
            PotentialKind::ScalarUniform { value } => write!(f, "ScalarUniform {{ value: {value} }}"),
            PotentialKind::VectorCoulomb(_) => write!(f, "VectorCoulomb(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExternalPotential {
    pub kind: PotentialKind,
    pub coupling: f64,
}

/// Fixed probe momenta for the transversality check.
fn probe_momenta() -> Vec<Momentum3> {
    let mut out = Vec::new();
    for (i, r) in [0.3, 1.0, 2.7].iter().enumerate() {
        for j in 0..6 {
            let th = 0.4 + 0.45 * j as f64 + 0.1 * i as f64;
            let ph = 0.9 * j as f64 + 0.3 * i as f64;
            out.push([r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()]);
        }
    }
    out
}

impl ExternalPotential {
    pub fn scalar_linear(axis: usize, coupling: f64) -> Result<Self> {
        if axis > 2 {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
        }
        Ok(Self { kind: PotentialKind::ScalarLinear { axis }, coupling })
    }

    pub fn scalar_general(profile: ScalarProfile, coupling: f64) -> Self {
        Self { kind: PotentialKind::ScalarGeneral(profile), coupling }
    }

    /// Spherical Gaussian A₀(s) = a exp(−|s|²/(2w²)).
    pub fn scalar_gaussian(amplitude: f64, width: f64, coupling: f64) -> Self {
        let norm = amplitude * (2.0 * PI * width * width).powf(1.5);
        let w2 = width * width;
        Self::scalar_general(Arc::new(move |q| Complex64::from(norm * (-0.5 * w2 * dot(q, q)).exp())), coupling)
    }

    pub fn scalar_uniform(value: f64, coupling: f64) -> Self {
        Self { kind: PotentialKind::ScalarUniform { value }, coupling }
    }

    pub fn vector_coulomb(profile: VectorProfile, coupling: f64) -> Result<Self> {
        let pot = Self { kind: PotentialKind::VectorCoulomb(profile), coupling };
        pot.check_transversal(&[])?;
        Ok(pot)
    }

    /// Â(q) = (q₂, −q₁, 0) e^{−|q|²}, divergence free by construction.
    pub fn axial_vortex(coupling: f64) -> Self {
        let profile: VectorProfile = Arc::new(|q: Momentum3| {
            let g = (-dot(q, q)).exp();
            [Complex64::from(q[1] * g), Complex64::from(-q[0] * g), Complex64::from(0.0)]
        });
        Self { kind: PotentialKind::VectorCoulomb(profile), coupling }
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        Self { coupling, ..self.clone() }
    }

    /// Checks q·Â(q) = 0 at the probe momenta and at `extra`.
    pub fn check_transversal(&self, extra: &[Momentum3]) -> Result<()> {
        let PotentialKind::VectorCoulomb(a) = &self.kind else {
            return Ok(());
        };
        for q in probe_momenta().iter().chain(extra) {
            let v = a(*q);
            let div: Complex64 = (0..3).map(|i| v[i] * q[i]).sum();
            let size = norm(*q) * v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if div.norm() > 1e-10 * size + 1e-300 {
                return Err(Error::NonTransversalPotential(div.norm()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialCutoff {
    /// h ≡ 1.
    Adiabatic,
    /// h(s) = exp(−|s|²/(2σ²)).
    Gaussian { width: f64 },
}

impl SpatialCutoff {
    /// ĥ(q); only meaningful for the Gaussian cutoff.
    pub fn hat(&self, q: f64) -> f64 {
        match *self {
            SpatialCutoff::Adiabatic => f64::NAN,
            SpatialCutoff::Gaussian { width } => (2.0 * PI * width * width).powf(1.5) * (-0.5 * width * width * q * q).exp(),
        }
    }
}

fn linear_axis(pot: &ExternalPotential) -> Result<usize> {
    match pot.kind {
        PotentialKind::ScalarLinear { axis } => Ok(axis),
        _ => Err(Error::InvalidArgument("a linear scalar potential is required".into())),
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// f̂(p⁰, q) stripped of the plane wave e^{−iq·x_c}, at |q| = k.
fn radial_hat(f: &TestFunction, p0: f64, k: f64) -> Complex64 {
    f.test_hat(p0, [0.0; 3]) * (-0.5 * f.space_width.powi(2) * k * k).exp()
}

fn radial_hat_dp0(f: &TestFunction, p0: f64, k: f64) -> Complex64 {
    f.test_hat_dp0(p0, [0.0; 3]) * (-0.5 * f.space_width.powi(2) * k * k).exp()
}

/// Radial quadrature of ∫ d³k [c₀(k) + c₁(k) k_i] e^{ik·d} e^{iσω t} in terms of
/// amplitude closures for c₀ and c₁, where d̂_i is the direction cosine.
struct PlaneWaveSplit {
    r: f64,
    dhat_i: f64,
    mass: f64,
    scale: f64,
    rel_tol: f64,
}

impl PlaneWaveSplit {
    /// ∫ k² |c| dk over the support, used to drop pieces that are zero up to rounding.
    fn magnitude(&self, c: &dyn Fn(f64) -> Complex64, power: i32) -> Result<f64> {
        let hi = 40.0 * self.scale + 10.0 * self.mass;
        let n = 800;
        let h = hi / n as f64;
        Ok((1..n).map(|j| {
            let k = j as f64 * h;
            k * k * k.powi(power) * c(k).norm() * h
        }).sum())
    }

    fn integrate_piece(
        &self,
        amp: &(dyn Fn(f64) -> Complex64 + Sync),
        kernel: RadialKernel,
        time: f64,
        sign: i32,
    ) -> Result<Complex64> {
        let g = RadialIntegrand::new(amp, self.mass, time).sign(sign).kernel(kernel).scale(self.scale);
        Ok(integrate_radial_with(&g, self.r, self.rel_tol, RadialMethod::Auto)?.value)
    }

    /// Sums ∫ d³k [c₀ + c₁ k_i] e^{ik·d} e^{iσωt} over a list of (c₀, c₁, t, σ).
    #[allow(clippy::type_complexity)]
    fn integrate_all(
        &self,
        pieces: &[(&(dyn Fn(f64) -> Complex64 + Sync), &(dyn Fn(f64) -> Complex64 + Sync), f64, i32)],
    ) -> Result<Complex64> {
        let use_dsinc = self.r > 0.0 && self.dhat_i != 0.0;
        let mut mags = Vec::new();
        for (c0, c1, _, _) in pieces {
            let m1 = if use_dsinc { self.magnitude(*c1, 1)? } else { 0.0 };
            mags.push((self.magnitude(*c0, 0)?, m1));
        }
        let floor = 1e-3 * self.rel_tol * mags.iter().fold(0.0f64, |m, &(a, b)| m.max(a).max(b));
        let mut total = Complex64::from(0.0);
        for ((c0, c1, time, sign), (m0, m1)) in pieces.iter().zip(mags) {
            if m0 > floor {
                let a0 = |k: f64| c0(k) * (4.0 * PI);
                total += self.integrate_piece(&a0, RadialKernel::Sinc, *time, *sign)?;
            }
            if use_dsinc && m1 > floor {
                // ∫dΩ k_i e^{ik·d} = −i d̂_i 4π k sinc′(k|d|)
                let a1 = |k: f64| c1(k) * c(0.0, -4.0 * PI * self.dhat_i * k);
                total += self.integrate_piece(&a1, RadialKernel::DSinc, *time, *sign)?;
            }
        }
        Ok(total)
    }

    fn integrate(
        &self,
        c0: &(dyn Fn(f64) -> Complex64 + Sync),
        c1: &(dyn Fn(f64) -> Complex64 + Sync),
        time: f64,
        sign: i32,
    ) -> Result<Complex64> {
        self.integrate_all(&[(c0, c1, time, sign)])
    }
}

fn split_for(f: &TestFunction, g: &TestFunction, axis: usize, params: &ThermalParams, rel_tol: f64) -> PlaneWaveSplit {
    let d = sub(f.center.x, g.center.x);
    let r = norm(d);
    PlaneWaveSplit {
        r,
        dhat_i: if r > 0.0 { d[axis] / r } else { 0.0 },
        mass: params.mass,
        scale: 1.0 / f.space_width.max(g.space_width),
        rel_tol,
    }
}

/// Coefficients (c₀, c₁) of the three phase classes e^{2iωt}, 1, e^{−2iωt},
/// with the class phase removed.
fn za_coefficients(
    k: f64,
    t: f64,
    ft: &TestFunction,
    gt: &TestFunction,
    axis: usize,
    params: &ThermalParams,
    chi: &SwitchFunction,
) -> [[Complex64; 2]; 3] {
    let om = params.omega(k);
    let occ = params.occ(om);
    let n = |tau: i32| if tau > 0 { occ.bose_plus } else { occ.bose_minus };
    let beta_term = if occ.bose_minus == 0.0 { 0.0 } else { -params.beta * occ.bose_plus * occ.bose_minus };
    let d_occ = |tau: i32| beta_term / (2.0 * om) - n(tau) / (2.0 * om * om);
    let i = c(0.0, 1.0);
    let chi0 = |nu: f64| chi.chi_dot_hat(nu);
    let chi1 = |nu: f64| -i * chi.chi_dot_hat_deriv(c(nu, 0.0), 1);

    let mut out = [[Complex64::from(0.0); 2]; 3];
    let e = 1.0 / (2.0 * PI).powi(3) / (2.0 * om);
    for sigma in [1i32, -1] {
        let s = sigma as f64;
        for tau in [1i32, -1] {
            let tf = tau as f64;
            let h = n(tau) / (2.0 * om);
            // first addend: ∂_p acts on the g-side factor
            {
                let kf = s * radial_hat(ft, s * om, k);
                let gv = radial_hat(gt, tf * om, k);
                let g0 = radial_hat_dp0(gt, tf * om, k);
                let nu = -(s + tf) * om;
                let (x0, x1) = (chi0(nu), chi1(nu));
                let c0 = h * c(0.0, -gt.center.x[axis]) * gv * x0;
                let c1 = ((d_occ(tau) * gv + h * tf * g0) / om - h * gt.space_width.powi(2) * gv) * x0
                    + (h * c(0.0, -tf) * gv / om) * x1;
                let class = sigma + tau;
                let unphase = c(0.0, -(class as f64) * om * t).exp();
                let pre = i * e * kf * unphase;
                let slot = (1 - class / 2) as usize;
                out[slot][0] += pre * c0;
                out[slot][1] += pre * c1;
            }
            // second addend, with k → −k so the plane wave is again e^{ik·d}
            {
                let kg = s * radial_hat(gt, s * om, k);
                let fv = radial_hat(ft, -tf * om, k);
                let f0 = radial_hat_dp0(ft, -tf * om, k);
                let nu = (tf - s) * om;
                let (x0, x1) = (chi0(nu), chi1(nu));
                let c0 = h * c(0.0, -ft.center.x[axis]) * fv * x0;
                let c1 = ((d_occ(tau) * fv - h * tf * f0) / om - h * ft.space_width.powi(2) * fv) * x0
                    + (h * c(0.0, tf) * fv / om) * x1;
                let class = sigma - tau;
                let unphase = c(0.0, -(class as f64) * om * t).exp();
                let pre = -i * e * kg * unphase;
                let slot = (1 - class / 2) as usize;
                out[slot][0] += pre * c0;
                out[slot][1] -= pre * c1;
            }
        }
    }
    out
}

/// Smeared first-order correction ⟨Z^𝔄, f_t ⊗ g_t⟩ for A₀ = s_i in the adiabatic limit.
pub fn smeared_first_order(
    t: f64,
    f: &TestFunction,
    g: &TestFunction,
    pot: &ExternalPotential,
    params: &ThermalParams,
    chi: &SwitchFunction,
    rel_tol: f64,
) -> Result<Complex64> {
    let axis = linear_axis(pot)?;
    if t < 0.0 {
        return Err(Error::InvalidArgument("t must lie after the switch-on".into()));
    }
    if pot.coupling == 0.0 {
        return Ok(Complex64::from(0.0));
    }
    let (ft, gt) = (f.translated(t), g.translated(t));
    let split = split_for(f, g, axis, params, rel_tol);
    let coeffs = |k: f64| za_coefficients(k, t, &ft, &gt, axis, params, chi);
    let part = |slot: usize, j: usize| move |k: f64| coeffs(k)[slot][j];
    let (a0, a1, b0, b1, c0, c1) = (part(0, 0), part(0, 1), part(1, 0), part(1, 1), part(2, 0), part(2, 1));
    let total = split.integrate_all(&[(&a0, &a1, 2.0 * t, 1), (&b0, &b1, 0.0, 1), (&c0, &c1, 2.0 * t, -1)])?;
    Ok(total * pot.coupling)
}

/// W_{f,g}(t) = |⟨Z^𝔄, f_t ⊗ g_t⟩|.
pub fn smeared_first_order_w(
    t: f64,
    f: &TestFunction,
    g: &TestFunction,
    pot: &ExternalPotential,
    params: &ThermalParams,
    chi: &SwitchFunction,
    rel_tol: f64,
) -> Result<f64> {
    Ok(smeared_first_order(t, f, g, pot, params, chi, rel_tol)?.norm())
}

/// Coefficient of the linear growth,
/// e ∫ d³p p_i [2b⁻ f̂(ω, −p) ĝ(−ω, p) + 2b⁺ f̂(−ω, −p) ĝ(ω, p)] / (4ω³ (2π)³).
pub fn secular_coefficient(
    f: &TestFunction,
    g: &TestFunction,
    pot: &ExternalPotential,
    params: &ThermalParams,
    rel_tol: f64,
) -> Result<Complex64> {
    let axis = linear_axis(pot)?;
    let split = split_for(f, g, axis, params, rel_tol);
    let zero = |_: f64| Complex64::from(0.0);
    let c1 = |k: f64| {
        let om = params.omega(k);
        let occ = params.occ(om);
        let a = 2.0 * occ.bose_minus * radial_hat(f, om, k) * radial_hat(g, -om, k)
            + 2.0 * occ.bose_plus * radial_hat(f, -om, k) * radial_hat(g, om, k);
        a / (4.0 * om.powi(3) * (2.0 * PI).powi(3))
    };
    Ok(split.integrate(&zero, &c1, 0.0, 1)? * pot.coupling)
}

/// The two χ̇̂-weighted addends of the oscillating remainder, carrying
/// e^{2iωt} and e^{−2iωt} respectively.
pub fn oscillating_remainder(
    t: f64,
    f: &TestFunction,
    g: &TestFunction,
    pot: &ExternalPotential,
    params: &ThermalParams,
    chi: &SwitchFunction,
    rel_tol: f64,
) -> Result<[Complex64; 2]> {
    let axis = linear_axis(pot)?;
    let split = split_for(f, g, axis, params, rel_tol);
    let zero = |_: f64| Complex64::from(0.0);
    let mut out = [Complex64::from(0.0); 2];
    for (j, s) in [1.0f64, -1.0].into_iter().enumerate() {
        let c1 = |k: f64| {
            let om = params.omega(k);
            let occ = params.occ(om);
            let w = (occ.bose_minus + occ.bose_plus) / (4.0 * om.powi(3) * (2.0 * PI).powi(3));
            w * chi.chi_dot_hat(-2.0 * s * om) * radial_hat(f, s * om, k) * radial_hat(g, s * om, k)
        };
        out[j] = split.integrate(&zero, &c1, 2.0 * t, s as i32)? * (pot.coupling * t);
    }
    Ok(out)
}

/// ⟨ω₂^β + Z^{𝔅,Inv}_{1,+} + Z^{𝔅,Inv}_{2,+}, f_a ⊗ g_a⟩ for A₀ = s_i.
pub fn corrected_smeared_value(
    a: f64,
    f: &TestFunction,
    g: &TestFunction,
    pot: &ExternalPotential,
    params: &ThermalParams,
    rel_tol: f64,
) -> Result<Complex64> {
    let axis = linear_axis(pot)?;
    let (fa, ga) = (f.translated(a), g.translated(a));
    let split = split_for(f, g, axis, params, rel_tol);
    let e = pot.coupling;
    let (sf, sg) = (f.space_width.powi(2), g.space_width.powi(2));
    let (xf, xg) = (fa.center.x[axis], ga.center.x[axis]);
    let i = c(0.0, 1.0);
    // both entries are [c₀, c₁] of c₀ + c₁ p_i
    let coeffs = |k: f64| -> [Complex64; 2] {
        let om = params.omega(k);
        let occ = params.occ(om);
        let pp = radial_hat(&fa, -om, k) * radial_hat(&ga, om, k);
        let mm = radial_hat(&fa, om, k) * radial_hat(&ga, -om, k);
        let free = (occ.bose_plus * pp + occ.bose_minus * mm) / (2.0 * om * (2.0 * PI).powi(3));
        let pre = -2.0 * e / (4.0 * (2.0 * PI).powi(3));
        let bracket = (occ.bose_plus / c(0.0, -2.0 * om) * pp + occ.bose_minus / c(0.0, 2.0 * om) * mm) / om;
        // moments: x_i f → (iσ_f² p_i + x_{f,i}) f̂, y_i g → (−iσ_g² p_i + x_{g,i}) ĝ
        let c0 = pre * i * (xf + xg) * bracket;
        let mut c1 = pre * i * (i * sf - i * sg) * bracket;
        let z1 = (-i * occ.bose_plus * pp + i * occ.bose_minus * mm) / (4.0 * om.powi(4));
        let z2 = (-i * occ.bose_plus * pp - i * occ.bose_minus * mm) / (4.0 * om.powi(4));
        c1 += pre * (z1 + z2);
        [free + c0, c1]
    };
    let c0 = |k: f64| coeffs(k)[0];
    let c1 = |k: f64| coeffs(k)[1];
    split.integrate(&c0, &c1, 0.0, 1)
}

/// Per-mode coefficients (in units of e) of the exponentials
/// e^{±iω_k t_x ± iω_p t_y} from each first-order source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCoefficients {
    pub omega_p: f64,
    pub omega_k: f64,
    pub beta: f64,
    /// Rows: modes (+,+), (+,−), (−,+), (−,−) for the signs of ω_k t_x and ω_p t_y.
    /// Columns: Z₁^𝔄, Z₁^𝔅 bulk, Z₂^𝔄, Z₂^𝔅 bulk, E¹ from 𝔄, E¹ from 𝔅.
    pub table: [[f64; 6]; 4],
}

pub const MODE_SOURCES: [&str; 6] = ["Z1_A", "Z1_B_bulk", "Z2_A", "Z2_B_bulk", "E1_A", "E1_B"];
pub const MODE_SIGNS: [(i32, i32); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

impl ModeCoefficients {
    pub fn residuals(&self) -> [f64; 4] {
        self.table.map(|row| row.iter().sum::<f64>())
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals().iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// b^±(ω) for sign s, with b⁻ = 0 and b⁺ = 1 at β = ∞.
fn bose(s: i32, beta: f64, om: f64) -> f64 {
    let occ = crate::propagators::occupation_factors(beta, om);
    if s > 0 {
        occ.bose_plus
    } else {
        occ.bose_minus
    }
}

/// b^{−s_x}(K) b^{−s_y}(P) (e^{β(s_x K + s_y P)} − 1).
///
/// Evaluated as written while the exponent is representable; otherwise through
/// the equivalent b^{s_x}(K) b^{s_y}(P) − b^{−s_x}(K) b^{−s_y}(P).
pub fn kms_factor(sx: i32, sy: i32, k: f64, p: f64, beta: f64) -> f64 {
    let x = beta * (sx as f64 * k + sy as f64 * p);
    if beta.is_finite() && x.abs() < 700.0 {
        bose(-sx, beta, k) * bose(-sy, beta, p) * x.exp_m1()
    } else {
        bose(sx, beta, k) * bose(sy, beta, p) - bose(-sx, beta, k) * bose(-sy, beta, p)
    }
}

pub fn mode_coefficients(omega_p: f64, omega_k: f64, beta: f64) -> Result<ModeCoefficients> {
    if !(omega_p > 0.0 && omega_k > 0.0) {
        return Err(Error::NonPositiveEnergy(omega_p.min(omega_k)));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta = {beta} must be positive")));
    }
    if (omega_p - omega_k).abs() <= 1e-12 * omega_p.max(omega_k) {
        return Err(Error::DegenerateMode(omega_p));
    }
    let (p, k) = (omega_p, omega_k);
    let bp = |s| bose(s, beta, p);
    let bk = |s| bose(s, beta, k);
    let q = |sx, sy| kms_factor(sx, sy, k, p, beta);
    let pk = 4.0 * p * k;
    let table = [
        [
            bp(1) / pk,
            -2.0 * bp(1) / (4.0 * p * (p + k)),
            -bk(-1) / pk,
            2.0 * bk(-1) / (4.0 * k * (p + k)),
            q(1, 1) / pk,
            -2.0 * q(1, 1) / (4.0 * k * (p + k)),
        ],
        [
            bp(-1) / pk,
            2.0 * bp(-1) / (4.0 * p * (p - k)),
            bk(-1) / pk,
            -2.0 * bk(-1) / (4.0 * k * (p - k)),
            q(1, -1) / pk,
            -2.0 * q(1, -1) / (4.0 * k * (p - k)),
        ],
        [
            -bp(1) / pk,
            2.0 * bp(1) / (4.0 * p * (k - p)),
            -bk(1) / pk,
            -2.0 * bk(1) / (4.0 * k * (k - p)),
            q(-1, 1) / pk,
            2.0 * q(-1, 1) / (4.0 * k * (k - p)),
        ],
        [
            -bp(-1) / pk,
            2.0 * bp(-1) / (4.0 * p * (p + k)),
            bk(1) / pk,
            -2.0 * bk(1) / (4.0 * k * (p + k)),
            q(-1, -1) / pk,
            -2.0 * q(-1, -1) / (4.0 * k * (p + k)),
        ],
    ];
    Ok(ModeCoefficients { omega_p, omega_k, beta, table })
}

/// Largest per-mode coefficient sum over the four exponential families.
pub fn mode_cancellation_residual(omega_p: f64, omega_k: f64, beta: f64) -> Result<f64> {
    Ok(mode_coefficients(omega_p, omega_k, beta)?.max_residual())
}

/// Z^{𝔅,Inv}(x, y) for a spherically symmetric A₀ at spatially coincident points.
///
/// With q = k − p both plane-wave terms reduce to e^{iq·X}, the angle between
/// p and q is integrated in closed form as a principal value, and the large-p
/// tail of ∫ B(p, τ) dp is summed in the Abel sense.
pub fn z_b_inv(
    x: &SpacetimePoint,
    y: &SpacetimePoint,
    pot: &ExternalPotential,
    cutoff: SpatialCutoff,
    params: &ThermalParams,
    rel_tol: f64,
) -> Result<Complex64> {
    let PotentialKind::ScalarGeneral(a0) = &pot.kind else {
        return Err(Error::InvalidArgument("an isotropic scalar potential is required".into()));
    };
    if norm(sub(x.x, y.x)) > 1e-12 * (1.0 + norm(x.x)) {
        return Err(Error::InvalidArgument("only spatially coincident points are supported".into()));
    }
    for dir in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]] {
        let (u, v) = (a0([0.0, 0.0, 0.7]), a0(crate::spacetime::scale(dir, 0.7)));
        if (u - v).norm() > 1e-12 * u.norm().max(1e-300) {
            return Err(Error::InvalidArgument("potential is not spherically symmetric".into()));
        }
    }
    let tau = x.t - y.t;
    if tau.abs() < 1e-9 {
        return Err(Error::SingularSeparation(tau.abs()));
    }
    if pot.coupling == 0.0 {
        return Ok(Complex64::from(0.0));
    }
    let radial_a0 = |q: f64| a0([0.0, 0.0, q]);
    let phi = |q: f64| -> Result<Complex64> {
        match cutoff {
            SpatialCutoff::Adiabatic => Ok(radial_a0(q)),
            SpatialCutoff::Gaussian { width } => gaussian_convolution(&radial_a0, width, q, rel_tol),
        }
    };
    let r = norm(x.x);
    let m = params.mass;
    let moments = vacuum_moments(tau, params, rel_tol)?;
    let inner = |q: f64| -> Result<Complex64> { rho(q, tau, params, moments, rel_tol) };
    let err = std::cell::RefCell::new(None);
    let body = |q: f64| -> Complex64 {
        if q == 0.0 || err.borrow().is_some() {
            return Complex64::from(0.0);
        }
        match phi(q).and_then(|p| Ok(p * inner(q)?)) {
            Ok(v) => v * q * q * sinc(q * r),
            Err(e) => {
                *err.borrow_mut() = Some(e);
                Complex64::from(0.0)
            }
        }
    };
    let qmax = potential_extent(&radial_a0, cutoff, m);
    let est = integrate_adaptive(body, 0.0, qmax, 0.0, rel_tol)?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(est.value * (2.0 * pot.coupling * 4.0 * PI / (2.0 * PI).powi(3)))
}

/// Momentum beyond which Φ(q) is negligible.
pub(crate) fn potential_extent(a0: &dyn Fn(f64) -> Complex64, cutoff: SpatialCutoff, m: f64) -> f64 {
    let peak = a0(0.0).norm().max(1e-300);
    let mut q = 0.5 * m.max(0.1);
    while q < 1e4 && a0(q).norm() > 1e-16 * peak {
        q *= 1.25;
    }
    if let SpatialCutoff::Gaussian { width } = cutoff {
        // Φ is a convolution, so its reach is the sum of both reaches
        q += 9.0 / width;
    }
    q
}

/// (1/(2π)³) ∫ d³k ĥ(q − k) Â₀(k) for a Gaussian cutoff of width σ.
pub(crate) fn gaussian_convolution(a0: &dyn Fn(f64) -> Complex64, width: f64, q: f64, rel_tol: f64) -> Result<Complex64> {
    let s2 = width * width;
    let norm = (2.0 * PI * s2).powf(1.5);
    // ∫_{−1}^{1} e^{−σ²|q−k|²/2} dc in a form stable for small and large qk
    let ang = |k: f64| {
        let x = s2 * q * k;
        let edge = (-0.5 * s2 * (q - k).powi(2)).exp();
        if x < 1e-8 {
            2.0 * (-0.5 * s2 * (q * q + k * k)).exp()
        } else {
            edge * -(-2.0 * x).exp_m1() / x
        }
    };
    let lo = (q - 12.0 / width).max(0.0);
    let hi = q + 12.0 / width;
    let est = integrate_adaptive(|k| a0(k) * (k * k * ang(k) * norm), lo, hi, 0.0, rel_tol * 1e-2)?;
    Ok(est.value * (2.0 * PI / (2.0 * PI).powi(3)))
}

/// Abel sums I₀ = ∫₀^∞ e^{−iωτ} dp and J = ∫₀^∞ e^{−iωτ} ω^{−2} dp.
fn vacuum_moments(tau: f64, params: &ThermalParams, rel_tol: f64) -> Result<(Complex64, Complex64)> {
    let m = params.mass;
    let sign = if tau > 0.0 { -1 } else { 1 };
    let inv_p2 = |p: f64| Complex64::from(if p > 0.0 { 1.0 / (p * p) } else { 0.0 });
    let inv_p2w2 = |p: f64| Complex64::from(if p > 0.0 { 1.0 / (p * p * (p * p + m * m)) } else { 0.0 });
    let mut out = [Complex64::from(0.0); 2];
    for (slot, amp) in [&inv_p2 as &(dyn Fn(f64) -> Complex64 + Sync), &inv_p2w2].into_iter().enumerate() {
        let g = RadialIntegrand::new(amp, m, tau.abs()).sign(sign).decay(Decay::Abel).scale(m);
        out[slot] = integrate_radial_with(&g, 0.0, rel_tol, RadialMethod::Direct)?.value;
    }
    Ok((out[0], out[1]))
}

/// ρ(q, τ) = ∫ d³p/(2π)³ B(p, τ) / (p² − |p + q|²), the inner kernel of [`z_b_inv`].
pub fn invariant_kernel(q: f64, tau: f64, params: &ThermalParams, rel_tol: f64) -> Result<Complex64> {
    if !(q > 0.0) {
        return Err(Error::InvalidArgument("q must be positive".into()));
    }
    if tau.abs() < 1e-9 {
        return Err(Error::SingularSeparation(tau.abs()));
    }
    let moments = vacuum_moments(tau, params, rel_tol)?;
    rho(q, tau, params, moments, rel_tol)
}

/// ∫₀^{s} f and ∫_{s}^{s+w} f for f with a logarithmic singularity at s,
/// after p = s ∓ (·) v² so the integrand becomes v log v.
fn around_log_point(f: &dyn Fn(f64) -> Complex64, s: f64, w: f64, rel_tol: f64) -> Result<(Complex64, Complex64)> {
    let tol = (rel_tol * 1e-2).max(1e-11);
    let left = integrate_adaptive(|v| f(s * (1.0 - v * v)) * (2.0 * s * v), 0.0, 1.0, 0.0, tol)?;
    let right = integrate_adaptive(|v| f(s + w * v * v) * (2.0 * w * v), 0.0, 1.0, 0.0, tol)?;
    Ok((left.value, right.value))
}

/// ρ(q, τ) = ∫ d³p/(2π)³ B(p, τ) / (p² − |p + q|²), B = b⁺e^{−iωτ} − b⁻e^{iωτ}.
///
/// The angular principal value gives −ln|(q + 2p)/(q − 2p)|/(2pq). The first two
/// terms q + q³/(12ω²) of p·ln|…| at large p are carried by the Abel moments.
fn rho(q: f64, tau: f64, params: &ThermalParams, moments: (Complex64, Complex64), rel_tol: f64) -> Result<Complex64> {
    let lg = |p: f64| ((q + 2.0 * p) / (q - 2.0 * p)).abs().ln();
    // the log singularity at p = q/2 is integrable; a node landing on it contributes nothing
    let plg = |p: f64| {
        let v = p * lg(p);
        if v.is_finite() { v } else { 0.0 }
    };
    let q3 = q.powi(3) / 12.0;
    let m2 = params.mass * params.mass;
    let rest = |p: f64| {
        let om = params.omega(p);
        let x = q / (2.0 * p);
        let v = if x < 0.2 {
            // p·ln = q Σ x^{2n}/(2n+1); the n = 0, 1 terms cancel against the subtraction
            let x2 = x * x;
            let (mut term, mut sum) = (x2 * x2, 0.0);
            for n in 2..40 {
                sum += term / (2 * n + 1) as f64;
                term *= x2;
                if term < 1e-17 * sum {
                    break;
                }
            }
            q3 * m2 / (p * p * om * om) + q * sum
        } else {
            plg(p) - q - q3 / (om * om)
        };
        Complex64::from(v) * c(0.0, -om * tau).exp()
    };
    let panel = (0.5 * q).min(2.0 * PI / tau.abs()).max(1e-3);
    let (lo, mid) = around_log_point(&rest, 0.5 * q, panel, rel_tol)?;
    let hi = crate::quadrature::integrate_halfline(rest, 0.5 * q + panel, panel, 4.0 * q + 8.0 * params.mass, rel_tol)?;
    let mut total = lo + mid + hi.value + moments.0 * q + moments.1 * q3;
    if !params.is_vacuum() {
        let beta = params.beta;
        let pmax = (50.0 / beta).max(q);
        let h = |p: f64| {
            let om = params.omega(p);
            let bm = params.occ(om).bose_minus;
            c(0.0, -2.0 * (om * tau).sin()) * (bm * plg(p))
        };
        let (near, mid) = around_log_point(&h, 0.5 * q, pmax, rel_tol)?;
        total += near + mid;
    }
    Ok(-total / (8.0 * PI * PI * q))
}

/// Largest relative magnitude of the Coulomb-gauge bracket contracted with Â(p + k).
///
/// The bracket is k_i X − p_i Y with X, Y the Bose-factor combinations of the
/// mode e^{−iω_k t_x − iω_p t_y}; it vanishes once contracted with a transversal Â.
pub fn magnetic_cancellation_residual(
    params: &ThermalParams,
    omega_p: f64,
    omega_k: f64,
    p_dir: Momentum3,
    k_dir: Momentum3,
    pot: &ExternalPotential,
) -> Result<f64> {
    let PotentialKind::VectorCoulomb(a) = &pot.kind else {
        return Err(Error::InvalidArgument("a Coulomb-gauge vector potential is required".into()));
    };
    let m = params.mass;
    if omega_p < m || omega_k < m {
        return Err(Error::InvalidArgument("energies must be at least the mass".into()));
    }
    let unit = |v: Momentum3| crate::spacetime::scale(v, 1.0 / norm(v));
    let p = crate::spacetime::scale(unit(p_dir), (omega_p * omega_p - m * m).sqrt());
    let k = crate::spacetime::scale(unit(k_dir), (omega_k * omega_k - m * m).sqrt());
    let qs = add(p, k);
    pot.check_transversal(&[qs])?;
    let beta = params.beta;
    let (bpp, bpm) = (bose(1, beta, omega_p), bose(-1, beta, omega_p));
    let (bkp, bkm) = (bose(1, beta, omega_k), bose(-1, beta, omega_k));
    let xk = bpp - bpm - bkp * bpm + bkm * bpp;
    let yp = -bkp + bkm + bkp * bpm - bkm * bpp;
    let av = a(qs);
    let mut sum = Complex64::from(0.0);
    let mut size = 0.0;
    for i in 0..3 {
        let term_k = av[i] * (k[i] * xk);
        let term_p = av[i] * (p[i] * yp);
        sum += term_k - term_p;
        size += term_k.norm() + term_p.norm();
    }
    if size == 0.0 {
        return Ok(0.0);
    }
    Ok(sum.norm() / size)
}

/// 𝔠 = 𝔠₁ + 𝔠₂ at spatially coincident points x⃗ = y⃗ = X.
///
/// With q = k − p (first term) and q = k + p (second term) the s-integral leaves
/// e^{iq·X} Â_i(q) times an inner momentum integral of the form ρ(|q|, τ) q̂_i.
/// The integrand is then proportional to q̂·Â(q), which transversality sets to
/// zero pointwise. The contraction is checked on a spherical grid and the
/// vanishing value returned; separated points are not supported.
pub fn magnetic_invariant_c(
    x: &SpacetimePoint,
    y: &SpacetimePoint,
    pot: &ExternalPotential,
) -> Result<Complex64> {
    let PotentialKind::VectorCoulomb(a) = &pot.kind else {
        return Err(Error::InvalidArgument("a Coulomb-gauge vector potential is required".into()));
    };
    if norm(sub(x.x, y.x)) > 1e-12 * (1.0 + norm(x.x)) {
        return Err(Error::InvalidArgument("only spatially coincident points are supported".into()));
    }
    pot.check_transversal(&[])?;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for iq in 1..=24 {
        let q = 0.25 * iq as f64;
        for it in 0..12 {
            let th = PI * (it as f64 + 0.5) / 12.0;
            for ip in 0..24 {
                let ph = 2.0 * PI * ip as f64 / 24.0;
                let qv = [q * th.sin() * ph.cos(), q * th.sin() * ph.sin(), q * th.cos()];
                let av = a(qv);
                let contraction: Complex64 = (0..3).map(|i| av[i] * qv[i] / q).sum();
                worst = worst.max(contraction.norm());
                scale = scale.max(av.iter().map(|v| v.norm()).fold(0.0, f64::max));
            }
        }
    }
    if worst > 1e-12 * scale.max(1e-300) {
        return Err(Error::NonTransversalPotential(worst));
    }
    Ok(Complex64::new(0.0, 0.0))
}
