//! First-order Dirac electrodynamics in a static potential A_μ = (A₀(x), 0, 0, 0).
//!
//! Every first-order term is a double momentum integral over p and k with a
//! plane wave e^{iq·x}, q = k − p. For a spherically symmetric source g = hA₀
//! the angles integrate out and each term becomes
//!
//!   8π² ∫dp ∫dk p k G(p, k, q²) ĝ-weighted over |p − k| ≤ q ≤ p + k,
//!
//! with G at most linear in q². The two weights ∫ q^{1,3} ĝ(q) sinc(q|x|) dq are
//! tabulated once per call.

use std::cell::{Cell, RefCell};
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagators::ThermalParams;
use crate::quadrature::{dsinc, integrate_adaptive, sinc};
use crate::scalar_ed::{gaussian_convolution, potential_extent, ExternalPotential, PotentialKind, SpatialCutoff};
use crate::spacetime::{dot, norm, Momentum3, SpacetimePoint};
use crate::spinor::{GammaBasis, SpinorMatrix, ETA};
use crate::switching::SwitchFunction;

pub use crate::spinor::gamma_trace;

/// Free constants of the first-order current: the Källén–Lehmann subtraction
/// points and the local polynomial a₀ g + a₁·∇g + a₂:∇∇g.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RenormalizationConstants {
    pub c1: f64,
    pub c2: f64,
    pub a0: f64,
    pub a1: [f64; 3],
    pub a2: [[f64; 3]; 3],
}

impl RenormalizationConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [self.c1, self.c2, self.a0].into_iter().chain(self.a1).chain(self.a2.into_iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("renormalization constants must be finite".into()));
        }
        for i in 0..3 {
            for j in 0..i {
                if self.a2[i][j] != self.a2[j][i] {
                    return Err(Error::InvalidArgument("a2 must be symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

/// Largest deviation of {γ^μ, γ^ν} from −2η^{μν} over all 16 pairs.
pub fn clifford_residual() -> f64 {
    let g = GammaBasis::get();
    let mut worst: f64 = 0.0;
    for mu in 0..4 {
        for nu in 0..4 {
            let anti = g.gamma[mu] * g.gamma[nu] + g.gamma[nu] * g.gamma[mu];
            let target = if mu == nu { -2.0 * ETA[mu] } else { 0.0 };
            let diff = anti - SpinorMatrix::scalar(target.into());
            worst = worst.max(diff.max_abs());
        }
    }
    worst
}

/// Energy signs (s_p, s_k) of the four channels; the leg factors are
/// s γ⁰ω − γ·p + m and the time dependence is e^{iνt} with ν = −s_p ω_p + s_k ω_k.
pub const DIRAC_MODES: [(i32, i32); 4] = [(-1, -1), (-1, 1), (1, -1), (1, 1)];

fn leg(s: i32, p: Momentum3, m: f64) -> SpinorMatrix {
    let omega = (dot(p, p) + m * m).sqrt();
    GammaBasis::get().slash(s as f64 * omega, -1.0, p, m)
}

/// tr(γ⁰ M_{s_p}(p) γ⁰ M_{s_k}(k)) from explicit 4×4 products.
pub fn mode_trace(sp: i32, sk: i32, p: Momentum3, k: Momentum3, m: f64) -> Complex64 {
    let g0 = GammaBasis::get().gamma[0];
    (g0 * leg(sp, p, m) * g0 * leg(sk, k, m)).trace()
}

/// Closed form of [`mode_trace`]: 2(ω_p + s_p s_k ω_k)² − 2q².
pub fn mode_trace_radial(sp: i32, sk: i32, omega_p: f64, omega_k: f64, q2: f64) -> f64 {
    let s = omega_p + (sp * sk) as f64 * omega_k;
    2.0 * s * s - 2.0 * q2
}

fn fermi(beta: f64, omega: f64) -> f64 {
    if beta.is_infinite() {
        return 0.0;
    }
    let x = beta * omega;
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// (f(ω_k) − f(ω_p)) / (ω_p − ω_k), finite at ω_p = ω_k.
fn fermi_divided(beta: f64, omega_p: f64, omega_k: f64) -> f64 {
    if beta.is_infinite() {
        return 0.0;
    }
    let x = beta * (omega_p - omega_k);
    if x.abs() > 1.0 {
        return (fermi(beta, omega_k) - fermi(beta, omega_p)) / (omega_p - omega_k);
    }
    let exprel = if x == 0.0 { 1.0 } else { x.exp_m1() / x };
    beta * (1.0 - fermi(beta, omega_k)) * fermi(beta, omega_p) * exprel
}

/// |LHS − RHS| of (e^{β(ω_p−ω_k)} − 1)/((1+e^{βω_p})(1+e^{−βω_k})) = 1/(1+e^{−βω_p}) − 1/(1+e^{−βω_k}).
pub fn fermi_decomposition_residual(beta: f64, omega_p: f64, omega_k: f64) -> f64 {
    let lhs = (beta * (omega_p - omega_k)).exp_m1() / ((1.0 + (beta * omega_p).exp()) * (1.0 + (-beta * omega_k).exp()));
    let rhs = 1.0 / (1.0 + (-beta * omega_p).exp()) - 1.0 / (1.0 + (-beta * omega_k).exp());
    (lhs - rhs).abs()
}

/// The separately computed pieces of the first-order current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiracTerm {
    /// State correction, Fermi brackets without the vacuum −1.
    StateThermal,
    /// State correction, the vacuum −1 of the mixed-sign brackets.
    StateVacuum,
    /// Bulk term of the integrated-by-parts vacuum loop.
    BulkVacuum,
    /// Bulk term of the W_β⁺ S − S W_β⁺ products.
    BulkThermal,
    /// Boundary term of the W_β⁺ S − S W_β⁺ products at t₁ = t.
    BoundaryThermal,
}

impl DiracTerm {
    pub const ALL: [DiracTerm; 5] = [
        DiracTerm::StateThermal,
        DiracTerm::StateVacuum,
        DiracTerm::BulkVacuum,
        DiracTerm::BulkThermal,
        DiracTerm::BoundaryThermal,
    ];

    fn is_time_dependent(self) -> bool {
        self != DiracTerm::BoundaryThermal
    }

    fn is_vacuum(self) -> bool {
        matches!(self, DiracTerm::StateVacuum | DiracTerm::BulkVacuum)
    }
}

/// Coefficient of each channel of `term`, overall sign included, before the
/// trace and the 1/(4ω_pω_k) measure.
pub fn term_coefficients(term: DiracTerm, omega_p: f64, omega_k: f64, beta: f64) -> [f64; 4] {
    let dd = fermi_divided(beta, omega_p, omega_k);
    let sum = omega_p + omega_k;
    let fs = (fermi(beta, omega_p) + fermi(beta, omega_k)) / sum;
    match term {
        DiracTerm::StateThermal | DiracTerm::BoundaryThermal => [dd, fs, fs, dd],
        DiracTerm::StateVacuum => [0.0, -1.0 / sum, -1.0 / sum, 0.0],
        DiracTerm::BulkVacuum => [0.0, 1.0 / sum, 1.0 / sum, 0.0],
        DiracTerm::BulkThermal => [-dd, -fs, -fs, -dd],
    }
}

/// Relative residuals of (state vacuum + bulk vacuum) and (state thermal + bulk thermal), channel by channel.
pub fn cancellation_residuals(omega_p: f64, omega_k: f64, beta: f64) -> [f64; 2] {
    let pair = |a: DiracTerm, b: DiracTerm| {
        let (x, y) = (term_coefficients(a, omega_p, omega_k, beta), term_coefficients(b, omega_p, omega_k, beta));
        let size = x.iter().chain(&y).fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
        x.iter().zip(&y).fold(0.0f64, |r, (u, v)| r.max((u + v).abs())) / size
    };
    [pair(DiracTerm::StateVacuum, DiracTerm::BulkVacuum), pair(DiracTerm::StateThermal, DiracTerm::BulkThermal)]
}

const GL5_X: [f64; 5] = [0.0, -0.538_469_310_105_683, 0.538_469_310_105_683, -0.906_179_845_938_664, 0.906_179_845_938_664];
const GL5_W: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Cumulative weights H_j(s) = ∫₀^s q^{2j+1} ĝ(q) sinc(qr) dq for j = 0, 1, on a
/// uniform grid with cubic Hermite interpolation.
struct MomentTable {
    step: f64,
    qmax: f64,
    // per node: H₀, H₁, H₀', H₁'
    nodes: Vec<[f64; 4]>,
}

impl MomentTable {
    fn build(phi: &dyn Fn(f64) -> Result<f64>, r: f64, qmax: f64) -> Result<Self> {
        let n = (2048.0f64).max((qmax * r * 64.0).ceil()) as usize;
        let step = qmax / n as f64;
        let deriv = |q: f64, v: f64| {
            let w = q * v * sinc(q * r);
            [w, w * q * q]
        };
        let mut nodes = Vec::with_capacity(n + 1);
        let mut acc = [0.0, 0.0];
        let d0 = deriv(0.0, phi(0.0)?);
        nodes.push([0.0, 0.0, d0[0], d0[1]]);
        for i in 0..n {
            let (a, b) = (i as f64 * step, (i + 1) as f64 * step);
            let (mid, half) = (0.5 * (a + b), 0.5 * step);
            for (x, w) in GL5_X.iter().zip(GL5_W) {
                let q = mid + half * x;
                let d = deriv(q, phi(q)?);
                acc[0] += w * half * d[0];
                acc[1] += w * half * d[1];
            }
            let d = deriv(b, phi(b)?);
            nodes.push([acc[0], acc[1], d[0], d[1]]);
        }
        Ok(Self { step, qmax, nodes })
    }

    fn at(&self, s: f64) -> [f64; 2] {
        if s >= self.qmax {
            let last = self.nodes[self.nodes.len() - 1];
            return [last[0], last[1]];
        }
        let u = s / self.step;
        let i = (u.floor() as usize).min(self.nodes.len() - 2);
        let x = u - i as f64;
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        let h00 = (1.0 + 2.0 * x) * (1.0 - x) * (1.0 - x);
        let h10 = x * (1.0 - x) * (1.0 - x);
        let h01 = x * x * (3.0 - 2.0 * x);
        let h11 = x * x * (x - 1.0);
        let f = |j: usize| h00 * a[j] + h10 * self.step * a[j + 2] + h01 * b[j] + h11 * self.step * b[j + 2];
        [f(0), f(1)]
    }

    /// Weights between |p − k| and p + k.
    fn band(&self, p: f64, k: f64) -> [f64; 2] {
        let (hi, lo) = (self.at(p + k), self.at((p - k).abs()));
        [hi[0] - lo[0], hi[1] - lo[1]]
    }
}

/// Spherically symmetric ĝ(q) for g = h A₀, and the momentum past which it is negligible.
struct Source {
    phi: Box<dyn Fn(f64) -> Result<f64>>,
    qmax: f64,
}

fn source(pot: &ExternalPotential, cutoff: SpatialCutoff, m: f64, rel_tol: f64) -> Result<Source> {
    match (&pot.kind, cutoff) {
        (PotentialKind::ScalarUniform { value }, SpatialCutoff::Gaussian { width }) => {
            let value = *value;
            Ok(Source { phi: Box::new(move |q| Ok(value * cutoff.hat(q))), qmax: 12.0 / width })
        }
        (PotentialKind::ScalarUniform { .. }, SpatialCutoff::Adiabatic) => {
            Err(Error::InvalidArgument("a uniform potential needs a spatial cutoff".into()))
        }
        (PotentialKind::ScalarGeneral(a0), _) => {
            let dirs = [[0.0, 0.0, 0.7], [0.7, 0.0, 0.0], [0.0, 0.42, 0.56]];
            let base = a0(dirs[0]);
            if dirs[1..].iter().any(|&d| (a0(d) - base).norm() > 1e-12 * base.norm().max(1e-300)) {
                return Err(Error::InvalidArgument("potential is not spherically symmetric".into()));
            }
            let a0 = a0.clone();
            let radial = move |q: f64| a0([0.0, 0.0, q]);
            let qmax = potential_extent(&radial, cutoff, m);
            let phi: Box<dyn Fn(f64) -> Result<f64>> = match cutoff {
                SpatialCutoff::Adiabatic => Box::new(move |q| Ok(radial(q).re)),
                SpatialCutoff::Gaussian { width } => {
                    Box::new(move |q| Ok(gaussian_convolution(&radial, width, q, rel_tol)?.re))
                }
            };
            Ok(Source { phi, qmax })
        }
        _ => Err(Error::InvalidArgument("a static scalar potential A₀ is required".into())),
    }
}

fn check_inputs(params: &ThermalParams, rel_tol: f64) -> Result<()> {
    if !(rel_tol > 1e-14 && rel_tol < 1e-2) {
        return Err(Error::InvalidTolerance(rel_tol));
    }
    if !(params.mass > 0.0) {
        return Err(Error::InvalidMass(format!("Dirac mass must be positive, got {}", params.mass)));
    }
    Ok(())
}

/// 8π² ∫₀^∞ dp ∫ dk p k body(p, k, band weights), over the band |p − k| ≤ qmax.
///
/// `floor` is an absolute accuracy, in units of the unscaled double integral,
/// below which refinement stops; 0 asks for `rel_tol` alone.
fn band_integral(
    table: &MomentTable,
    rel_tol: f64,
    floor: f64,
    panel: f64,
    body: &(dyn Fn(f64, f64, [f64; 2]) -> Complex64 + Sync),
) -> Result<Complex64> {
    let point = |p: f64, d: f64| {
        let k = p + d;
        body(p, k, table.band(p, k)) * (p * k)
    };
    // coarse sweep for an absolute floor on the inner integrals
    let mut scale: f64 = 0.0;
    for i in 0..40 {
        let p = (i as f64 + 0.5) * 0.5 * panel;
        for j in 0..21 {
            let d = -p.min(table.qmax) + (p.min(table.qmax) + table.qmax) * (j as f64 + 0.5) / 21.0;
            scale = scale.max(point(p, d).norm());
        }
    }
    let reach = 40.0 * panel;
    let inner_abs = (rel_tol * 1e-4 * scale * table.qmax).max(1e-2 * floor / reach);
    let err = RefCell::new(None);
    let local = Cell::new(0.0f64);
    let inner = |p: f64| -> Complex64 {
        if err.borrow().is_some() {
            return Complex64::from(0.0);
        }
        let f = |d: f64| point(p, d);
        let lo = -p.min(table.qmax);
        let run = || -> Result<Complex64> {
            let neg = if lo < 0.0 { integrate_adaptive(f, lo, 0.0, inner_abs, rel_tol * 0.1)?.value } else { 0.0.into() };
            Ok(neg + integrate_adaptive(f, 0.0, table.qmax, inner_abs, rel_tol * 0.1)?.value)
        };
        match run() {
            Ok(v) => {
                local.set(local.get().max(v.norm()));
                v
            }
            Err(e) => {
                *err.borrow_mut() = Some(e);
                Complex64::from(0.0)
            }
        }
    };
    let (mut total, mut peak, mut quiet, mut a) = (Complex64::from(0.0), 0.0f64, 0, 0.0);
    for _ in 0..100_000 {
        local.set(0.0);
        let outer_abs = (rel_tol * 1e-3 * peak * panel).max(1e-2 * floor * panel / reach);
        total += integrate_adaptive(inner, a, a + panel, outer_abs, rel_tol * 1e-2)?.value;
        if let Some(e) = err.borrow_mut().take() {
            return Err(e);
        }
        peak = peak.max(local.get());
        let negligible = local.get() * reach < 1e-2 * floor || local.get() < rel_tol * 1e-2 * peak;
        quiet = if !(peak > 0.0) || negligible { quiet + 1 } else { 0 };
        a += panel;
        if quiet >= 3 {
            return Ok(total * (8.0 * PI * PI));
        }
    }
    Err(Error::NonConvergent("momentum integral did not terminate".into()))
}

fn prefactor(pot: &ExternalPotential) -> f64 {
    pot.coupling * pot.coupling / (2.0 * PI).powi(6)
}

fn term_on_table(
    term: DiracTerm,
    t: f64,
    table: &MomentTable,
    params: &ThermalParams,
    chi: &SwitchFunction,
    rel_tol: f64,
    floor: f64,
) -> Result<Complex64> {
    let (m, beta) = (params.mass, params.beta);
    if beta.is_infinite() && !term.is_vacuum() {
        return Ok(0.0.into());
    }
    let body = |p: f64, k: f64, w: [f64; 2]| -> Complex64 {
        let (wp, wk) = ((p * p + m * m).sqrt(), (k * k + m * m).sqrt());
        let c = term_coefficients(term, wp, wk, beta);
        // χ̇̂(−ν) e^{iνt} for ν = ω_p − ω_k and ν = ω_p + ω_k; the other two are conjugates
        let phases = if term.is_time_dependent() {
            let (nd, ns) = (wp - wk, wp + wk);
            let a = if c[0] != 0.0 { chi.chi_dot_hat(-nd) * Complex64::from_polar(1.0, nd * t) } else { 0.0.into() };
            let b = chi.chi_dot_hat(-ns) * Complex64::from_polar(1.0, ns * t);
            [a, b, b.conj(), a.conj()]
        } else {
            [Complex64::from(1.0); 4]
        };
        let mut total = Complex64::from(0.0);
        for (i, &(sp, sk)) in DIRAC_MODES.iter().enumerate() {
            if c[i] == 0.0 {
                continue;
            }
            // trace is linear in q²: T₀ w₀ − 2 w₁
            let tr = mode_trace_radial(sp, sk, wp, wk, 0.0) * w[0] - 2.0 * w[1];
            total += phases[i] * (c[i] * tr);
        }
        total / (4.0 * wp * wk)
    };
    let panel = (if term.is_time_dependent() { 2.0 } else { 4.0 }) / beta.clamp(0.25, 1.0);
    band_integral(table, rel_tol, floor, panel, &body)
}

fn prepare(
    x: &SpacetimePoint,
    pot: &ExternalPotential,
    cutoff: SpatialCutoff,
    params: &ThermalParams,
    rel_tol: f64,
) -> Result<MomentTable> {
    check_inputs(params, rel_tol)?;
    let src = source(pot, cutoff, params.mass, rel_tol)?;
    MomentTable::build(&src.phi, norm(x.x), src.qmax)
}

fn check_switch(x: &SpacetimePoint, chi: &SwitchFunction) -> Result<()> {
    if chi.is_sharp() {
        return Err(Error::InvalidArgument("the state correction needs a smooth switch-on".into()));
    }
    if x.t < -chi.epsilon {
        return Err(Error::InvalidArgument(format!("t = {} precedes the end of the switch-on", x.t)));
    }
    Ok(())
}

/// One piece of the first-order ⟨j⁰(x)⟩ on its own.
pub fn dirac_term(
    term: DiracTerm,
    x: &SpacetimePoint,
    pot: &ExternalPotential,
    cutoff: SpatialCutoff,
    params: &ThermalParams,
    chi: &SwitchFunction,
    rel_tol: f64,
) -> Result<Complex64> {
    check_switch(x, chi)?;
    let table = prepare(x, pot, cutoff, params, rel_tol)?;
    if pot.coupling == 0.0 {
        return Ok(0.0.into());
    }
    Ok(term_on_table(term, x.t, &table, params, chi, rel_tol, 0.0)? * prefactor(pot))
}

/// First-order correction to ⟨j⁰(x)⟩ coming from the interacting KMS state.
///
/// The overall sign is the one under which it cancels the bulk terms of the
/// Bogoliubov expansion channel by channel.
pub fn current_state_correction(
    x: &SpacetimePoint,
    pot: &ExternalPotential,
    cutoff: SpatialCutoff,
    params: &ThermalParams,
    chi: &SwitchFunction,
    rel_tol: f64,
) -> Result<Complex64> {
    if params.beta.is_infinite() {
        return Err(Error::InvalidArgument("the state correction needs a finite beta".into()));
    }
    check_switch(x, chi)?;
    let table = prepare(x, pot, cutoff, params, rel_tol)?;
    if pot.coupling == 0.0 {
        return Ok(0.0.into());
    }
    let th = term_on_table(DiracTerm::StateThermal, x.t, &table, params, chi, rel_tol, 0.0)?;
    let vac = term_on_table(DiracTerm::StateVacuum, x.t, &table, params, chi, rel_tol, 0.0)?;
    Ok((th + vac) * prefactor(pot))
}

/// s1(y) = sinc′(y)/y and sinc″(y), series near zero.
fn sinc_derivs(y: f64) -> (f64, f64) {
    let s1 = if y < 0.5 {
        let (mut term, mut sum) = (1.0, 0.0);
        let y2 = y * y;
        let mut fact = 6.0;
        for n in 1..10 {
            let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
            sum += sign * 2.0 * n as f64 * term / fact;
            term *= y2;
            fact *= ((2 * n + 2) * (2 * n + 3)) as f64;
        }
        sum
    } else {
        dsinc(y) / y
    };
    (s1, -sinc(y) - 2.0 * s1)
}

/// a₀ hA⁰ + a₁·∇(hA⁰) + a₂:∇∇(hA⁰) at x, with A⁰ = −A₀.
fn renormalization_polynomial(
    x: &SpacetimePoint,
    src: &Source,
    renorm: &RenormalizationConstants,
    rel_tol: f64,
) -> Result<f64> {
    let r = norm(x.x);
    let c = 4.0 * PI / (2.0 * PI).powi(3);
    let err = RefCell::new(None);
    let moment = |w: &dyn Fn(f64) -> f64| -> Result<f64> {
        let f = |q: f64| {
            if err.borrow().is_some() {
                return Complex64::from(0.0);
            }
            match (src.phi)(q) {
                Ok(v) => Complex64::from(v * w(q)),
                Err(e) => {
                    *err.borrow_mut() = Some(e);
                    Complex64::from(0.0)
                }
            }
        };
        let v = integrate_adaptive(f, 0.0, src.qmax, 0.0, rel_tol * 0.1)?.value.re * c;
        match err.borrow_mut().take() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    };
    let g = moment(&|q| q * q * sinc(q * r))?;
    let needs_grad = renorm.a1.iter().any(|&v| v != 0.0) || renorm.a2.iter().flatten().any(|&v| v != 0.0);
    let mut poly = renorm.a0 * g;
    if needs_grad {
        // g(r) radial: ∇g = G′ x̂, ∂i∂j g = G″ x̂ix̂j + (G′/r)(δij − x̂ix̂j)
        let g1_over_r = moment(&|q| q.powi(4) * sinc_derivs(q * r).0)?;
        let g2 = moment(&|q| q.powi(4) * sinc_derivs(q * r).1)?;
        let g1 = g1_over_r * r;
        let dir = if r > 0.0 { [x.x[0] / r, x.x[1] / r, x.x[2] / r] } else { [0.0; 3] };
        for i in 0..3 {
            poly += renorm.a1[i] * g1 * dir[i];
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                let hess = g2 * dir[i] * dir[j] + g1_over_r * (delta - dir[i] * dir[j]);
                poly += renorm.a2[i][j] * hess;
            }
        }
    }
    // the polynomial multiplies hA⁰ = −g
    Ok(-poly)
}

/// Time-invariant first-order ⟨j⁰(x)⟩ in closed form, plus the local
/// renormalization polynomial.
pub fn current_expectation(
    x: &SpacetimePoint,
    pot: &ExternalPotential,
    cutoff: SpatialCutoff,
    params: &ThermalParams,
    renorm: &RenormalizationConstants,
    rel_tol: f64,
) -> Result<f64> {
    check_inputs(params, rel_tol)?;
    renorm.validate()?;
    let src = source(pot, cutoff, params.mass, rel_tol)?;
    let e2 = pot.coupling * pot.coupling;
    let local = 4.0 * e2 * renormalization_polynomial(x, &src, renorm, rel_tol)?;
    if params.beta.is_infinite() || e2 == 0.0 {
        return Ok(local);
    }
    let table = MomentTable::build(&src.phi, norm(x.x), src.qmax)?;
    let (m, beta) = (params.mass, params.beta);
    // [F(ω_p) − F(ω_k)]/(ω_p² − ω_k²) with F(ω) = (ω² + m² + p·k) f(ω)/ω, split as D₀ + q² D₁
    let body = |p: f64, k: f64, w: [f64; 2]| -> Complex64 {
        let (wp, wk) = ((p * p + m * m).sqrt(), (k * k + m * m).sqrt());
        let (fp, fk) = (fermi(beta, wp), fermi(beta, wk));
        let dd = fermi_divided(beta, wp, wk);
        let b = -dd / wp - fk / (wp * wk);
        let d0 = 0.5 * (p * p + k * k);
        let sum = wp + wk;
        let dd0 = (fp - wk * dd + (m * m + d0) * b) / sum;
        let dd1 = -0.5 * b / sum;
        Complex64::from(dd0 * w[0] + dd1 * w[1])
    };
    let v = band_integral(&table, rel_tol, 0.0, 4.0 / beta.clamp(0.25, 1.0), &body)?;
    // hA⁰ = −g
    Ok(-4.0 * prefactor(pot) * v.re + local)
}

/// ⟨j⁰(x)⟩ rebuilt from the individual pieces at the time x.t: state
/// correction, both bulk terms, the thermal boundary term and the local
/// polynomial. The vacuum-loop boundary term vanishes identically.
pub fn current_from_terms(
    x: &SpacetimePoint,
    pot: &ExternalPotential,
    cutoff: SpatialCutoff,
    params: &ThermalParams,
    chi: &SwitchFunction,
    renorm: &RenormalizationConstants,
    rel_tol: f64,
) -> Result<Complex64> {
    check_switch(x, chi)?;
    renorm.validate()?;
    check_inputs(params, rel_tol)?;
    let src = source(pot, cutoff, params.mass, rel_tol)?;
    let table = MomentTable::build(&src.phi, norm(x.x), src.qmax)?;
    let local = 4.0 * pot.coupling * pot.coupling * renormalization_polynomial(x, &src, renorm, rel_tol)?;
    let boundary = term_on_table(DiracTerm::BoundaryThermal, x.t, &table, params, chi, rel_tol, 0.0)?;
    // the time-dependent pieces only need to be resolved against the total
    let floor = rel_tol * boundary.norm() / (8.0 * PI * PI);
    let mut total = boundary;
    for term in DiracTerm::ALL.into_iter().filter(|t| t.is_time_dependent()) {
        total += term_on_table(term, x.t, &table, params, chi, rel_tol, floor)?;
    }
    Ok(total * prefactor(pot) + local)
}

/// δ-collapsed Källén–Lehmann weight of the Dirac loop at mass M.
///
/// Stored as Σ_a c_a L_a ⊗ R_a with the two spinor index pairs kept apart; the
/// angular average removes the terms odd in k.
#[derive(Debug, Clone)]
pub struct KlWeight {
    pub m2: f64,
    pub momentum: f64,
    pub terms: Vec<(f64, SpinorMatrix, SpinorMatrix)>,
}

impl KlWeight {
    /// Σ_a c_a tr(γ^μ L_a γ⁰ R_a), the contraction left in the boundary term.
    pub fn contract(&self, mu: usize) -> Complex64 {
        let g = GammaBasis::get();
        self.terms.iter().map(|(c, l, r)| (g.gamma[mu] * *l * g.gamma[0] * *r).trace() * *c).sum()
    }
}

pub fn kl_weight_dirac(m2: f64, m: f64) -> Result<KlWeight> {
    let threshold = 4.0 * m * m;
    if !(m2 >= threshold) {
        return Err(Error::BelowThreshold { m2, threshold });
    }
    let g = GammaBasis::get();
    let omega = 0.5 * m2.sqrt();
    let k = (0.25 * m2 - m * m).max(0.0).sqrt();
    // ∫d³k δ(2ω − M) = 2π k ω at the root
    let c = -(2.0 * PI * k * omega) / ((2.0 * PI).powi(3) * 4.0 * omega * omega);
    let mut terms = vec![(
        c,
        g.gamma[0].scale(omega.into()) + SpinorMatrix::scalar(m.into()),
        g.gamma[0].scale((-omega).into()) + SpinorMatrix::scalar(m.into()),
    )];
    // ⟨k_i k_j⟩ = k²δ_ij/3
    for i in 1..4 {
        terms.push((c * k * k / 3.0, g.gamma[i], g.gamma[i]));
    }
    Ok(KlWeight { m2, momentum: k, terms })
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The two addends J₊, J₋ of the leading secular term for A₀ = −E s₁ⁿ.
///
/// The w integral is rotated onto w = ±is, where e^{±2iw} decays; χ̇̂ stays
/// bounded there because supp χ̇ lies at negative times.
pub fn secular_probe_j_parts(
    n: u32,
    t: f64,
    field: f64,
    params: &ThermalParams,
    chi: &SwitchFunction,
    rel_tol: f64,
) -> Result<[Complex64; 2]> {
    if n % 2 == 1 {
        return Err(Error::InvalidArgument(format!("n = {n} is odd; the momentum integral vanishes")));
    }
    if !(2..=6).contains(&n) {
        return Err(Error::InvalidArgument(format!("n = {n} outside {{2, 4, 6}}")));
    }
    check_inputs(params, rel_tol)?;
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be positive")));
    }
    let l = n / 2;
    let (m, beta) = (params.mass, params.beta);
    let i = Complex64::i();
    let lf = l as f64;
    let pref = (if l.is_multiple_of(2) { 1.0 } else { -1.0 }) * field / ((2.0 * PI).powi(3) * 4f64.powi(l as i32)) * t.powf(lf - 1.5);
    let fermi_c = |z: Complex64| -> Complex64 {
        if beta.is_infinite() {
            return 0.0.into();
        }
        let e = (-beta * z).exp();
        e / (e + 1.0)
    };
    let mut out = [Complex64::from(0.0); 2];
    for (slot, sigma) in [1.0, -1.0].into_iter().enumerate() {
        // w = σ i s, dw = σ i ds, e^{2σiw} = e^{−2s}
        let body = |s: f64| -> Complex64 {
            let w = i * (sigma * s);
            let z = w / t + m;
            let base = w.powf(lf + 0.5) * z.powi(1 - 2 * l as i32) * (w / t + 2.0 * m).powf(lf + 0.5) * fermi_c(z);
            let arg = z * (-2.0 * sigma);
            let mut deriv = Complex64::from(0.0);
            for j in 0..=2 * l {
                let chi_j = chi.chi_dot_hat_deriv(arg, j);
                deriv += chi_j
                    * binomial(2 * l, j)
                    * (-2.0 * sigma / t).powi(j as i32)
                    * (2.0 * i * sigma).powu(2 * l - j);
            }
            base * deriv * (-2.0 * s).exp() * (i * sigma)
        };
        let est = integrate_adaptive(body, 0.0, 40.0, 0.0, rel_tol)?;
        out[slot] = est.value * Complex64::from_polar(pref, 2.0 * sigma * m * t);
    }
    Ok(out)
}

/// J_{t,1} = J₊ + J₋.
pub fn secular_probe_j(
    n: u32,
    t: f64,
    field: f64,
    params: &ThermalParams,
    chi: &SwitchFunction,
    rel_tol: f64,
) -> Result<Complex64> {
    let [a, b] = secular_probe_j_parts(n, t, field, params, chi, rel_tol)?;
    Ok(a + b)
}
