//! Free two-point functions of the scalar and Dirac fields, in the vacuum and
//! in thermal equilibrium, evaluated through one-dimensional radial integrals.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_radial_oscillatory, Decay, RadialIntegrand, RadialKernel};
use crate::real::Real;
use crate::spacetime::SpacetimePoint;
use crate::spinor::{GammaBasis, SpinorMatrix};

const TWO_PI3: f64 = 248.050_213_442_398_56; // (2π)³

/// Inverse temperature and mass. `beta = ∞` selects the vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    #[serde(serialize_with = "ser_beta", deserialize_with = "de_beta")]
    pub beta: f64,
    pub mass: f64,
}

fn ser_beta<S: Serializer>(b: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if b.is_infinite() {
        s.serialize_none()
    } else {
        s.serialize_f64(*b)
    }
}

fn de_beta<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl ThermalParams {
    pub fn new(beta: f64, mass: f64) -> Self {
        Self { beta, mass }
    }

    pub fn vacuum(mass: f64) -> Self {
        Self { beta: f64::INFINITY, mass }
    }

    pub fn is_vacuum(&self) -> bool {
        self.beta.is_infinite()
    }

    pub fn omega(&self, p: f64) -> f64 {
        (p * p + self.mass * self.mass).sqrt()
    }

    pub fn occ(&self, omega: f64) -> OccupationFactors<f64> {
        occupation_factors(self.beta, omega)
    }

    /// Momentum scale of thermal amplitudes.
    pub fn momentum_scale(&self) -> f64 {
        if self.is_vacuum() {
            self.mass
        } else {
            self.mass.max(1.0 / self.beta)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationFactors<T> {
    /// 1/(1 − e^{−βω})
    pub bose_plus: T,
    /// 1/(e^{βω} − 1)
    pub bose_minus: T,
    /// 1/(1 + e^{βω})
    pub fermi: T,
}

/// Bose and Fermi factors at inverse temperature β (may be infinite).
pub fn occupation_factors<T: Real>(beta: T, omega: T) -> OccupationFactors<T> {
    if beta.is_infinite() {
        return OccupationFactors { bose_plus: T::one(), bose_minus: T::zero(), fermi: T::zero() };
    }
    let x = beta * omega;
    let bose_minus = T::one() / x.exp_m1();
    let e = (-x).exp();
    OccupationFactors { bose_plus: T::one() + bose_minus, bose_minus, fermi: e / (T::one() + e) }
}

pub fn occupation(params: &ThermalParams, omega: f64) -> Result<OccupationFactors<f64>> {
    if !(omega > 0.0) {
        return Err(Error::NonPositiveEnergy(omega));
    }
    Ok(params.occ(omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorKind {
    ScalarVacuum,
    ScalarKms,
    ScalarPauliJordan,
    ScalarRetarded,
    ScalarAdvanced,
    ScalarFeynman,
    DiracPlus,
    DiracMinus,
    DiracKmsPlus,
    DiracKmsMinus,
    DiracPauliJordan,
    DiracFeynman,
    FermiSmoothPart,
}

impl PropagatorKind {
    pub fn is_dirac(self) -> bool {
        !matches!(
            self,
            Self::ScalarVacuum
                | Self::ScalarKms
                | Self::ScalarPauliJordan
                | Self::ScalarRetarded
                | Self::ScalarAdvanced
                | Self::ScalarFeynman
        )
    }

    fn is_smooth(self) -> bool {
        matches!(self, Self::FermiSmoothPart)
    }
}

/// (1/(2π)³) ∫d³p e^{ip·z} a(ω) e^{iσωt}, with a(ω) multiplied by p̂·r̂ p when
/// `kernel` is [`RadialKernel::DSinc`] (the factor −i is left to the caller).
fn fourier3(
    a: &(dyn Fn(f64) -> f64 + Sync),
    decay: Decay,
    sigma: i32,
    t: f64,
    r: f64,
    kernel: RadialKernel,
    p: &ThermalParams,
    tol: f64,
) -> Result<Complex64> {
    let m = p.mass;
    let amp = move |q: f64| {
        let w = (q * q + m * m).sqrt();
        let extra = if kernel == RadialKernel::DSinc { q } else { 1.0 };
        Complex64::new(a(w) * extra, 0.0)
    };
    // a signed time is handled by flipping the phase
    let (sig, tt) = if t < 0.0 { (-sigma, -t) } else { (sigma, t) };
    let g = RadialIntegrand::new(&amp, m, tt)
        .sign(sig)
        .kernel(kernel)
        .decay(decay)
        .scale(p.momentum_scale());
    let v = integrate_radial_oscillatory(&g, r, tol)?;
    Ok(v.value * (4.0 * std::f64::consts::PI / TWO_PI3))
}

fn check_light_cone(t: f64, r: f64) -> Result<()> {
    let s = (t * t - r * r).abs();
    if s < 1e-6 {
        Err(Error::SingularSeparation(s))
    } else {
        Ok(())
    }
}

/// ω₂(z) for the given kind, z = x − y.
pub fn scalar_two_point(
    kind: PropagatorKind,
    params: &ThermalParams,
    x: &SpacetimePoint,
    y: &SpacetimePoint,
    rel_tol: f64,
) -> Result<Complex64> {
    let (t, r, _) = x.separation(y);
    scalar_at(kind, params, t, r, rel_tol)
}

fn scalar_at(kind: PropagatorKind, params: &ThermalParams, t: f64, r: f64, tol: f64) -> Result<Complex64> {
    check_light_cone(t, r)?;
    let half_inv = |w: f64| 0.5 / w;
    let vac = |sigma: i32| fourier3(&half_inv, Decay::Abel, sigma, t, r, RadialKernel::Sinc, params, tol);
    let beta = params.beta;
    let thermal = |w: f64| occupation_factors(beta, w).bose_minus / (2.0 * w);
    match kind {
        PropagatorKind::ScalarVacuum => vac(-1),
        PropagatorKind::ScalarKms => {
            if params.is_vacuum() {
                return Err(Error::InvalidArgument("KMS two-point function needs finite beta".into()));
            }
            // b⁺ = 1 + b⁻: vacuum piece plus a rapidly decaying thermal piece
            let th_m = fourier3(&thermal, Decay::Rapid, -1, t, r, RadialKernel::Sinc, params, tol)?;
            let th_p = fourier3(&thermal, Decay::Rapid, 1, t, r, RadialKernel::Sinc, params, tol)?;
            Ok(vac(-1)? + th_m + th_p)
        }
        PropagatorKind::ScalarPauliJordan => {
            if t == 0.0 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            // Δ = −∫ sin(ωt)/ω e^{ipz} = i(ω₂^∞(z) − ω₂^∞(−z))
            let e_p = fourier3(&half_inv, Decay::Abel, 1, t, r, RadialKernel::Sinc, params, tol)?;
            let e_m = vac(-1)?;
            Ok(Complex64::i() * (e_m - e_p))
        }
        PropagatorKind::ScalarRetarded => {
            if t > 0.0 {
                scalar_at(PropagatorKind::ScalarPauliJordan, params, t, r, tol)
            } else {
                Ok(Complex64::new(0.0, 0.0))
            }
        }
        PropagatorKind::ScalarAdvanced => {
            if t < 0.0 {
                Ok(-scalar_at(PropagatorKind::ScalarPauliJordan, params, t, r, tol)?)
            } else {
                Ok(Complex64::new(0.0, 0.0))
            }
        }
        PropagatorKind::ScalarFeynman => {
            let base = if params.is_vacuum() { PropagatorKind::ScalarVacuum } else { PropagatorKind::ScalarKms };
            scalar_at(base, params, t.abs(), r, tol)
        }
        _ => Err(Error::InvalidArgument(format!("{kind:?} is not a scalar kind"))),
    }
}

/// (1/(2π)³) ∫ d³p/(2ω) w(ω) (s₀ γ⁰ω + s₁ γ·p + m) e^{iσωt} e^{ip·z}.
fn dirac_term(
    w: &(dyn Fn(f64) -> f64 + Sync),
    decay: Decay,
    sigma: i32,
    s0: f64,
    s1: f64,
    t: f64,
    r: f64,
    rhat: [f64; 3],
    params: &ThermalParams,
    tol: f64,
) -> Result<SpinorMatrix> {
    let m = params.mass;
    let g = GammaBasis::get();
    let a0 = |om: f64| 0.5 * w(om);
    let am = |om: f64| 0.5 * w(om) / om;
    let i0 = fourier3(&a0, decay, sigma, t, r, RadialKernel::Sinc, params, tol)?;
    let im = fourier3(&am, decay, sigma, t, r, RadialKernel::Sinc, params, tol)?;
    let mut out = g.gamma[0].scale(i0 * s0) + SpinorMatrix::scalar(im * m);
    if r > 0.0 {
        // ∫d³p p_i f e^{ip·z} = −i r̂_i 4π ∫ p³ f sinc'(pr) dp
        let ip = fourier3(&am, decay, sigma, t, r, RadialKernel::DSinc, params, tol)?;
        let c = -Complex64::i() * ip * s1;
        for k in 0..3 {
            out = out + g.gamma[k + 1].scale(c * rhat[k]);
        }
    }
    Ok(out)
}

pub fn dirac_two_point(
    kind: PropagatorKind,
    params: &ThermalParams,
    x: &SpacetimePoint,
    y: &SpacetimePoint,
    rel_tol: f64,
) -> Result<SpinorMatrix> {
    let (t, r, rhat) = x.separation(y);
    dirac_at(kind, params, t, r, rhat, rel_tol)
}

fn dirac_at(kind: PropagatorKind, p: &ThermalParams, t: f64, r: f64, rhat: [f64; 3], tol: f64) -> Result<SpinorMatrix> {
    if !kind.is_smooth() {
        check_light_cone(t, r)?;
    }
    let one = |_: f64| 1.0;
    let beta = p.beta;
    let fermi = move |w: f64| occupation_factors(beta, w).fermi;
    let needs_beta = matches!(
        kind,
        PropagatorKind::DiracKmsPlus | PropagatorKind::DiracKmsMinus | PropagatorKind::FermiSmoothPart
    );
    if needs_beta && p.is_vacuum() {
        return Err(Error::InvalidArgument(format!("{kind:?} needs finite beta")));
    }
    let s_plus = || dirac_term(&one, Decay::Abel, -1, -1.0, -1.0, t, r, rhat, p, tol);
    let s_minus = || Ok::<_, Error>(-dirac_term(&one, Decay::Abel, 1, 1.0, -1.0, t, r, rhat, p, tol)?);
    let w_plus = || {
        let a = dirac_term(&fermi, Decay::Rapid, -1, -1.0, -1.0, t, r, rhat, p, tol)?;
        let b = dirac_term(&fermi, Decay::Rapid, 1, 1.0, -1.0, t, r, rhat, p, tol)?;
        Ok::<_, Error>(-(a + b))
    };
    match kind {
        PropagatorKind::DiracPlus => s_plus(),
        PropagatorKind::DiracMinus => s_minus(),
        PropagatorKind::FermiSmoothPart => w_plus(),
        PropagatorKind::DiracKmsPlus => Ok(s_plus()? + w_plus()?),
        PropagatorKind::DiracKmsMinus => Ok(s_minus()? - w_plus()?),
        PropagatorKind::DiracPauliJordan => Ok((s_plus()? + s_minus()?).scale(-Complex64::i())),
        PropagatorKind::DiracFeynman => {
            if t >= 0.0 {
                s_plus()
            } else {
                Ok(-s_minus()?)
            }
        }
        _ => Err(Error::InvalidArgument(format!("{kind:?} is not a Dirac kind"))),
    }
}

/// Samples (t, t^{3/2}|value(z)|) at z = (t, offset·ê₃); Dirac kinds use the
/// largest entry modulus.
pub fn decay_envelope(
    kind: PropagatorKind,
    params: &ThermalParams,
    t_grid: &[f64],
    spatial_offset: f64,
    rel_tol: f64,
) -> Result<Vec<(f64, f64)>> {
    use rayon::prelude::*;
    if let Some(&t) = t_grid.iter().find(|&&t| !(t > 1.0)) {
        return Err(Error::InvalidArgument(format!("decay envelope needs t > 1, got {t}")));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| t <= spatial_offset.abs()) {
        return Err(Error::InvalidArgument(format!("configuration at t = {t} is not timelike")));
    }
    t_grid
        .par_iter()
        .map(|&t| {
            let x = SpacetimePoint::new(t, [0.0, 0.0, spatial_offset]);
            let v = if kind.is_dirac() {
                dirac_two_point(kind, params, &x, &SpacetimePoint::ORIGIN, rel_tol)?.max_abs()
            } else {
                scalar_two_point(kind, params, &x, &SpacetimePoint::ORIGIN, rel_tol)?.norm()
            };
            Ok((t, t.powf(1.5) * v))
        })
        .collect()
}
