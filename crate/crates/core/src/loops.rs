//! Second-order loop diagram for a φⁿ self-interaction.
//!
//! The loop function Ŝ is the (n−1)-fold convolution of the one-particle
//! measure dμ(q) = d³q/(2ω)[(1+F)δ(q⁰−ω) + Fδ(q⁰+ω)], scaled by 2/π so that the
//! two-particle vacuum part equals the Källén-Lehmann weight √(1 − 4m²/s).
//! Ŝ is evaluated in closed form (n = 3, vacuum or KMS), by nested quadrature
//! (n = 4), or by Monte Carlo against a Gaussian window.
//!
//! The external legs are a retarded and an advanced propagator joined to the
//! loop through χh vertices with χ the sharp step. Only the channel pairing the
//! positive frequency of Δ_R with the negative frequency of Δ_A is evaluated.

use std::f64::consts::PI;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{fit_growth_exponent, integrate_adaptive, integrate_real, windowed_fourier, GrowthFit, Window};

const TWO_PI4: f64 = 1_558.545_456_544_039_6; // (2π)⁴
const MC_CHUNKS: usize = 64;

// ---------------------------------------------------------------------------
// state profile

#[derive(Clone)]
enum Occupation {
    Vacuum,
    Kms(f64),
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, cutoff: f64 },
}

/// Occupation profile F of a quasifree, translation invariant state.
#[derive(Clone)]
pub struct StateProfile {
    pub mass: f64,
    occupation: Occupation,
}

impl std::fmt::Debug for StateProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.occupation {
            Occupation::Vacuum => write!(f, "StateProfile::vacuum(m = {})", self.mass),
            Occupation::Kms(b) => write!(f, "StateProfile::kms(beta = {b}, m = {})", self.mass),
            Occupation::Custom { cutoff, .. } => {
                write!(f, "StateProfile::custom(m = {}, cutoff = {cutoff})", self.mass)
            }
        }
    }
}

impl StateProfile {
    pub fn vacuum(mass: f64) -> Result<Self> {
        check_mass(mass)?;
        Ok(Self { mass, occupation: Occupation::Vacuum })
    }

    /// F(ω) = 1/(e^{βω} − 1). `beta = ∞` gives the vacuum.
    pub fn kms(beta: f64, mass: f64) -> Result<Self> {
        check_mass(mass)?;
        if !(beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta = {beta} must be positive")));
        }
        if beta.is_infinite() {
            return Self::vacuum(mass);
        }
        Ok(Self { mass, occupation: Occupation::Kms(beta) })
    }

    /// Arbitrary F, treated as zero above the energy `cutoff`.
    /// Only the Monte Carlo and quadrature paths accept it.
    pub fn custom(mass: f64, f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, cutoff: f64) -> Result<Self> {
        check_mass(mass)?;
        if !(cutoff > mass) {
            return Err(Error::InvalidArgument(format!("cutoff {cutoff} must exceed the mass")));
        }
        Ok(Self { mass, occupation: Occupation::Custom { f, cutoff } })
    }

    pub fn is_vacuum(&self) -> bool {
        matches!(self.occupation, Occupation::Vacuum)
    }

    pub fn f(&self, w: f64) -> f64 {
        match &self.occupation {
            Occupation::Vacuum => 0.0,
            Occupation::Kms(b) => bose(*b, w),
            Occupation::Custom { f, cutoff } => {
                if w > *cutoff {
                    0.0
                } else {
                    f(w)
                }
            }
        }
    }

    /// Weight of the positive (`sign > 0`) or negative shell.
    pub fn occ(&self, sign: i8, w: f64) -> f64 {
        if sign > 0 {
            1.0 + self.f(w)
        } else {
            self.f(w)
        }
    }

    fn energy_scale(&self) -> f64 {
        match &self.occupation {
            Occupation::Vacuum => self.mass,
            Occupation::Kms(b) => self.mass.max(1.0 / b),
            Occupation::Custom { cutoff, .. } => self.mass.max(0.25 * (cutoff - self.mass)),
        }
    }

    /// Energy range beyond which occupations are negligible.
    fn tail(&self) -> f64 {
        match &self.occupation {
            Occupation::Vacuum => 0.0,
            Occupation::Kms(b) => 45.0 / b,
            Occupation::Custom { cutoff, .. } => cutoff - self.mass,
        }
    }
}

fn check_mass(m: f64) -> Result<()> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidMass(format!("loop mass must be positive, got {m}")))
    }
}

fn bose(beta: f64, w: f64) -> f64 {
    1.0 / (beta * w).exp_m1()
}

// ---------------------------------------------------------------------------
// closed forms and support

/// Källén-Lehmann weight of the φ³ vacuum loop, √(1 − 4m²/s) θ(√s − 2m).
/// A function of s only; the vacuum loop carries it on p⁰ > 0.
pub fn kl_weight_phi3_vacuum(p0: f64, pmag: f64, m: f64) -> f64 {
    let s = p0 * p0 - pmag * pmag;
    let thr = 4.0 * m * m;
    if s <= thr {
        return 0.0;
    }
    (1.0 - thr / s).sqrt()
}

/// Regions of momentum space carrying Ŝ: the cones s ≥ M² above and below
/// the origin, the closed spacelike region, or everything.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSupport {
    pub positive_shell: Option<f64>,
    pub negative_shell: Option<f64>,
    pub spacelike: bool,
    pub everywhere: bool,
}

impl SpectralSupport {
    pub const EMPTY: Self =
        Self { positive_shell: None, negative_shell: None, spacelike: false, everywhere: false };

    pub fn contains(&self, p0: f64, pmag: f64) -> bool {
        if self.everywhere {
            return true;
        }
        let s = p0 * p0 - pmag * pmag;
        let cone = |m: Option<f64>| m.is_some_and(|m| s >= m * m * (1.0 - 1e-12));
        (p0 > 0.0 && cone(self.positive_shell))
            || (p0 < 0.0 && cone(self.negative_shell))
            || (self.spacelike && s <= 0.0)
    }

    /// Whether (−ω_p, p) lies in the support, the condition for linear growth.
    pub fn meets_negative_shell(&self, pmag: f64, m: f64) -> bool {
        self.contains(-(pmag * pmag + m * m).sqrt(), pmag)
    }
}

/// Support of the n-particle convolution. With F ≢ 0 every sign pattern
/// contributes; patterns mixing both shells with three or more particles fill
/// all of momentum space.
pub fn declared_support(n: u32, profile: &StateProfile) -> Result<SpectralSupport> {
    check_order(n)?;
    let k = (n - 1) as f64;
    let m = profile.mass;
    if profile.is_vacuum() {
        return Ok(SpectralSupport { positive_shell: Some(k * m), ..SpectralSupport::EMPTY });
    }
    Ok(match n {
        3 => SpectralSupport {
            positive_shell: Some(2.0 * m),
            negative_shell: Some(2.0 * m),
            spacelike: true,
            everywhere: false,
        },
        _ => SpectralSupport { everywhere: true, ..SpectralSupport::EMPTY },
    })
}

fn check_order(n: u32) -> Result<()> {
    if n == 3 || n == 4 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("loop order n = {n} not in {{3, 4}}")))
    }
}

// ---------------------------------------------------------------------------
// two-body kernel

const PATTERNS2: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

/// ω₁ interval. `half` is kept separately so that short intervals keep their length.
#[derive(Debug, Clone, Copy)]
struct Span {
    lo: f64,
    hi: f64,
    half: f64,
}

impl Span {
    const EMPTY: Self = Self { lo: 0.0, hi: 0.0, half: 0.0 };

    fn between(a: f64, b: f64) -> Self {
        if b > a {
            Self { lo: a, hi: b, half: 0.5 * (b - a) }
        } else {
            Self::EMPTY
        }
    }

    fn centred(mid: f64, half: f64) -> Self {
        Self { lo: mid - half, hi: mid + half, half }
    }

    fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// ω₁ ranges on which two on-shell momenta with shell signs (s1, s2) add up to (p0, K).
fn pair_intervals(s1: i8, s2: i8, p0: f64, k: f64, m: f64) -> [Span; 2] {
    let s = p0 * p0 - k * k;
    let sf1 = s1 as f64;
    let (mut lo, mut hi) = (m, f64::INFINITY);
    if s1 == s2 {
        hi = hi.min(sf1 * p0 - m);
    } else {
        lo = lo.max(m + sf1 * p0);
    }
    let centre = 0.5 * sf1 * p0;
    let clip = |a: f64, b: f64| Span::between(a.max(lo), b.min(hi));
    if s > 0.0 {
        if s <= 4.0 * m * m {
            return [Span::EMPTY; 2];
        }
        let half = 0.5 * k * (1.0 - 4.0 * m * m / s).sqrt();
        if centre - half >= lo && centre + half <= hi {
            return [Span::centred(centre, half), Span::EMPTY];
        }
        [clip(centre - half, centre + half), Span::EMPTY]
    } else if s < 0.0 {
        let half = 0.5 * k * (1.0 - 4.0 * m * m / s).sqrt();
        [clip(f64::NEG_INFINITY, centre - half), clip(centre + half, f64::INFINITY)]
    } else {
        [Span::EMPTY; 2]
    }
}

fn phi(beta: f64, z: f64) -> f64 {
    (-(-beta * z).exp()).ln_1p() / beta
}

/// Primitive of F(x)F(c − x) divided by F(c), arranged so that no large terms cancel.
fn pair_bracket(beta: f64, c: f64, x: f64) -> f64 {
    let y = c - x;
    match (x >= 0.0, y >= 0.0) {
        (true, true) => x + phi(beta, x) - phi(beta, y),
        (true, false) => c + phi(beta, x) - phi(beta, -y),
        (false, true) => phi(beta, -x) - phi(beta, y),
        (false, false) => phi(beta, -x) + y - phi(beta, -y),
    }
}

const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// ∫ occ(s1, ω₁) occ(s2, ω₂) dω₁ over one interval, ω₂ = s2(p0 − s1ω₁).
fn pattern_integral(profile: &StateProfile, s1: i8, s2: i8, p0: f64, span: Span) -> Result<f64> {
    if !(span.half > 0.0) {
        return Ok(0.0);
    }
    let g = |w: f64| profile.occ(s1, w) * profile.occ(s2, (s2 as f64) * (p0 - (s1 as f64) * w));
    if profile.is_vacuum() {
        return Ok(if s1 > 0 && s2 > 0 { 2.0 * span.half } else { 0.0 });
    }
    if span.half < 1e-3 * profile.mass {
        let mid = span.mid();
        let v: f64 = GL8.iter().map(|&(x, w)| w * (g(mid - span.half * x) + g(mid + span.half * x))).sum();
        return Ok(span.half * v);
    }
    let (a, b) = (span.lo, span.hi);
    match &profile.occupation {
        Occupation::Kms(beta) if (beta * p0).abs() > 1e-6 => {
            // occ(s, ω) = −s F(−sω) and the two arguments add up to c = −p0
            let c = -p0;
            let fc = bose(*beta, c);
            let xa = -(s1 as f64) * a;
            let xb = -(s1 as f64) * b;
            Ok(-(s2 as f64) * fc * (pair_bracket(*beta, c, xb) - pair_bracket(*beta, c, xa)))
        }
        _ => {
            let b = b.min(a.max(profile.mass) + profile.tail() + p0.abs());
            Ok(integrate_real(g, a, b, 1e-300, 1e-10)?.0)
        }
    }
}

/// K·S₂(p0, K): the two-body density times |p|, finite as K → 0.
fn pair_weight(profile: &StateProfile, p0: f64, k: f64) -> Result<f64> {
    let m = profile.mass;
    let mut total = 0.0;
    for (s1, s2) in PATTERNS2 {
        if profile.is_vacuum() && (s1 < 0 || s2 < 0) {
            continue;
        }
        for iv in pair_intervals(s1, s2, p0, k, m) {
            total += pattern_integral(profile, s1, s2, p0, iv)?;
        }
    }
    Ok(total)
}

fn floor_p(pmag: f64, m: f64) -> f64 {
    pmag.abs().max(1e-12 * m)
}

/// Two-particle loop function Ŝ for n = 3.
pub fn two_body_density(profile: &StateProfile, p0: f64, pmag: f64) -> Result<f64> {
    let k = floor_p(pmag, profile.mass);
    Ok(pair_weight(profile, p0, k)? / k)
}

/// Pointwise Ŝ for n ∈ {3, 4}. Away from thresholds Ŝ is a function; for
/// n = 3 with F ≢ 0 the point mass at the origin is not represented.
pub fn spectral_density(n: u32, profile: &StateProfile, p0: f64, pmag: f64, rel_tol: f64) -> Result<f64> {
    check_order(n)?;
    if n == 3 {
        return two_body_density(profile, p0, pmag);
    }
    let m = profile.mass;
    let p = floor_p(pmag, m);
    let wmax = p0.abs() + p + m + profile.tail();
    let qmax = (wmax * wmax - m * m).sqrt();
    let inner = |pp0: f64, a: f64, b: f64| -> Result<f64> {
        let mut cuts = vec![a];
        for c in [pp0.abs(), (pp0 * pp0 - 4.0 * m * m).max(0.0).sqrt()] {
            if c > a && c < b {
                cuts.push(c);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.push(b);
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let mut err = None;
            let v = integrate_real(
                |kk: f64| match pair_weight(profile, pp0, kk) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                },
                w[0],
                w[1],
                1e-14,
                rel_tol,
            )?;
            if let Some(e) = err {
                return Err(e);
            }
            acc += v.0;
        }
        Ok(acc)
    };
    let mut total = 0.0;
    for s in [1i8, -1] {
        if profile.is_vacuum() && s < 0 {
            continue;
        }
        let mut err = None;
        let body = |q: f64| {
            let w = (q * q + m * m).sqrt();
            let occ = profile.occ(s, w);
            if occ == 0.0 {
                return 0.0;
            }
            match inner(p0 - s as f64 * w, (p - q).abs(), p + q) {
                Ok(v) => q / w * occ * v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        };
        let (v, _) = integrate_real(body, 0.0, qmax, 1e-14, rel_tol)?;
        if let Some(e) = err {
            return Err(e);
        }
        total += v;
    }
    Ok(PI / p * total)
}

// ---------------------------------------------------------------------------
// spectral functions

type Density = Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync>;

/// Ŝ as a callable density (p⁰, |p|) ↦ value together with its declared support.
#[derive(Clone)]
pub struct SpectralFunction {
    pub mass: f64,
    pub support: SpectralSupport,
    eval: Density,
}

impl std::fmt::Debug for SpectralFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralFunction").field("mass", &self.mass).field("support", &self.support).finish()
    }
}

impl SpectralFunction {
    pub fn zero(mass: f64) -> Self {
        Self { mass, support: SpectralSupport::EMPTY, eval: Arc::new(|_, _| Ok(0.0)) }
    }

    pub fn phi3_vacuum(mass: f64) -> Self {
        Self {
            mass,
            support: SpectralSupport { positive_shell: Some(2.0 * mass), ..SpectralSupport::EMPTY },
            eval: Arc::new(move |p0, p| Ok(if p0 > 0.0 { kl_weight_phi3_vacuum(p0, p, mass) } else { 0.0 })),
        }
    }

    pub fn from_profile(n: u32, profile: StateProfile, rel_tol: f64) -> Result<Self> {
        let support = declared_support(n, &profile)?;
        let mass = profile.mass;
        Ok(Self { mass, support, eval: Arc::new(move |p0, p| spectral_density(n, &profile, p0, p, rel_tol)) })
    }

    pub fn custom(mass: f64, support: SpectralSupport, eval: Density) -> Self {
        Self { mass, support, eval }
    }

    /// Same function, caching values by the exact argument bits.
    pub fn memoized(&self) -> Self {
        let inner = self.eval.clone();
        let cache: Arc<Mutex<HashMap<(u64, u64), f64>>> = Arc::default();
        let eval: Density = Arc::new(move |p0: f64, p: f64| {
            let key = (p0.to_bits(), p.to_bits());
            if let Some(v) = cache.lock().expect("cache poisoned").get(&key) {
                return Ok(*v);
            }
            let v = inner(p0, p)?;
            cache.lock().expect("cache poisoned").insert(key, v);
            Ok(v)
        });
        Self { mass: self.mass, support: self.support, eval }
    }

    pub fn evaluate(&self, p0: f64, pmag: f64) -> Result<f64> {
        (self.eval)(p0, pmag)
    }
}

// ---------------------------------------------------------------------------
// windows and Monte Carlo

/// Normalised Euclidean Gaussian in (p⁰, p) of standard deviation `width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralWindow {
    pub p0: f64,
    pub p: [f64; 3],
    pub width: f64,
}

impl SpectralWindow {
    pub fn new(p0: f64, p: [f64; 3], width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidArgument(format!("window width {width} must be positive")));
        }
        Ok(Self { p0, p, width })
    }

    fn pmag(&self) -> f64 {
        crate::spacetime::norm(self.p)
    }
}

fn gauss1(x: f64, sigma: f64) -> f64 {
    (-0.5 * x * x / (sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// Direction average of the spatial window at radius `p`.
fn radial_window(p: f64, c: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let norm = (2.0 * PI * s2).powf(-1.5);
    let x = 2.0 * p * c / s2;
    let shell = if x < 1e-12 { 1.0 } else { -(-x).exp_m1() / x };
    norm * (-0.5 * (p - c) * (p - c) / s2).exp() * shell
}

/// ∫d⁴p D(p⁰, |p|) W(p) for an isotropic density, by nested quadrature.
/// `kinks` lists invariant masses √s at which D is not smooth.
pub fn window_average<D>(density: D, window: &SpectralWindow, kinks: &[f64], rel_tol: f64) -> Result<f64>
where
    D: Fn(f64, f64) -> Result<f64>,
{
    let sig = window.width;
    let c = window.pmag();
    let (plo, phi_) = ((c - 8.0 * sig).max(0.0), c + 8.0 * sig);
    let mut err = None;
    let outer = |p0: f64| {
        let mut cuts = vec![plo];
        for &mk in kinks {
            let s = p0 * p0 - mk * mk;
            if s > 0.0 {
                let k = s.sqrt();
                if k > plo && k < phi_ {
                    cuts.push(k);
                }
            }
        }
        if p0.abs() > plo && p0.abs() < phi_ {
            cuts.push(p0.abs());
        }
        cuts.sort_by(f64::total_cmp);
        cuts.push(phi_);
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let r = integrate_real(
                |p: f64| match density(p0, p) {
                    Ok(v) => 4.0 * PI * p * p * v * radial_window(p, c, sig),
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                },
                w[0],
                w[1],
                1e-16,
                rel_tol,
            );
            match r {
                Ok((v, _)) => acc += v,
                Err(e) => {
                    err.get_or_insert(e);
                }
            }
        }
        acc * gauss1(p0 - window.p0, sig)
    };
    let (v, _) = integrate_real(outer, window.p0 - 8.0 * sig, window.p0 + 8.0 * sig, 1e-16, rel_tol)?;
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self { samples: 1_000_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of ∫d⁴p Ŝ(p) W(p) for the (n−1)-fold convolution.
///
/// The first n−2 momenta come from an exponential proposal on ℝ³. The last one
/// absorbs the spatial window exactly, and all shell sign patterns are summed
/// per draw, so only the energy window is sampled.
pub fn spectral_numeric(
    n: u32,
    profile: &StateProfile,
    window: &SpectralWindow,
    mc: MonteCarlo,
) -> Result<SpectralEstimate> {
    check_order(n)?;
    if mc.samples < MC_CHUNKS {
        return Err(Error::InsufficientSamples { needed: MC_CHUNKS, got: mc.samples });
    }
    let k = (n - 1) as usize;
    let m = profile.mass;
    let sig = window.width;
    let scale = profile.energy_scale().max((window.p0.abs() + window.pmag()) / k as f64);
    let proposal = Gamma::new(3.0, scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let g_norm = 1.0 / (8.0 * PI * scale.powi(3));
    let per_chunk = mc.samples / MC_CHUNKS;
    let patterns: Vec<Vec<i8>> = (0..1usize << k)
        .map(|bits| (0..k).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect())
        .filter(|s: &Vec<i8>| !profile.is_vacuum() || s.iter().all(|&x| x > 0))
        .collect();
    let sums: Vec<(f64, f64)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(mc.seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut qs = vec![[0.0f64; 3]; k];
            let mut ws = vec![0.0f64; k];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..per_chunk {
                let mut jac = 2.0 / PI;
                let mut rest = window.p;
                for i in 0..k - 1 {
                    let r: f64 = proposal.sample(&mut rng);
                    let dir: [f64; 3] = UnitSphere.sample(&mut rng);
                    let q = [r * dir[0], r * dir[1], r * dir[2]];
                    let w = (r * r + m * m).sqrt();
                    jac /= 2.0 * w * g_norm * (-r / scale).exp();
                    for d in 0..3 {
                        rest[d] -= q[d];
                    }
                    qs[i] = q;
                    ws[i] = w;
                }
                let mut last = rest;
                for v in last.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += sig * z;
                }
                let wl = (crate::spacetime::dot(last, last) + m * m).sqrt();
                qs[k - 1] = last;
                ws[k - 1] = wl;
                jac /= 2.0 * wl;
                let mut acc = 0.0;
                for pat in &patterns {
                    let mut occ = 1.0;
                    let mut e = 0.0;
                    for (sg, &w) in pat.iter().zip(ws.iter()) {
                        occ *= profile.occ(*sg, w);
                        e += *sg as f64 * w;
                    }
                    if occ != 0.0 {
                        acc += occ * gauss1(e - window.p0, sig);
                    }
                }
                let v = jac * acc;
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let total = (per_chunk * MC_CHUNKS) as f64;
    let s: f64 = sums.iter().map(|v| v.0).sum();
    let s2: f64 = sums.iter().map(|v| v.1).sum();
    let mean = s / total;
    let var = (s2 / total - mean * mean).max(0.0);
    let se = (var / total).sqrt();
    if !(mean.is_finite() && se.is_finite()) {
        return Err(Error::NonConvergent(format!("Monte Carlo variance not finite (mean {mean}, se {se})")));
    }
    Ok(SpectralEstimate { value: mean, std_error: se, samples: per_chunk * MC_CHUNKS })
}

// ---------------------------------------------------------------------------
// tabulated Ŝ near the negative shell

/// Geometry shared by the adiabatic and compact scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopOptions {
    pub coupling: f64,
    /// Width of the Gaussian spatial test functions f₁ = f₂.
    pub smearing_width: f64,
    /// Ŝ is multiplied by exp(−(p⁰ + ω_p)²/2Λ²) with Λ = `shell_window`.
    pub shell_window: f64,
    /// Tabulation range in units of Λ on each side of the shell.
    pub table_extent: f64,
    pub table_nodes: usize,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self { coupling: 1.0, smearing_width: 1.0, shell_window: 1.0, table_extent: 6.0, table_nodes: 97 }
    }
}

impl LoopOptions {
    fn validate(&self) -> Result<()> {
        let ok = self.coupling.is_finite()
            && self.smearing_width > 0.0
            && self.shell_window > 0.0
            && self.table_extent > 0.0
            && self.table_nodes >= 9
            && self.table_nodes % 2 == 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid loop options {self:?}")))
        }
    }

    fn f_hat(&self, p: f64) -> f64 {
        (-0.5 * p * p * self.smearing_width * self.smearing_width).exp()
    }
}

/// Vertex factor multiplying Ŝ in the adiabatic scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopVertex {
    Full,
    /// (p⁰)²/((p⁰)² + |p|² + 1), the part kept in the compact analysis.
    P0Squared,
}

impl LoopVertex {
    fn factor(self, p0: f64, p: f64) -> f64 {
        match self {
            Self::Full => 1.0,
            Self::P0Squared => p0 * p0 / (p0 * p0 + p * p + 1.0),
        }
    }
}

struct ShellTable {
    pmag: Vec<f64>,
    weights: Vec<f64>,
    omega: Vec<f64>,
    step: f64,
    half: usize,
    rows: Vec<Vec<f64>>,
}

fn trapezoid_weights(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: grid.len() });
    }
    if !(grid[0] >= 0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("momentum grid must be non-negative and increasing".into()));
    }
    let n = grid.len();
    Ok((0..n)
        .map(|i| {
            let l = if i > 0 { grid[i] - grid[i - 1] } else { 0.0 };
            let r = if i + 1 < n { grid[i + 1] - grid[i] } else { 0.0 };
            0.5 * (l + r)
        })
        .collect())
}

impl ShellTable {
    fn build(s: &SpectralFunction, opts: &LoopOptions, pmag_grid: &[f64]) -> Result<Self> {
        opts.validate()?;
        let weights = trapezoid_weights(pmag_grid)?;
        let m = s.mass;
        let lam = opts.shell_window;
        let half = opts.table_nodes / 2;
        let step = opts.table_extent * lam / half as f64;
        let omega: Vec<f64> = pmag_grid.iter().map(|p| (p * p + m * m).sqrt()).collect();
        let rows = pmag_grid
            .par_iter()
            .zip(omega.par_iter())
            .map(|(&p, &w)| {
                (0..opts.table_nodes)
                    .map(|j| {
                        let a = (j as f64 - half as f64) * step;
                        let taper = (-0.5 * a * a / (lam * lam)).exp();
                        Ok(s.evaluate(a - w, p)? * taper)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { pmag: pmag_grid.to_vec(), weights, omega, step, half, rows })
    }

    /// Catmull-Rom interpolation of row `i` at offset `a` from the shell.
    fn at(&self, i: usize, a: f64) -> f64 {
        let row = &self.rows[i];
        let x = a / self.step + self.half as f64;
        let n = row.len();
        if x <= 0.0 || x >= (n - 1) as f64 {
            return 0.0;
        }
        let j = (x.floor() as usize).min(n - 2);
        let u = x - j as f64;
        let y1 = row[j];
        let y2 = row[j + 1];
        let y0 = if j > 0 { row[j - 1] } else { 2.0 * y1 - y2 };
        let y3 = if j + 2 < n { row[j + 2] } else { 2.0 * y2 - y1 };
        let m1 = 0.5 * (y2 - y0);
        let m2 = 0.5 * (y3 - y1);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y1 + (u3 - 2.0 * u2 + u) * m1 + (-2.0 * u3 + 3.0 * u2) * y2 + (u3 - u2) * m2
    }

    fn peak(&self) -> f64 {
        self.rows.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Σ_i w_i 4πp_i² ∫ da Ŝ_i(a) kernel(i, a), node interval by node interval.
    fn pair<K>(&self, rel_tol: f64, scale: f64, mut kernel: K) -> Result<f64>
    where
        K: FnMut(usize, f64) -> f64,
    {
        let mut total = 0.0;
        let abs = rel_tol * 1e-3 * scale * self.step;
        for i in 0..self.pmag.len() {
            let p = self.pmag[i];
            let w = self.weights[i] * 4.0 * PI * p * p;
            if w == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for j in 0..2 * self.half {
                let a0 = (j as f64 - self.half as f64) * self.step;
                let (v, _) = integrate_real(|a| self.at(i, a) * kernel(i, a), a0, a0 + self.step, abs, rel_tol)?;
                acc += v;
            }
            total += w * acc;
        }
        Ok(total)
    }
}

// ---------------------------------------------------------------------------
// adiabatic limit

/// Outcome of a growth fit on a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SignalFit {
    Fitted(GrowthFit),
    /// The signal vanishes or changes sign; nothing to fit.
    BoundedSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticSample {
    pub t: f64,
    /// Pairing with ∫_{−t}^{t} e^{iar} dr, before the factor t.
    pub flat: f64,
    /// Pairing with ∫_{−t}^{t} |r| e^{iar} dr.
    pub abs_r: f64,
    /// A₁(t) = t·flat − abs_r.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticGrowth {
    pub samples: Vec<AdiabaticSample>,
    /// Least-squares dA₁/dt over the grid.
    pub linear_slope: f64,
    /// lim A₁/t = 2π ∫ Ŝ(−ω_p, p) (…), read off the table.
    pub asymptotic_slope: f64,
    pub fit: SignalFit,
}

fn linear_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

fn fit_signal(pts: &[(f64, f64)]) -> Result<SignalFit> {
    if pts.iter().any(|p| !(p.1 > 0.0)) {
        return Ok(SignalFit::BoundedSignal);
    }
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(SignalFit::Fitted(fit_growth_exponent(pts, (lo, hi))?))
}

fn check_times(t_grid: &[f64]) -> Result<()> {
    if t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument("scan times must be positive".into()));
    }
    Ok(())
}

/// A₁(t, x₁; t, x₂) smeared with Gaussian f₁ = f₂, in the h → 1 limit:
/// λ²/(2π)⁴ ∫d⁴p f̂(p)² Ŝ(p) v(p) [t·∫e^{iar} − ∫|r|e^{iar}] / (4ω_p²), a = p⁰ + ω_p.
pub fn adiabatic_growth_slope(
    s: &SpectralFunction,
    opts: &LoopOptions,
    vertex: LoopVertex,
    pmag_grid: &[f64],
    t_grid: &[f64],
    rel_tol: f64,
) -> Result<AdiabaticGrowth> {
    check_times(t_grid)?;
    let table = ShellTable::build(s, opts, pmag_grid)?;
    let pref = opts.coupling * opts.coupling / TWO_PI4;
    let leg = |i: usize, a: f64| {
        let p = table.pmag[i];
        let w = table.omega[i];
        opts.f_hat(p).powi(2) * vertex.factor(a - w, p) / (4.0 * w * w)
    };
    let scale = table.peak().max(1e-300);
    let mut samples = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let flat = pref * table.pair(rel_tol, scale * t, |i, a| leg(i, a) * windowed_fourier(a, t, Window::Flat).re)?;
        let abs_r = pref * table.pair(rel_tol, scale * t * t, |i, a| leg(i, a) * windowed_fourier(a, t, Window::AbsR).re)?;
        let value = pref
            * table.pair(rel_tol, scale * t * t, |i, a| {
                let k = t * windowed_fourier(a, t, Window::Flat).re - windowed_fourier(a, t, Window::AbsR).re;
                leg(i, a) * k
            })?;
        samples.push(AdiabaticSample { t, flat, abs_r, value });
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.value)).collect();
    let mut asym = 0.0;
    for i in 0..table.pmag.len() {
        let p = table.pmag[i];
        asym += table.weights[i] * 4.0 * PI * p * p * table.rows[i][table.half] * leg(i, 0.0);
    }
    Ok(AdiabaticGrowth {
        linear_slope: linear_slope(&pts),
        asymptotic_slope: 2.0 * PI * pref * asym,
        fit: fit_signal(&pts)?,
        samples,
    })
}

// ---------------------------------------------------------------------------
// compact spatial cutoff

/// ∫_0^t e^{−iau} du.
fn fejer_leg(a: f64, t: f64) -> Complex64 {
    let x = a * t;
    if x.abs() < 1e-3 {
        // t Σ (−ix)^k/(k+1)!
        let ix = Complex64::new(0.0, -x);
        t * (1.0 + ix / 2.0 + ix * ix / 6.0 + ix * ix * ix / 24.0 + ix * ix * ix * ix / 120.0)
    } else {
        (1.0 - Complex64::new(0.0, -x).exp()) / Complex64::new(0.0, a)
    }
}

/// Gaussian f and h in momentum space, reduced to a radial integral in |q|.
struct LegGeometry {
    sigma_f: f64,
    width_h: f64,
    m: f64,
}

impl LegGeometry {
    /// ∫d³q/(2ω_q) f̂(q) ĥ(q − p) u(|q|), ĥ normalised to δ³ as the width grows.
    fn integrate<U>(&self, pmag: f64, rel_tol: f64, u: U) -> Result<Complex64>
    where
        U: Fn(f64, f64) -> Complex64,
    {
        let (sf2, w2) = (self.sigma_f * self.sigma_f, self.width_h * self.width_h);
        let sum = sf2 + w2;
        let c = w2 * pmag / sum;
        let pref = (w2 / (2.0 * PI)).powf(1.5) * (-0.5 * pmag * pmag * sf2 * w2 / sum).exp();
        let reach = 9.0 / sum.sqrt();
        let (lo, hi) = ((c - reach).max(0.0), c + reach);
        let m = self.m;
        let radial = |q: f64| {
            let w = (q * q + m * m).sqrt();
            let x = 2.0 * sum * q * c;
            let shell = if x < 1e-12 { 1.0 } else { -(-x).exp_m1() / x };
            let g = 4.0 * PI * q * q / (2.0 * w) * (-0.5 * sum * (q - c) * (q - c)).exp() * shell;
            u(q, w) * g
        };
        let est = integrate_adaptive(radial, lo, hi, 1e-300, rel_tol)?;
        Ok(est.value * pref)
    }
}

/// Decomposition of g_t(p) = ∫_0^t dt_y p⁰ e^{−ip⁰t_y} ∫d³q/(2ω) f̂(q) ĥ(q−p) e^{iω(t−t_y)}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactLeg {
    /// i e^{−ip⁰t} ∫d³q/(2ω) f̂ĥ.
    pub boundary: Complex64,
    /// −i ∫d³q/(2ω) f̂ĥ e^{iωt}, the stationary-phase term.
    pub oscillatory: Complex64,
    /// −∫_0^t dt_y e^{−ip⁰t_y} ∫d³q/2 f̂ĥ e^{iω(t−t_y)}.
    pub remainder: Complex64,
}

impl CompactLeg {
    pub fn total(&self) -> Complex64 {
        self.boundary + self.oscillatory + self.remainder
    }
}

fn check_leg(smearing_width: f64, h_width: f64, m: f64) -> Result<LegGeometry> {
    check_mass(m)?;
    if !(smearing_width > 0.0 && h_width > 0.0) {
        return Err(Error::InvalidArgument("smearing and cutoff widths must be positive".into()));
    }
    Ok(LegGeometry { sigma_f: smearing_width, width_h: h_width, m })
}

/// One external leg with a Gaussian cutoff h of width `h_width` and sharp switch-on.
pub fn compact_leg_g(
    t: f64,
    p0: f64,
    pmag: f64,
    m: f64,
    smearing_width: f64,
    h_width: f64,
    rel_tol: f64,
) -> Result<CompactLeg> {
    let geo = check_leg(smearing_width, h_width, m)?;
    let i = Complex64::i();
    let i0 = geo.integrate(pmag, rel_tol, |_, _| Complex64::new(1.0, 0.0))?;
    let osc = geo.integrate(pmag, rel_tol, |_, w| Complex64::from_polar(1.0, w * t))?;
    let rem = geo.integrate(pmag, rel_tol, |_, w| w * Complex64::from_polar(1.0, w * t) * fejer_leg(p0 + w, t))?;
    Ok(CompactLeg { boundary: i * Complex64::from_polar(1.0, -p0 * t) * i0, oscillatory: -i * osc, remainder: -rem })
}

/// g_t(p) in one radial integral.
pub fn compact_leg_direct(
    t: f64,
    p0: f64,
    pmag: f64,
    m: f64,
    smearing_width: f64,
    h_width: f64,
    rel_tol: f64,
) -> Result<Complex64> {
    let geo = check_leg(smearing_width, h_width, m)?;
    geo.integrate(pmag, rel_tol, |_, w| p0 * Complex64::from_polar(1.0, w * t) * fejer_leg(p0 + w, t))
}

/// A(t) = λ²/(2π)⁴ ∫d⁴p Ŝ(p)/((p⁰)² + |p|² + 1) g_t(p) g̃_t(p) at t_{x₁} = t_{x₂} = t.
/// For even f and h, g̃_t is the complex conjugate of g_t.
pub fn compact_a_scan(
    s: &SpectralFunction,
    opts: &LoopOptions,
    h_width: f64,
    pmag_grid: &[f64],
    t_grid: &[f64],
    rel_tol: f64,
) -> Result<Vec<(f64, f64)>> {
    check_times(t_grid)?;
    let table = ShellTable::build(s, opts, pmag_grid)?;
    let geo = check_leg(opts.smearing_width, h_width, s.mass)?;
    let pref = opts.coupling * opts.coupling / TWO_PI4;
    let scale = table.peak().max(1e-300);
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut err = None;
        let v = table.pair(rel_tol, scale * t * t, |i, a| {
            let p = table.pmag[i];
            let p0 = a - table.omega[i];
            let g = geo.integrate(p, rel_tol, |_, w| p0 * Complex64::from_polar(1.0, w * t) * fejer_leg(p0 + w, t));
            match g {
                Ok(g) => g.norm_sqr() / (p0 * p0 + p * p + 1.0),
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        out.push((t, pref * v));
    }
    Ok(out)
}

/// Largest |g_t| of the stationary-phase term over a momentum grid.
pub fn oscillatory_leg_sup(
    t: f64,
    pmag_grid: &[f64],
    m: f64,
    smearing_width: f64,
    h_width: f64,
    rel_tol: f64,
) -> Result<f64> {
    let mut sup = 0.0f64;
    for &p in pmag_grid {
        sup = sup.max(compact_leg_g(t, 0.0, p, m, smearing_width, h_width, rel_tol)?.oscillatory.norm());
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_is_a_primitive() {
        let (beta, c) = (0.7, 1.3);
        for x in [-4.0, -0.5, 0.4, 1.0, 2.5, 6.0] {
            let h = 1e-5;
            let d = (pair_bracket(beta, c, x + h) - pair_bracket(beta, c, x - h)) / (2.0 * h);
            let want = bose(beta, x) * bose(beta, c - x) / bose(beta, c);
            assert!((d - want).abs() < 1e-6 * want.abs().max(1.0), "x = {x}: {d} vs {want}");
        }
    }

    #[test]
    fn catmull_rom_reproduces_nodes() {
        let s = SpectralFunction::custom(1.0, SpectralSupport::EMPTY, Arc::new(|p0, _| Ok(p0.sin())));
        let t = ShellTable::build(&s, &LoopOptions::default(), &[0.0, 1.0]).unwrap();
        let a = 3.0 * t.step;
        let want = (a - t.omega[1]).sin() * (-0.5 * a * a).exp();
        assert!((t.at(1, a) - want).abs() < 1e-14);
    }
}
