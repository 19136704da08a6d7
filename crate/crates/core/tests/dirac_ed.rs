use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secular_core::dirac_ed::*;
use secular_core::quadrature::{fit_growth_exponent, integrate_adaptive};
use secular_core::scalar_ed::{ExternalPotential, SpatialCutoff};
use secular_core::spinor::ETA;
use secular_core::{Error, SpacetimePoint, SwitchFunction, ThermalParams};

const TOL: f64 = 1e-9;

fn setup() -> (ExternalPotential, SpatialCutoff, ThermalParams, SwitchFunction) {
    (
        ExternalPotential::scalar_gaussian(1.0, 1.0, 1.0),
        SpatialCutoff::Gaussian { width: 2.0 },
        ThermalParams::new(1.0, 1.0),
        SwitchFunction::smoothstep(1.0, 3),
    )
}

fn origin(t: f64) -> SpacetimePoint {
    SpacetimePoint::new(t, [0.0; 3])
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| a * (b / a).powf(j as f64 / (n - 1) as f64)).collect()
}

#[test]
fn trace_examples() {
    assert!((gamma_trace(&[0, 0]) - 4.0).norm() < 1e-15);
    assert!(gamma_trace(&[0, 1, 2]).norm() < 1e-15);
    assert!((gamma_trace(&[0, 1, 0, 1]) - 4.0).norm() < 1e-15);
}

#[test]
fn clifford_relation_holds_for_all_pairs() {
    assert!(clifford_residual() < 1e-15);
}

#[test]
fn trace_identities_hold_for_all_index_tuples() {
    let eta = |a: usize, b: usize| if a == b { ETA[a] } else { 0.0 };
    for a in 0..4 {
        for b in 0..4 {
            assert!((gamma_trace(&[a, b]) - (-4.0 * eta(a, b))).norm() < 1e-12);
            for c in 0..4 {
                assert!(gamma_trace(&[a, b, c]).norm() < 1e-12);
                for d in 0..4 {
                    let want = 4.0 * (eta(a, b) * eta(c, d) - eta(a, c) * eta(b, d) + eta(a, d) * eta(b, c));
                    assert!((gamma_trace(&[a, b, c, d]) - want).norm() < 1e-12, "{a}{b}{c}{d}");
                }
            }
        }
    }
}

#[test]
fn fermi_decomposition_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let beta = rng.random_range(0.1..5.0);
        let (wp, wk) = (rng.random_range(1.0..5.0), rng.random_range(1.0..5.0));
        assert!(fermi_decomposition_residual(beta, wp, wk) < 1e-14);
    }
}

#[test]
fn mode_traces_match_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let m = rng.random_range(0.2..2.0);
        let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let k: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let (wp, wk) = ((p.iter().map(|v| v * v).sum::<f64>() + m * m).sqrt(), (k.iter().map(|v| v * v).sum::<f64>() + m * m).sqrt());
        let q2: f64 = (0..3).map(|i| (k[i] - p[i]).powi(2)).sum();
        for (sp, sk) in DIRAC_MODES {
            let direct = mode_trace(sp, sk, p, k, m);
            let closed = mode_trace_radial(sp, sk, wp, wk, q2);
            assert!((direct - closed).norm() < 1e-12 * (1.0 + closed.abs()));
        }
    }
}

#[test]
fn channel_cancellation_over_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let beta = rng.random_range(0.05..20.0);
        let (wp, wk) = (rng.random_range(1.0..6.0), rng.random_range(1.0..6.0));
        let [vac, th] = cancellation_residuals(wp, wk, beta);
        assert!(vac < 1e-12 && th < 1e-12);
    }
}

#[test]
fn zero_temperature_brackets() {
    // (f_k − f_p) → 0 and (f_k + f_p − 1) → −1
    let (wp, wk) = (1.3, 2.1);
    let th = term_coefficients(DiracTerm::StateThermal, wp, wk, f64::INFINITY);
    let vac = term_coefficients(DiracTerm::StateVacuum, wp, wk, f64::INFINITY);
    let brackets = [
        (th[0] + vac[0]) * (wp - wk),
        (th[1] + vac[1]) * (wp + wk),
        (th[2] + vac[2]) * (wp + wk),
        (th[3] + vac[3]) * (wp - wk),
    ];
    assert_eq!(brackets, [0.0, -1.0, -1.0, 0.0]);
}

#[test]
fn boundary_channels_sum_to_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fermi = |b: f64, w: f64| 1.0 / (1.0 + (b * w).exp());
    for _ in 0..40 {
        let (m, beta) = (rng.random_range(0.5..1.5), rng.random_range(0.3..3.0));
        let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let k: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let sq = |v: [f64; 3]| v.iter().map(|x| x * x).sum::<f64>();
        let (wp, wk) = ((sq(p) + m * m).sqrt(), (sq(k) + m * m).sqrt());
        let c = term_coefficients(DiracTerm::BoundaryThermal, wp, wk, beta);
        let modes: Complex64 =
            DIRAC_MODES.iter().zip(c).map(|(&(sp, sk), ci)| mode_trace(sp, sk, p, k, m) * ci).sum::<Complex64>()
                / (4.0 * wp * wk);
        let pk: f64 = (0..3).map(|i| p[i] * k[i]).sum();
        let big_f = |w: f64| (w * w + m * m + pk) * fermi(beta, w) / w;
        let closed = -4.0 * (big_f(wp) - big_f(wk)) / (wp * wp - wk * wk);
        assert!((modes - closed).norm() < 1e-11 * closed.abs().max(1e-3), "{modes} vs {closed}");
    }
}

#[test]
fn kl_weight_threshold_and_contractions() {
    let m = 1.0;
    assert!(matches!(kl_weight_dirac(3.9, m), Err(Error::BelowThreshold { .. })));
    let at = kl_weight_dirac(4.0, m).unwrap();
    assert_eq!(at.momentum, 0.0);
    for mu in 0..4 {
        assert!(at.contract(mu).norm() < 1e-12);
    }
    for m2 in [4.5, 9.0] {
        let w = kl_weight_dirac(m2 * m * m, m).unwrap();
        assert!(w.momentum > 0.0);
        let scale = w.terms.iter().map(|t| t.0.abs()).fold(0.0, f64::max);
        assert!(scale > 0.0);
        for mu in 0..4 {
            assert!(w.contract(mu).norm() < 1e-12 * scale.max(1.0));
        }
    }
}

#[test]
fn renormalization_constants_validation() {
    let mut r = RenormalizationConstants::default();
    assert!(r.validate().is_ok());
    r.a2[0][1] = 1.0;
    assert!(r.validate().is_err());
    r.a2[1][0] = 1.0;
    assert!(r.validate().is_ok());
    r.c1 = f64::NAN;
    assert!(r.validate().is_err());
}

/// e²/(2π)⁶ 8π² ∫∫ dp dk p k of the two vacuum channels, in (u, v) = (p + k, p − k)
/// with the closed-form weights of a Gaussian source ĝ(q) = N e^{−a q²}.
fn vacuum_state_oracle(t: f64, chi: &SwitchFunction, width_eff: f64, m: f64) -> f64 {
    let w2 = width_eff * width_eff;
    let norm = (2.0 * PI * w2).powf(1.5);
    let a = 0.5 * w2;
    let h0 = |s: f64| norm * -(-a * s * s).exp_m1() / (2.0 * a);
    let h1 = |s: f64| norm * (1.0 - (1.0 + a * s * s) * (-a * s * s).exp()) / (2.0 * a * a);
    let qmax = 14.0 / width_eff;
    let inner = |u: f64| {
        let lim = u.min(qmax);
        let f = |v: f64| {
            let (p, k) = (0.5 * (u + v), 0.5 * (u - v));
            let (wp, wk) = ((p * p + m * m).sqrt(), (k * k + m * m).sqrt());
            let nu = wp + wk;
            let b = chi.chi_dot_hat(-nu) * Complex64::from_polar(1.0, nu * t);
            let (psi0, psi1) = (h0(u) - h0(v.abs()), h1(u) - h1(v.abs()));
            let tr = 2.0 * (wp - wk).powi(2) * psi0 - 2.0 * psi1;
            Complex64::from(-p * k * 2.0 * b.re * tr / (4.0 * wp * wk * nu) * 0.5)
        };
        integrate_adaptive(f, -lim, lim, 1e-16, 1e-12).unwrap().value.re
    };
    let mut total = 0.0;
    let mut lo = 0.0;
    while lo < 600.0 {
        total += integrate_adaptive(|u| Complex64::from(inner(u)), lo, lo + 5.0, 1e-15, 1e-11).unwrap().value.re;
        lo += 5.0;
    }
    total * 8.0 * PI * PI / (2.0 * PI).powi(6)
}

#[test]
fn state_correction_reduces_to_vacuum_channels_at_large_beta() {
    let (pot, cutoff, _, chi) = setup();
    let params = ThermalParams::new(80.0, 1.0);
    let got = current_state_correction(&origin(2.0), &pot, cutoff, &params, &chi, TOL).unwrap();
    // Gaussian A₀ of width 1 times a Gaussian cutoff of width 2
    let oracle = vacuum_state_oracle(2.0, &chi, 1.0 / (1.0f64 + 0.25).sqrt(), 1.0);
    assert!((got.re - oracle).abs() < 1e-8 * oracle.abs(), "{got} vs {oracle}");
}

#[test]
fn state_correction_is_real_and_vanishes_without_coupling() {
    let (pot, cutoff, params, chi) = setup();
    let v = current_state_correction(&origin(3.0), &pot, cutoff, &params, &chi, TOL).unwrap();
    assert!(v.norm() > 0.0);
    assert!(v.im.abs() < 1e-8 * v.norm());
    let zero = current_state_correction(&origin(3.0), &pot.with_coupling(0.0), cutoff, &params, &chi, TOL).unwrap();
    assert_eq!(zero, Complex64::from(0.0));
    let inf = ThermalParams::vacuum(1.0);
    assert!(current_state_correction(&origin(3.0), &pot, cutoff, &inf, &chi, TOL).is_err());
    assert!(current_state_correction(&origin(-1.5), &pot, cutoff, &params, &chi, TOL).is_err());
}

#[test]
fn expectation_is_time_independent_through_all_terms() {
    let (pot, cutoff, params, chi) = setup();
    let renorm = RenormalizationConstants { a0: 0.01, ..Default::default() };
    let closed = current_expectation(&origin(0.0), &pot, cutoff, &params, &renorm, TOL).unwrap();
    let state = current_state_correction(&origin(2.0), &pot, cutoff, &params, &chi, TOL).unwrap();
    // the time-dependent pieces sit far above the tolerance on their own
    assert!(state.norm() > 1e-4 * closed.abs());
    for t in [5.0, 25.0] {
        let full = current_from_terms(&origin(t), &pot, cutoff, &params, &chi, &renorm, TOL).unwrap();
        assert!((full.re - closed).abs() < 1e-6 * closed.abs(), "t = {t}: {full} vs {closed}");
        assert!(full.im.abs() < 1e-6 * closed.abs());
    }
}

#[test]
fn expectation_vanishes_at_zero_temperature_and_flips_with_potential() {
    let (pot, cutoff, params, _) = setup();
    let renorm = RenormalizationConstants::default();
    let x = SpacetimePoint::new(0.0, [0.3, 0.0, 0.2]);
    let v = current_expectation(&x, &pot, cutoff, &params, &renorm, TOL).unwrap();
    assert!(v.abs() > 0.0);
    let flipped = current_expectation(&x, &ExternalPotential::scalar_gaussian(-1.0, 1.0, 1.0), cutoff, &params, &renorm, TOL).unwrap();
    assert!((v + flipped).abs() <= 1e-14 * v.abs());
    let cold = current_expectation(&x, &pot, cutoff, &ThermalParams::vacuum(1.0), &renorm, TOL).unwrap();
    assert_eq!(cold, 0.0);
}

#[test]
fn expectation_ignores_gradient_terms_for_flat_source() {
    let pot = ExternalPotential::scalar_uniform(1.0, 1.0);
    let cutoff = SpatialCutoff::Gaussian { width: 1e5 };
    let params = ThermalParams::new(1.0, 1.0);
    let base = RenormalizationConstants { a0: 0.5, ..Default::default() };
    let varied = RenormalizationConstants {
        a1: [1.0, -2.0, 0.5],
        a2: [[1.0, 0.2, 0.0], [0.2, -1.0, 0.3], [0.0, 0.3, 2.0]],
        ..base
    };
    let x = origin(0.0);
    let v0 = current_expectation(&x, &pot, cutoff, &params, &base, TOL).unwrap();
    let v1 = current_expectation(&x, &pot, cutoff, &params, &varied, TOL).unwrap();
    assert!((v0 - v1).abs() < 1e-6 * v0.abs(), "{v0} vs {v1}");
    assert!(matches!(
        current_expectation(&x, &pot, SpatialCutoff::Adiabatic, &params, &base, TOL),
        Err(Error::InvalidArgument(_))
    ));
}

fn probe_envelope(n: u32) -> Vec<(f64, f64)> {
    let params = ThermalParams::new(1.0, 1.0);
    let chi = SwitchFunction::smoothstep(1.0, 3);
    log_grid(20.0, 200.0, 12)
        .into_iter()
        .map(|t| {
            let [a, b] = secular_probe_j_parts(n, t, 1.0, &params, &chi, 1e-10).unwrap();
            (t, a.norm() + b.norm())
        })
        .collect()
}

#[test]
fn probe_grows_for_n4_and_decays_for_n2() {
    let fit4 = fit_growth_exponent(&probe_envelope(4), (20.0, 200.0)).unwrap();
    assert!((fit4.exponent - 0.5).abs() < 0.15, "n=4 exponent {}", fit4.exponent);
    let fit2 = fit_growth_exponent(&probe_envelope(2), (20.0, 200.0)).unwrap();
    assert!((fit2.exponent + 0.5).abs() < 0.15, "n=2 exponent {}", fit2.exponent);
}

#[test]
fn probe_matches_leading_asymptotics() {
    // J₊ t^{3/2−l} → (−1)^l/((2π)³4^l) e^{2imt} (2m)^{l+½} m^{1−2l} f(m) (2i)^{2l} χ̇̂(−2m) Γ(l+3/2)(i/2)^{l+3/2}
    let (m, beta) = (1.0, 1.0);
    let params = ThermalParams::new(beta, m);
    let chi = SwitchFunction::smoothstep(1.0, 3);
    let t = 2e4;
    for (l, gamma) in [(1, 0.75 * PI.sqrt()), (2, 1.875 * PI.sqrt())] {
        let lf = l as f64;
        let [a, _] = secular_probe_j_parts(2 * l, t, 1.0, &params, &chi, 1e-10).unwrap();
        let fm = 1.0 / (1.0 + (beta * m).exp());
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        let moment = Complex64::i().powf(lf + 1.5) * gamma * 0.5f64.powf(lf + 1.5);
        let want = Complex64::from_polar(1.0, 2.0 * m * t)
            * sign
            * ((2.0 * m).powf(lf + 0.5) * m.powf(1.0 - 2.0 * lf) * fm / ((2.0 * PI).powi(3) * 4f64.powf(lf)))
            * Complex64::new(0.0, 2.0).powu(2 * l)
            * chi.chi_dot_hat(-2.0 * m)
            * moment;
        let got = a * t.powf(1.5 - lf);
        assert!((got - want).norm() < 2e-3 * want.norm(), "l = {l}: {got} vs {want}");
    }
}

#[test]
fn probe_rejects_odd_and_out_of_range_orders() {
    let params = ThermalParams::new(1.0, 1.0);
    let chi = SwitchFunction::smoothstep(1.0, 3);
    for n in [1, 3, 5, 0, 8] {
        assert!(matches!(secular_probe_j(n, 20.0, 1.0, &params, &chi, 1e-8), Err(Error::InvalidArgument(_))));
    }
}

proptest! {
    #[test]
    fn cancellation_holds_everywhere(beta in 0.01f64..50.0, wp in 1.0f64..20.0, wk in 1.0f64..20.0) {
        let [vac, th] = cancellation_residuals(wp, wk, beta);
        prop_assert!(vac < 1e-12 && th < 1e-12);
    }

    #[test]
    fn fermi_identity_holds(beta in 0.05f64..4.0, wp in 0.5f64..6.0, wk in 0.5f64..6.0) {
        prop_assert!(fermi_decomposition_residual(beta, wp, wk) < 1e-14);
    }

    #[test]
    fn thermal_brackets_are_removable_at_equal_energy(beta in 0.1f64..10.0, w in 1.0f64..5.0) {
        let near = term_coefficients(DiracTerm::StateThermal, w * (1.0 + 1e-9), w, beta)[0];
        let at = term_coefficients(DiracTerm::StateThermal, w, w, beta)[0];
        prop_assert!((near - at).abs() < 1e-7 * at.abs());
    }
}
