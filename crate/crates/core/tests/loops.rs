mod common;

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use secular_core::loops::*;

fn thermal() -> StateProfile {
    StateProfile::kms(1.0, 1.0).unwrap()
}

fn vacuum() -> StateProfile {
    StateProfile::vacuum(1.0).unwrap()
}

fn thermal_phi4() -> &'static SpectralFunction {
    static S: OnceLock<SpectralFunction> = OnceLock::new();
    S.get_or_init(|| SpectralFunction::from_profile(4, thermal(), 1e-6).unwrap().memoized())
}

fn opts() -> LoopOptions {
    LoopOptions { table_nodes: 49, ..Default::default() }
}

fn pmag_grid() -> Vec<f64> {
    (0..13).map(|i| 0.3 * i as f64).collect()
}

fn t_grid() -> Vec<f64> {
    (0..10).map(|i| 20.0 * 10f64.powf(i as f64 / 9.0)).collect()
}

fn thermal_scan() -> &'static AdiabaticGrowth {
    static G: OnceLock<AdiabaticGrowth> = OnceLock::new();
    G.get_or_init(|| {
        adiabatic_growth_slope(thermal_phi4(), &opts(), LoopVertex::Full, &pmag_grid(), &t_grid(), 1e-6).unwrap()
    })
}

fn gauss(x: f64, s: f64) -> f64 {
    (-0.5 * x * x / (s * s)).exp() / ((2.0 * PI).sqrt() * s)
}

#[test]
fn kl_weight_examples() {
    let m = 1.5;
    assert!((kl_weight_phi3_vacuum(8f64.sqrt() * m, 0.0, m) - 0.5f64.sqrt()).abs() < 1e-12);
    assert_eq!(kl_weight_phi3_vacuum(2.0 * m, 0.0, m), 0.0);
    assert_eq!(kl_weight_phi3_vacuum(3f64.sqrt() * m, 0.0, m), 0.0);
    // a function of s alone
    let (p0, p) = (5.0, 1.2);
    assert_eq!(kl_weight_phi3_vacuum(-p0, p, m), kl_weight_phi3_vacuum(p0, p, m));
}

/// Two-body phase space with the energy delta smeared to a Gaussian of width
/// eta, integrated directly over (|q₁|, cos θ).
fn two_body_oracle(profile: &StateProfile, p0: f64, p: f64, eta: f64) -> f64 {
    let m = profile.mass;
    common::simpson(
        |q| {
            let w1 = (q * q + m * m).sqrt();
            2.0 * PI * q * q / (2.0 * w1)
                * common::simpson(
                    |c| {
                        let w2 = (m * m + p * p + q * q - 2.0 * p * q * c).sqrt();
                        let mut acc = 0.0;
                        for (s1, s2) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
                            let e = s1 as f64 * w1 + s2 as f64 * w2;
                            acc += profile.occ(s1, w1) * profile.occ(s2, w2) * gauss(p0 - e, eta);
                        }
                        acc / (2.0 * w2)
                    },
                    -1.0,
                    1.0,
                    400,
                )
        },
        0.0,
        40.0,
        4000,
    ) * 2.0
        / PI
}

#[test]
fn two_body_closed_form_matches_phase_space_oracle() {
    let eta = 0.1;
    for profile in [thermal(), vacuum()] {
        for (p0, p) in [(3.0, 0.5), (0.3, 1.0), (-3.0, 0.5), (2.4, 1.5)] {
            let smoothed = common::simpson(
                |e| two_body_density(&profile, e, p).unwrap() * gauss(e - p0, eta),
                p0 - 8.0 * eta,
                p0 + 8.0 * eta,
                1600,
            );
            let oracle = two_body_oracle(&profile, p0, p, eta);
            let tol = 1e-3 * oracle.abs().max(1e-3);
            assert!((smoothed - oracle).abs() < tol, "{profile:?} at ({p0}, {p}): {smoothed} vs {oracle}");
        }
    }
}

#[test]
fn two_body_density_at_rest_is_finite_and_continuous() {
    let th = thermal();
    let at0 = two_body_density(&th, 3.0, 0.0).unwrap();
    let near = two_body_density(&th, 3.0, 1e-4).unwrap();
    assert!(at0 > 0.0 && (at0 - near).abs() < 1e-7 * at0, "{at0} vs {near}");
    let vac = two_body_density(&vacuum(), 3.0, 0.0).unwrap();
    assert!((vac - kl_weight_phi3_vacuum(3.0, 0.0, 1.0)).abs() < 1e-14);
}

#[test]
fn phi3_monte_carlo_matches_kl_weight_within_three_sigma() {
    let vac = vacuum();
    let probes = [(3.0, 0.0), (3.5, 0.5), (4.0, 1.0), (5.0, 2.0), (2.6, 0.2)];
    for (i, (p0, p)) in probes.into_iter().enumerate() {
        let w = SpectralWindow::new(p0, [0.0, p, 0.0], 0.3).unwrap();
        let mc = spectral_numeric(3, &vac, &w, MonteCarlo { samples: 1_000_000, seed: 11 + i as u64 }).unwrap();
        let exact = window_average(|a, b| Ok(kl_weight_phi3_vacuum(a, b, 1.0)), &w, &[2.0], 1e-9).unwrap();
        assert!(
            (mc.value - exact).abs() < 3.0 * mc.std_error,
            "({p0}, {p}): {} ± {} vs {exact}",
            mc.value,
            mc.std_error
        );
    }
}

#[test]
fn phi3_vacuum_has_no_negative_energy_weight() {
    let w = SpectralWindow::new(-3.0, [0.0; 3], 0.3).unwrap();
    let mc = spectral_numeric(3, &vacuum(), &w, MonteCarlo::default()).unwrap();
    assert!(mc.value < 1e-30, "{mc:?}");
    let w = SpectralWindow::new(-2.0f64.sqrt(), [1.0, 0.0, 0.0], 0.25).unwrap();
    let mc = spectral_numeric(4, &vacuum(), &w, MonteCarlo::default()).unwrap();
    assert!(mc.value.abs() <= 3.0 * mc.std_error + 1e-300, "{mc:?}");
}

#[test]
fn phi4_thermal_weight_on_negative_shell() {
    let w = SpectralWindow::new(-2.0f64.sqrt(), [1.0, 0.0, 0.0], 0.25).unwrap();
    let mc = spectral_numeric(4, &thermal(), &w, MonteCarlo::default()).unwrap();
    assert!(mc.value > 5.0 * mc.std_error, "{mc:?}");
}

#[test]
fn phi4_quadrature_agrees_with_monte_carlo() {
    let th = thermal();
    let w = SpectralWindow::new(-2.0f64.sqrt(), [1.0, 0.0, 0.0], 0.2).unwrap();
    let mc = spectral_numeric(4, &th, &w, MonteCarlo { samples: 1_000_000, seed: 5 }).unwrap();
    // product Simpson rule over the window, radial direction averaged in closed form
    let (sig, c) = (w.width, 1.0);
    let radial = |p: f64| {
        let x = 2.0 * p * c / (sig * sig);
        (2.0 * PI * sig * sig).powf(-1.5) * (-0.5 * (p - c).powi(2) / (sig * sig)).exp() * -(-x).exp_m1() / x
    };
    let quad = common::simpson(
        |p0| {
            gauss(p0 - w.p0, sig)
                * common::simpson(
                    |p| 4.0 * PI * p * p * radial(p) * spectral_density(4, &th, p0, p, 1e-5).unwrap(),
                    (c - 5.0 * sig).max(1e-9),
                    c + 5.0 * sig,
                    20,
                )
        },
        w.p0 - 5.0 * sig,
        w.p0 + 5.0 * sig,
        20,
    );
    assert!((mc.value - quad).abs() < 4.0 * mc.std_error + 1e-3 * quad, "{mc:?} vs {quad}");
}

#[test]
fn monte_carlo_is_rotation_invariant() {
    let th = thermal();
    let dirs = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.6, -0.48, 0.64]];
    let est: Vec<SpectralEstimate> = dirs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let w = SpectralWindow::new(2.5, [0.8 * d[0], 0.8 * d[1], 0.8 * d[2]], 0.3).unwrap();
            spectral_numeric(3, &th, &w, MonteCarlo { samples: 400_000, seed: 40 + i as u64 }).unwrap()
        })
        .collect();
    for a in &est {
        for b in &est {
            let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            assert!((a.value - b.value).abs() < 4.0 * se, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn monte_carlo_is_reproducible() {
    let w = SpectralWindow::new(3.0, [0.3, 0.0, 0.0], 0.3).unwrap();
    let mc = MonteCarlo { samples: 100_000, seed: 9 };
    let a = spectral_numeric(4, &thermal(), &w, mc).unwrap();
    let b = spectral_numeric(4, &thermal(), &w, mc).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(SpectralWindow::new(0.0, [0.0; 3], 0.0).is_err());
    assert!(StateProfile::kms(-1.0, 1.0).is_err());
    assert!(StateProfile::vacuum(0.0).is_err());
    let w = SpectralWindow::new(0.0, [0.0; 3], 1.0).unwrap();
    assert!(spectral_numeric(5, &thermal(), &w, MonteCarlo::default()).is_err());
    assert!(spectral_numeric(3, &thermal(), &w, MonteCarlo { samples: 10, seed: 0 }).is_err());
    assert!(declared_support(2, &thermal()).is_err());
}

#[test]
fn support_decides_the_negative_shell() {
    let s3 = declared_support(3, &thermal()).unwrap();
    let s4 = declared_support(4, &thermal()).unwrap();
    let s3v = declared_support(3, &vacuum()).unwrap();
    for p in [0.0, 0.5, 2.0] {
        assert!(!s3.meets_negative_shell(p, 1.0));
        assert!(!s3v.meets_negative_shell(p, 1.0));
        assert!(s4.meets_negative_shell(p, 1.0));
    }
    assert!(s3.contains(0.0, 0.0));
    assert!(s3.contains(-2.5, 0.5));
    assert!(!s3v.contains(-2.5, 0.5));
}

#[test]
fn custom_profile_matches_kms_closed_form() {
    let f = Arc::new(|w: f64| 1.0 / w.exp_m1());
    let custom = StateProfile::custom(1.0, f, 50.0).unwrap();
    for (p0, p) in [(3.0, 0.5), (0.3, 1.0), (-2.5, 0.1)] {
        let a = two_body_density(&custom, p0, p).unwrap();
        let b = two_body_density(&thermal(), p0, p).unwrap();
        assert!((a - b).abs() < 1e-8 * b.abs().max(1e-12), "({p0}, {p}): {a} vs {b}");
    }
}

#[test]
fn thermal_phi4_grows_linearly() {
    let g = thermal_scan();
    let SignalFit::Fitted(fit) = g.fit else { panic!("no fit: {:?}", g.fit) };
    assert!((fit.exponent - 1.0).abs() < 0.1, "{fit:?}");
    assert!(fit.r_squared > 0.99, "{fit:?}");
    assert!(
        (g.linear_slope - g.asymptotic_slope).abs() < 1e-2 * g.asymptotic_slope,
        "{} vs {}",
        g.linear_slope,
        g.asymptotic_slope
    );
}

#[test]
fn abs_r_term_stays_bounded() {
    let g = thermal_scan();
    let pts: Vec<(f64, f64)> = g.samples.iter().map(|s| (s.t, s.abs_r)).collect();
    let fit = secular_core::quadrature::fit_growth_exponent(&pts, (20.0, 200.0)).unwrap();
    assert!(fit.exponent <= 0.1, "{fit:?}");
}

#[test]
fn phi3_vacuum_slope_is_negligible() {
    let s3 = SpectralFunction::phi3_vacuum(1.0);
    let g3 = adiabatic_growth_slope(&s3, &opts(), LoopVertex::Full, &pmag_grid(), &t_grid(), 1e-6).unwrap();
    let th = thermal_scan();
    assert!(g3.linear_slope.abs() < 1e-3 * th.linear_slope, "{} vs {}", g3.linear_slope, th.linear_slope);
}

#[test]
fn zero_spectral_function_is_a_bounded_signal() {
    let z = SpectralFunction::zero(1.0);
    let g = adiabatic_growth_slope(&z, &opts(), LoopVertex::Full, &pmag_grid(), &t_grid(), 1e-6).unwrap();
    assert_eq!(g.fit, SignalFit::BoundedSignal);
    assert_eq!(g.linear_slope, 0.0);
}

#[test]
fn leg_decomposition_sums_to_direct_form() {
    for (p0, p, hw) in [(-1.5, 0.4, 1.0), (0.7, 1.2, 2.0), (-2.0, 0.0, 0.5)] {
        for t in [3.0, 17.0] {
            let parts = compact_leg_g(t, p0, p, 1.0, 1.0, hw, 1e-11).unwrap();
            let direct = compact_leg_direct(t, p0, p, 1.0, 1.0, hw, 1e-11).unwrap();
            assert!((parts.total() - direct).norm() < 1e-9 * direct.norm().max(1e-6), "{parts:?} vs {direct}");
        }
    }
}

#[test]
fn oscillatory_leg_decays() {
    let grid: Vec<f64> = (0..9).map(|i| 0.25 * i as f64).collect();
    let s10 = oscillatory_leg_sup(10.0, &grid, 1.0, 1.0, 1.0, 1e-10).unwrap();
    let s40 = oscillatory_leg_sup(40.0, &grid, 1.0, 1.0, 1.0, 1e-10).unwrap();
    assert!(s40 / s10 <= 3.0 * 4f64.powf(-1.5), "{s10} -> {s40}");
}

#[test]
fn compact_scan_is_bounded() {
    let tg = [10.0, 20.0, 35.0, 50.0, 75.0, 100.0, 140.0, 200.0];
    let a = compact_a_scan(thermal_phi4(), &opts(), 1.0, &pmag_grid(), &tg, 1e-5).unwrap();
    let max = a.iter().map(|v| v.1).fold(0.0, f64::max);
    assert!(a[0].1 > 0.0 && max / a[0].1 < 2.0, "{a:?}");
}

#[test]
fn wide_cutoff_recovers_adiabatic_slope() {
    let tg = [100.0, 150.0, 200.0];
    let a = compact_a_scan(thermal_phi4(), &opts(), 1e3, &pmag_grid(), &tg, 1e-5).unwrap();
    let slope = (a[2].1 - a[0].1) / (a[2].0 - a[0].0);
    let adiabatic =
        adiabatic_growth_slope(thermal_phi4(), &opts(), LoopVertex::P0Squared, &pmag_grid(), &t_grid(), 1e-6)
            .unwrap();
    assert!(
        (slope - adiabatic.asymptotic_slope).abs() < 0.2 * adiabatic.asymptotic_slope,
        "{slope} vs {}",
        adiabatic.asymptotic_slope
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn vacuum_two_body_is_the_kl_weight(p0 in -8.0f64..8.0, p in 0.0f64..5.0) {
        let v = two_body_density(&vacuum(), p0, p).unwrap();
        let kl = if p0 > 0.0 { kl_weight_phi3_vacuum(p0, p, 1.0) } else { 0.0 };
        prop_assert!((v - kl).abs() < 1e-9, "{} vs {}", v, kl);
    }

    #[test]
    fn two_body_vanishes_off_support(p0 in -8.0f64..8.0, p in 0.0f64..5.0, beta in 0.3f64..4.0) {
        let th = StateProfile::kms(beta, 1.0).unwrap();
        let support = declared_support(3, &th).unwrap();
        let v = two_body_density(&th, p0, p).unwrap();
        prop_assert!(v >= 0.0);
        if !support.contains(p0, p) {
            prop_assert_eq!(v, 0.0);
        }
    }
}
