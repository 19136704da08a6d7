//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

use std::error::Error;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use secular_cli::config::{CancelPotential, Grid, Spacing};
use secular_cli::{run, Experiment, ScanConfig, Verdict};
use secular_core::cumulants::{decay_product_bound, random_residuals};
use secular_core::dirac_ed::{
    clifford_residual, current_expectation, current_from_terms, fermi_decomposition_residual, secular_probe_j_parts,
    RenormalizationConstants,
};
use secular_core::loops::{kl_weight_phi3_vacuum, spectral_numeric, window_average, MonteCarlo, SpectralWindow, StateProfile};
use secular_core::propagators::decay_envelope;
use secular_core::quadrature::{fit_growth_exponent, integrate_real};
use secular_core::scalar_ed::{corrected_smeared_value, ExternalPotential, SpatialCutoff};
use secular_core::spinor::{gamma_trace, ETA};
use secular_core::toymodel::{bogoliubov_step, log_grid, order_growth_fit, solve_mode};
use secular_core::{MassQuench, PropagatorKind, SpacetimePoint, SwitchFunction, TestFunction, ThermalParams};

type Outcome = Result<(bool, String), Box<dyn Error>>;
type Check = fn() -> Outcome;

fn resolved(exp: Experiment, edit: impl FnOnce(&mut ScanConfig)) -> Result<ScanConfig, Box<dyn Error>> {
    let mut cfg = ScanConfig::default();
    edit(&mut cfg);
    Ok(cfg.resolve(exp)?)
}

fn detail<T: serde::de::DeserializeOwned>(r: &secular_cli::ScanResult, key: &str) -> Result<T, Box<dyn Error>> {
    Ok(serde_json::from_value(r.details[key].clone())?)
}

fn toy_exponents() -> Outcome {
    let start = Instant::now();
    let grid = log_grid(20.0, 200.0, 10);
    let f2 = order_growth_fit(2, &grid, 1.0, 0.5, 1e-8)?;
    let f3 = order_growth_fit(3, &grid, 1.0, 0.5, 1e-8)?;
    let secs = start.elapsed().as_secs_f64();
    let ok = (f2.exponent - 0.5).abs() < 0.1 && (f3.exponent - 1.5).abs() < 0.1 && secs < 120.0;
    Ok((ok, format!("n=2 {:.4}, n=3 {:.4} over T in [20, 200], {secs:.2} s", f2.exponent, f3.exponent)))
}

fn bogoliubov() -> Outcome {
    let shapes = [SwitchFunction::smoothstep(1.0, 1), SwitchFunction::smoothstep(0.5, 3), SwitchFunction::smoothstep(1.0, 7)];
    let momenta = [0.0, 0.5, 1.0, 2.0, 5.0];
    let mut worst: f64 = 0.0;
    for sw in &shapes {
        let q = MassQuench::new(1.0, 0.8, sw.clone())?;
        for &p in &momenta {
            worst = worst.max(solve_mode(&q, p, 3.0, 1e-10)?.norm_defect().abs());
        }
    }
    // ε = 1e-3 against the sudden step; the step acts at the switch centre −1.5ε
    let eps = 1e-3;
    let q = MassQuench::new(1.0, 3.0, SwitchFunction::smoothstep(eps, 2))?;
    let mut step_err: f64 = 0.0;
    for &p in &momenta {
        let s = solve_mode(&q, p, 1.0, 1e-10)?;
        let e = bogoliubov_step(p, 1.0, 3.0)?;
        let ts = -1.5 * eps;
        let (w0, w1) = ((p * p + 1.0f64).sqrt(), (p * p + 4.0f64).sqrt());
        let ea = e.alpha * Complex64::new(0.0, (w1 - w0) * ts).exp();
        let eb = e.beta * Complex64::new(0.0, -(w1 + w0) * ts).exp();
        step_err = step_err.max((s.alpha - ea).norm()).max((s.beta - eb).norm());
    }
    let ok = worst < 1e-8 && step_err < 1e-3;
    Ok((ok, format!("max ||a|^2-|b|^2-1| = {worst:.2e}, step mismatch {step_err:.2e}")))
}

fn decay() -> Outcome {
    let grid = log_grid(2.0, 64.0, 16);
    let th = ThermalParams::new(1.0, 1.0);
    let ratio = |kind| -> Result<f64, Box<dyn Error>> {
        let env = decay_envelope(kind, &th, &grid, 0.0, 1e-8)?;
        let max = env.iter().map(|r| r.1).fold(0.0, f64::max);
        let min = env.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        Ok(max / min)
    };
    let r_plus = ratio(PropagatorKind::DiracKmsPlus)?;
    let r_smooth = ratio(PropagatorKind::FermiSmoothPart)?;
    let vac = decay_envelope(PropagatorKind::ScalarVacuum, &ThermalParams::vacuum(1.0), &log_grid(10.0, 64.0, 8), 0.0, 1e-8)?;
    let limit = 2f64.sqrt() / (8.0 * std::f64::consts::PI.powf(1.5));
    let dev = vac.iter().map(|r| (r.1 / limit - 1.0).abs()).fold(0.0, f64::max);
    let ok = r_plus < 10.0 && r_smooth < 10.0 && dev < 0.05;
    Ok((ok, format!("max/min {r_plus:.3} (W+), {r_smooth:.3} (smooth part); vacuum vs K1 limit {dev:.2e}")))
}

fn secular_slope() -> Outcome {
    let cfg = resolved(Experiment::SecularScalar, |_| {})?;
    let r = run::run(Experiment::SecularScalar, &cfg)?;
    let fit = r.fit.ok_or("no fit")?;
    let ratio: f64 = detail(&r, "slope_ratio")?;
    let ok = (fit.exponent - 1.0).abs() < 0.05 && (ratio - 1.0).abs() < 0.02;
    Ok((ok, format!("exponent {:.4} over t in [50, 400], W(400)/400 / coefficient = {ratio:.5}", fit.exponent)))
}

fn cancellation() -> Outcome {
    let cfg = resolved(Experiment::CancelScalar, |c| c.seed = 42)?;
    let r = run::run(Experiment::CancelScalar, &cfg)?;
    let worst = match r.verdict {
        Verdict::Cancelled(w) => w,
        _ => f64::INFINITY,
    };
    let (f, g) = (
        TestFunction::gaussian(SpacetimePoint::new(0.0, [0.5, 0.0, 0.0]), 0.5, 1.0),
        TestFunction::gaussian(SpacetimePoint::new(0.0, [-0.5, 0.0, 0.0]), 0.5, 1.0),
    );
    let pot = ExternalPotential::scalar_linear(0, 1.0)?;
    let params = ThermalParams::new(1.0, 1.0);
    let v0 = corrected_smeared_value(0.0, &f, &g, &pot, &params, 1e-9)?;
    let mut drift: f64 = 0.0;
    for a in (1..=10).map(|k| 5.0 * k as f64) {
        drift = drift.max((corrected_smeared_value(a, &f, &g, &pot, &params, 1e-9)? - v0).norm() / v0.norm());
    }
    let ok = worst < 1e-12 && r.table.rows.len() == 100 && drift < 1e-6;
    Ok((ok, format!("worst mode residual {worst:.2e} over 100 draws, translation drift {drift:.2e} for a in [0, 50]")))
}

fn transversality() -> Outcome {
    let cfg = resolved(Experiment::CancelScalar, |c| {
        c.seed = 7;
        c.cancel.trials = 50;
        c.cancel.potential = CancelPotential::Vortex;
    })?;
    let r = run::run(Experiment::CancelScalar, &cfg)?;
    let ok = matches!(r.verdict, Verdict::Cancelled(w) if w < 1e-12);
    Ok((ok, format!("{} over 50 draws with the axial vortex", r.verdict.label())))
}

fn dirac_suite() -> Outcome {
    let cliff = clifford_residual();
    let eta = |a: usize, b: usize| if a == b { ETA[a] } else { 0.0 };
    let mut trace: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            trace = trace.max((gamma_trace(&[a, b]) + 4.0 * eta(a, b)).norm());
            for c in 0..4 {
                trace = trace.max(gamma_trace(&[a, b, c]).norm());
                for d in 0..4 {
                    let want = 4.0 * (eta(a, b) * eta(c, d) - eta(a, c) * eta(b, d) + eta(a, d) * eta(b, c));
                    trace = trace.max((gamma_trace(&[a, b, c, d]) - want).norm());
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut fermi: f64 = 0.0;
    for _ in 0..100 {
        let beta = rng.random_range(0.1..5.0);
        let (wp, wk) = (rng.random_range(1.0..5.0), rng.random_range(1.0..5.0));
        fermi = fermi.max(fermi_decomposition_residual(beta, wp, wk));
    }

    let pot = ExternalPotential::scalar_gaussian(1.0, 1.0, 1.0);
    let cutoff = SpatialCutoff::Gaussian { width: 2.0 };
    let params = ThermalParams::new(1.0, 1.0);
    let chi = SwitchFunction::smoothstep(1.0, 3);
    let renorm = RenormalizationConstants { a0: 0.01, ..Default::default() };
    let at = |t: f64| SpacetimePoint::new(t, [0.0; 3]);
    let closed = current_expectation(&at(0.0), &pot, cutoff, &params, &renorm, 1e-9)?;
    let mut drift: f64 = 0.0;
    for t in [5.0, 25.0] {
        drift = drift.max((current_from_terms(&at(t), &pot, cutoff, &params, &chi, &renorm, 1e-9)? - closed).norm() / closed.abs());
    }
    let bare = RenormalizationConstants::default();
    let warm = current_expectation(&at(0.0), &pot, cutoff, &params, &bare, 1e-9)?;
    let cold = current_expectation(&at(0.0), &pot, cutoff, &ThermalParams::new(30.0, 1.0), &bare, 1e-9)?;
    let vacuum = current_expectation(&at(0.0), &pot, cutoff, &ThermalParams::vacuum(1.0), &bare, 1e-9)?;

    let probe = |n: u32| -> Result<f64, Box<dyn Error>> {
        let rows = log_grid(20.0, 200.0, 12)
            .into_iter()
            .map(|t| {
                let [a, b] = secular_probe_j_parts(n, t, 1.0, &params, &chi, 1e-10)?;
                Ok((t, a.norm() + b.norm()))
            })
            .collect::<Result<Vec<_>, secular_core::Error>>()?;
        Ok(fit_growth_exponent(&rows, (20.0, 200.0))?.exponent)
    };
    let (g4, g2) = (probe(4)?, probe(2)?);
    let ok = cliff < 1e-12
        && trace < 1e-12
        && fermi < 1e-14
        && drift < 1e-6
        && cold.abs() < 1e-6 * warm.abs()
        && vacuum == 0.0
        && (g4 - 0.5).abs() < 0.15
        && (g2 + 0.5).abs() < 0.15;
    Ok((
        ok,
        format!(
            "clifford {cliff:.1e}, traces {trace:.1e}, fermi {fermi:.1e}, time drift {drift:.1e}, \
             beta=30/beta=1 {:.1e}, probe n=4 {g4:.3}, n=2 {g2:.3}",
            (cold / warm).abs()
        ),
    ))
}

fn loop_dichotomy() -> Outcome {
    let thermal = run::run(Experiment::SecularLoop, &resolved(Experiment::SecularLoop, |_| {})?)?;
    let fit = thermal.fit.ok_or("no thermal fit")?;
    let thermal_slope: f64 = detail(&thermal, "linear_slope")?;
    let phi3 = run::run(
        Experiment::SecularLoop,
        &resolved(Experiment::SecularLoop, |c| {
            c.beta = None;
            c.loop_scan.order = 3;
        })?,
    )?;
    let phi3_slope: f64 = detail(&phi3, "linear_slope")?;
    let compact = run::run(
        Experiment::SecularLoop,
        &resolved(Experiment::SecularLoop, |c| {
            c.loop_scan.compact_width = Some(1.0);
            c.loop_scan.spectral_tol = 1e-5;
            c.rel_tol = 1e-5;
            c.t_grid = Some(Grid { start: 10.0, stop: 200.0, points: 8, spacing: Spacing::Log });
        })?,
    )?;
    let bound: f64 = detail(&compact, "max_over_first")?;

    let vac = StateProfile::vacuum(1.0)?;
    let probes = [(3.0, 0.0), (3.5, 0.5), (4.0, 1.0), (5.0, 2.0), (2.6, 0.2)];
    let mut worst_sigma: f64 = 0.0;
    for (i, (p0, p)) in probes.into_iter().enumerate() {
        let w = SpectralWindow::new(p0, [0.0, p, 0.0], 0.3)?;
        let mc = spectral_numeric(3, &vac, &w, MonteCarlo { samples: 1_000_000, seed: 11 + i as u64 })?;
        let exact = window_average(|a, b| Ok(kl_weight_phi3_vacuum(a, b, 1.0)), &w, &[2.0], 1e-9)?;
        worst_sigma = worst_sigma.max((mc.value - exact).abs() / mc.std_error);
    }
    let ok = (fit.exponent - 1.0).abs() < 0.1
        && fit.r_squared > 0.99
        && phi3_slope.abs() < 1e-3 * thermal_slope
        && bound < 2.0
        && worst_sigma < 3.0;
    Ok((
        ok,
        format!(
            "thermal exponent {:.4} (r2 {:.5}), phi3/thermal slope {:.1e}, compact max/A(10) {bound:.3}, \
             MC worst {worst_sigma:.2} SE",
            fit.exponent,
            fit.r_squared,
            phi3_slope.abs() / thermal_slope
        ),
    ))
}

fn cumulants() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        worst = worst.max(random_residuals(5, n, 20, 200 + n as u64)?.into_iter().fold(0.0, f64::max));
    }
    let (d, eps) = (1.0, 0.5);
    let closed = |n: i32| (2.0 / (eps * f64::powf(d, eps))).powi(n - 1);
    // n = 2 by quadrature: ∫ (|u| + d)^{−1−ε} du over ℝ, with u = d(1/x − 1) on each half
    let (half, _) = integrate_real(|x: f64| d.powf(-eps) * x.powf(eps - 1.0), 0.0, 1.0, 0.0, 1e-12)?;
    let b2 = decay_product_bound(2, d, eps, 400_000, 1)?;
    let b3 = decay_product_bound(3, d, eps, 1_000_000, 2)?;
    let pair_exact = b2.closed_form == closed(2) && (2.0 * half - closed(2)).abs() < 1e-9;
    let triple = (b3.estimate / closed(3) - 1.0).abs();
    let ok = worst < 1e-10 && pair_exact && b3.closed_form == closed(3) && triple < 0.02;
    Ok((ok, format!("worst truncation residual {worst:.1e}, n=2 closed form {}, n=3 MC deviation {triple:.2e}", b2.closed_form)))
}

fn strip_runtime(json: &[u8]) -> Result<serde_json::Value, Box<dyn Error>> {
    let mut v: serde_json::Value = serde_json::from_slice(json)?;
    v.as_object_mut().ok_or("sidecar is not an object")?.remove("runtime_seconds");
    Ok(v)
}

fn run_bin(args: &[&str], out: &Path) -> Result<(), Box<dyn Error>> {
    let status = Command::new(env!("CARGO_BIN_EXE_secular")).args(args).arg("--out").arg(out).output()?.status;
    if status.success() {
        Ok(())
    } else {
        Err(format!("secular {args:?} exited with {status}").into())
    }
}

fn determinism() -> Outcome {
    let runs: [(&[&str], &str); 4] = [
        (&["toy", "--seed", "3"], "toy"),
        (&["cancel-check", "scalar", "--seed", "9"], "cancel-scalar"),
        (&["cumulant-check", "--seed", "5"], "cumulant"),
        (&["secular-scan", "dirac"], "secular-dirac"),
    ];
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    for (args, stem) in runs {
        run_bin(args, a.path())?;
        run_bin(args, b.path())?;
        let csv = |d: &Path| std::fs::read(d.join(format!("{stem}.csv")));
        let json = |d: &Path| std::fs::read(d.join(format!("{stem}.json")));
        if csv(a.path())? != csv(b.path())? {
            return Ok((false, format!("{stem}.csv differs between runs")));
        }
        if strip_runtime(&json(a.path())?)? != strip_runtime(&json(b.path())?)? {
            return Ok((false, format!("{stem}.json differs beyond its runtime field")));
        }
    }
    Ok((true, "toy, cancel-check scalar, cumulant-check, secular-scan dirac: CSV byte-identical".into()))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("toy growth exponents", toy_exponents),
        ("bogoliubov normalization", bogoliubov),
        ("thermal decay envelope", decay),
        ("linear secular slope", secular_slope),
        ("mode cancellation", cancellation),
        ("transversal cancellation", transversality),
        ("dirac suite", dirac_suite),
        ("loop dichotomy", loop_dichotomy),
        ("cumulant identity", cumulants),
        ("cli determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let (ok, msg) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        println!("{} {name}: {msg} [{secs:.1} s]", if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
