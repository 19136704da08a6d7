use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use secular_core::cumulants::{decay_product_bound, random_residuals};
use secular_core::dirac_ed::{cancellation_residuals, secular_probe_j_parts};
use secular_core::loops::{
    adiabatic_growth_slope, compact_a_scan, declared_support, LoopOptions, SignalFit, SpectralFunction, StateProfile,
};
use secular_core::propagators::{decay_envelope, dirac_two_point, scalar_two_point};
use secular_core::scalar_ed::{
    magnetic_cancellation_residual, mode_cancellation_residual, secular_coefficient, smeared_first_order_w,
    ExternalPotential,
};
use secular_core::toymodel::order_envelope_scan;
use secular_core::{PropagatorKind, SpacetimePoint, TestFunction, ThermalParams};

use crate::config::{CancelPotential, Experiment, ScanConfig};
use crate::output::{verdict_from_scan, Cell, ScanResult, Table, Verdict};
use crate::CliError;

/// Runs one experiment on a resolved configuration.
pub fn run(exp: Experiment, cfg: &ScanConfig) -> Result<ScanResult, CliError> {
    match exp {
        Experiment::Toy => toy(cfg),
        Experiment::Propagator => propagator(cfg),
        Experiment::SecularScalar => secular_scalar(cfg),
        Experiment::SecularDirac => secular_dirac(cfg),
        Experiment::SecularLoop => secular_loop(cfg),
        Experiment::CancelScalar => cancel_scalar(cfg),
        Experiment::CancelDirac => cancel_dirac(cfg),
        Experiment::Cumulant => cumulant(cfg),
        Experiment::Decay => decay(cfg),
    }
}

fn params(cfg: &ScanConfig) -> ThermalParams {
    match cfg.beta {
        Some(b) => ThermalParams::new(b, cfg.mass),
        None => ThermalParams::vacuum(cfg.mass),
    }
}

fn grid(cfg: &ScanConfig) -> Vec<f64> {
    cfg.t_grid.expect("resolved configuration carries a grid").nodes()
}

/// (t, value, error_estimate) table; the error column is rel_tol·|value|.
fn time_scan(exp: Experiment, cfg: &ScanConfig, rows: &[(f64, f64)], details: serde_json::Value) -> Result<ScanResult, CliError> {
    let mut table = Table::new(&["t", "value", "error_estimate"]);
    for &(t, v) in rows {
        table.push(vec![Cell::Float(t), Cell::Float(v), Cell::Float(cfg.rel_tol * v.abs())]);
    }
    let (verdict, fit) = verdict_from_scan(rows)?;
    Ok(ScanResult { experiment: exp, table, verdict, fit, details })
}

fn toy(cfg: &ScanConfig) -> Result<ScanResult, CliError> {
    let scan = order_envelope_scan(cfg.toy.order, &grid(cfg), cfg.mass, cfg.toy.delta_m2, cfg.rel_tol)?;
    let rows: Vec<(f64, f64)> = scan.iter().map(|&(t, v)| (t, v.norm())).collect();
    let expected = f64::from(cfg.toy.order) - 1.5;
    time_scan(Experiment::Toy, cfg, &rows, json!({ "order": cfg.toy.order, "expected_exponent": expected }))
}

fn two_point_modulus(kind: PropagatorKind, p: &ThermalParams, x: &SpacetimePoint, tol: f64) -> Result<f64, CliError> {
    Ok(if kind.is_dirac() {
        dirac_two_point(kind, p, x, &SpacetimePoint::ORIGIN, tol)?.max_abs()
    } else {
        scalar_two_point(kind, p, x, &SpacetimePoint::ORIGIN, tol)?.norm()
    })
}

fn propagator(cfg: &ScanConfig) -> Result<ScanResult, CliError> {
    let kind = cfg.propagator.kind.expect("resolved");
    let p = params(cfg);
    let rows = grid(cfg)
        .par_iter()
        .map(|&t| {
            let x = SpacetimePoint::new(t, [0.0, 0.0, cfg.propagator.offset]);
            Ok((t, two_point_modulus(kind, &p, &x, cfg.rel_tol)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    time_scan(Experiment::Propagator, cfg, &rows, json!({ "kind": kind, "offset": cfg.propagator.offset }))
}

fn decay(cfg: &ScanConfig) -> Result<ScanResult, CliError> {
    let kind = cfg.propagator.kind.expect("resolved");
    let p = params(cfg);
    let rows = decay_envelope(kind, &p, &grid(cfg), cfg.propagator.offset, cfg.rel_tol)?;
    let max = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let mut details = json!({ "kind": kind, "offset": cfg.propagator.offset, "max_min_ratio": max / min });
    if kind == PropagatorKind::ScalarVacuum && cfg.propagator.offset == 0.0 {
        // t^{3/2}|ω₂(t, 0)| → √(2m)/(8π^{3/2})
        let limit = (2.0 * cfg.mass).sqrt() / (8.0 * PI.powf(1.5));
        let dev = rows
            .iter()
            .filter(|r| cfg.mass * r.0 >= 10.0)
            .map(|r| (r.1 / limit - 1.0).abs())
            .fold(None, |a: Option<f64>, d| Some(a.map_or(d, |a| a.max(d))));
        details["vacuum_limit"] = json!(limit);
        details["max_rel_deviation_mt_ge_10"] = json!(dev);
    }
    time_scan(Experiment::Decay, cfg, &rows, details)
}

fn secular_scalar(cfg: &ScanConfig) -> Result<ScanResult, CliError> {
    let pk = &cfg.packets;
    let at = |x: f64| TestFunction::gaussian(SpacetimePoint::new(0.0, [x, 0.0, 0.0]), pk.time_width, pk.space_width);
    let (f, g) = (at(0.5 * pk.separation), at(-0.5 * pk.separation));
    let pot = ExternalPotential::scalar_linear(0, cfg.coupling)?;
    let p = params(cfg);
    let rows = grid(cfg)
        .par_iter()
        .map(|&t| Ok((t, smeared_first_order_w(t, &f, &g, &pot, &p, &cfg.switch, cfg.rel_tol)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let coeff = secular_coefficient(&f, &g, &pot, &p, cfg.rel_tol)?.norm();
    let &(t_last, w_last) = rows.last().expect("grid has at least two points");
    let details = json!({
        "slope_closed_form": coeff,
        "slope_at_t_max": w_last / t_last,
        "slope_ratio": w_last / t_last / coeff,
    });
    time_scan(Experiment::SecularScalar, cfg, &rows, details)
}

fn secular_dirac(cfg: &ScanConfig) -> Result<ScanResult, CliError> {
    let p = params(cfg);
    let n = cfg.probe.order;
    // J oscillates as e^{±2imt}; the envelope is |J₊| + |J₋|
    let rows = grid(cfg)
        .par_iter()
        .map(|&t| {
            let [a, b] = secular_probe_j_parts(n, t, cfg.probe.field, &p, &cfg.switch, cfg.rel_tol)?;
            Ok((t, a.norm() + b.norm()))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let expected = f64::from(n / 2) - 1.5;
    time_scan(Experiment::SecularDirac, cfg, &rows, json!({ "order": n, "expected_exponent": expected }))
}

fn secular_loop(cfg: &ScanConfig) -> Result<ScanResult, CliError> {
    let l = &cfg.loop_scan;
    let profile = match cfg.beta {
        Some(b) => StateProfile::kms(b, cfg.mass)?,
        None => StateProfile::vacuum(cfg.mass)?,
    };
    let support = declared_support(l.order, &profile)?;
    let s = if l.order == 3 && profile.is_vacuum() {
        SpectralFunction::phi3_vacuum(cfg.mass)
    } else {
        SpectralFunction::from_profile(l.order, profile, l.spectral_tol)?.memoized()
    };
    let opts = LoopOptions {
        coupling: cfg.coupling,
        smearing_width: l.smearing_width,
        shell_window: l.shell_window,
        table_nodes: l.table_nodes,
        ..LoopOptions::default()
    };
    let pmag: Vec<f64> = (0..l.pmag_points).map(|i| l.pmag_max * i as f64 / (l.pmag_points - 1) as f64).collect();
    let ts = grid(cfg);
    let meets = pmag.iter().any(|&p| support.meets_negative_shell(p, cfg.mass));
    match l.compact_width {
        None => {
            let g = adiabatic_growth_slope(&s, &opts, l.vertex, &pmag, &ts, cfg.rel_tol)?;
            let rows: Vec<(f64, f64)> = g.samples.iter().map(|x| (x.t, x.value)).collect();
            let mut r = time_scan(
                Experiment::SecularLoop,
                cfg,
                &rows,
                json!({
                    "mode": "adiabatic",
                    "support_meets_negative_shell": meets,
                    "linear_slope": g.linear_slope,
                    "asymptotic_slope": g.asymptotic_slope,
                }),
            )?;
            if let SignalFit::BoundedSignal = g.fit {
                r.verdict = Verdict::Bounded;
                r.fit = None;
            }
            Ok(r)
        }
        Some(w) => {
            let rows = compact_a_scan(&s, &opts, w, &pmag, &ts, cfg.rel_tol)?;
            let first = rows[0].1;
            let max = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
            let details = json!({
                "mode": "compact",
                "compact_width": w,
                "support_meets_negative_shell": meets,
                "max_over_first": max / first,
            });
            time_scan(Experiment::SecularLoop, cfg, &rows, details)
        }
    }
}

/// Seeded draws (ω_p, ω_k, β) with ω ∈ [1, 10) and β ∈ [0.1, 5); the vacuum
/// configuration pins β = ∞.
fn energy_draws(cfg: &ScanConfig, rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let wp = rng.random_range(1.0..10.0);
    let wk = rng.random_range(1.0..10.0);
    let b = rng.random_range(0.1..5.0);
    (wp, wk, if cfg.beta.is_none() { f64::INFINITY } else { b })
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = rng.random_range(-1.0..1.0);
    let ph: f64 = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    [s * ph.cos(), s * ph.sin(), z]
}

fn residual_table(exp: Experiment, rows: Vec<(f64, f64, f64, f64)>, threshold: f64, details: serde_json::Value) -> ScanResult {
    let mut table = Table::new(&["trial", "omega_p", "omega_k", "beta", "residual"]);
    let mut worst: f64 = 0.0;
    for (i, (wp, wk, b, r)) in rows.into_iter().enumerate() {
        worst = worst.max(r);
        table.push(vec![Cell::Int(i as u64), Cell::Float(wp), Cell::Float(wk), Cell::Float(b), Cell::Float(r)]);
    }
    ScanResult { experiment: exp, table, verdict: Verdict::from_residual(worst, threshold), fit: None, details }
}

fn cancel_scalar(cfg: &ScanConfig) -> Result<ScanResult, CliError> {
    let c = &cfg.cancel;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vortex = ExternalPotential::axial_vortex(cfg.coupling);
    let mut rows = Vec::with_capacity(c.trials);
    for _ in 0..c.trials {
        let (wp, wk, b) = energy_draws(cfg, &mut rng);
        let r = match c.potential {
            CancelPotential::Linear => mode_cancellation_residual(wp, wk, b)?,
            CancelPotential::Vortex => {
                let (dp, dk) = (unit_vector(&mut rng), unit_vector(&mut rng));
                let p = if b.is_finite() { ThermalParams::new(b, cfg.mass) } else { ThermalParams::vacuum(cfg.mass) };
                magnetic_cancellation_residual(&p, wp, wk, dp, dk, &vortex)?
            }
        };
        rows.push((wp, wk, b, r));
    }
    Ok(residual_table(Experiment::CancelScalar, rows, c.threshold, json!({ "potential": c.potential, "threshold": c.threshold })))
}

fn cancel_dirac(cfg: &ScanConfig) -> Result<ScanResult, CliError> {
    let c = &cfg.cancel;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows = (0..c.trials)
        .map(|_| {
            let (wp, wk, b) = energy_draws(cfg, &mut rng);
            let [v, t] = cancellation_residuals(wp, wk, b);
            (wp, wk, b, v.max(t))
        })
        .collect();
    Ok(residual_table(Experiment::CancelDirac, rows, c.threshold, json!({ "threshold": c.threshold })))
}

fn cumulant(cfg: &ScanConfig) -> Result<ScanResult, CliError> {
    let c = &cfg.cumulant;
    let mut table = Table::new(&["order", "trial", "residual"]);
    let mut worst: f64 = 0.0;
    for n in 1..=c.max_order {
        let res = random_residuals(c.dimension, n, c.trials, cfg.seed.wrapping_add(n as u64))?;
        for (i, r) in res.into_iter().enumerate() {
            worst = worst.max(r);
            table.push(vec![Cell::Int(n as u64), Cell::Int(i as u64), Cell::Float(r)]);
        }
    }
    let bounds = (2..=3)
        .map(|n| {
            let b = decay_product_bound(n, c.decay_distance, c.decay_epsilon, c.decay_samples, cfg.seed.wrapping_add(100 + n as u64))?;
            Ok(json!({
                "n": n,
                "estimate": b.estimate,
                "std_error": b.std_error,
                "closed_form": b.closed_form,
                "relative_deviation": b.estimate / b.closed_form - 1.0,
            }))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(ScanResult {
        experiment: Experiment::Cumulant,
        table,
        verdict: Verdict::from_residual(worst, c.threshold),
        fit: None,
        details: json!({ "threshold": c.threshold, "decay_bounds": bounds }),
    })
}
