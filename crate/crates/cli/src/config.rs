//! JSON run configuration. Every field is optional; missing fields take the
//! documented defaults (β = 1, m = 1, rel_tol = 1e-8, seed = 0).

use serde::{Deserialize, Serialize};

use secular_core::loops::LoopVertex;
use secular_core::{PropagatorKind, SwitchFunction};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Toy,
    Propagator,
    SecularScalar,
    SecularDirac,
    SecularLoop,
    CancelScalar,
    CancelDirac,
    Cumulant,
    Decay,
}

impl Experiment {
    /// File stem of the CSV and JSON outputs.
    pub fn stem(self) -> &'static str {
        match self {
            Self::Toy => "toy",
            Self::Propagator => "propagator",
            Self::SecularScalar => "secular-scalar",
            Self::SecularDirac => "secular-dirac",
            Self::SecularLoop => "secular-loop",
            Self::CancelScalar => "cancel-scalar",
            Self::CancelDirac => "cancel-dirac",
            Self::Cumulant => "cumulant",
            Self::Decay => "decay",
        }
    }

    fn default_grid(self) -> Grid {
        let log = |start, stop, points| Grid { start, stop, points, spacing: Spacing::Log };
        match self {
            Self::Toy | Self::SecularDirac | Self::SecularLoop => log(20.0, 200.0, 10),
            Self::SecularScalar => log(50.0, 400.0, 12),
            Self::Propagator | Self::Decay => log(2.0, 64.0, 16),
            Self::CancelScalar | Self::CancelDirac | Self::Cumulant => log(1.0, 2.0, 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default = "log_spacing")]
    pub spacing: Spacing,
}

fn log_spacing() -> Spacing {
    Spacing::Log
}

impl Grid {
    pub fn nodes(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.start];
        }
        (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Log => self.start * (self.stop / self.start).powf(s),
                    Spacing::Linear => self.start + (self.stop - self.start) * s,
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        let ok = self.start.is_finite()
            && self.stop.is_finite()
            && self.stop > self.start
            && self.points >= 2
            && self.points <= 100_000
            && (self.spacing == Spacing::Linear || self.start > 0.0);
        if ok {
            Ok(())
        } else {
            Err(CliError::ConfigInvalid(format!("bad t_grid {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub order: u32,
    pub delta_m2: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { order: 2, delta_m2: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorConfig {
    /// Defaults to scalar_kms for `propagator` and dirac_kms_plus for `decay-check`.
    pub kind: Option<PropagatorKind>,
    /// Spatial separation along ê₃.
    pub offset: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self { kind: None, offset: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketConfig {
    /// Distance between the centres of f and g along ê₁.
    pub separation: f64,
    pub time_width: f64,
    pub space_width: f64,
}

impl Default for PacketConfig {
    fn default() -> Self {
        Self { separation: 1.0, time_width: 0.5, space_width: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub order: u32,
    pub field: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { order: 4, field: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// 3 or 4 internal lines.
    pub order: u32,
    pub vertex: LoopVertex,
    /// Width W of the compact test function h; absent means the adiabatic limit.
    pub compact_width: Option<f64>,
    pub smearing_width: f64,
    pub shell_window: f64,
    pub table_nodes: usize,
    pub pmag_max: f64,
    pub pmag_points: usize,
    /// Tolerance for the loop integrals; the scan itself uses the global rel_tol.
    pub spectral_tol: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            order: 4,
            vertex: LoopVertex::Full,
            compact_width: None,
            smearing_width: 1.0,
            shell_window: 1.0,
            table_nodes: 49,
            pmag_max: 3.6,
            pmag_points: 13,
            spectral_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CancelPotential {
    /// A₀ = e x₁, checked through the mode coefficients.
    Linear,
    /// Transversal axial vortex, checked through the magnetic residual.
    Vortex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CancelConfig {
    pub trials: usize,
    pub potential: CancelPotential,
    pub threshold: f64,
}

impl Default for CancelConfig {
    fn default() -> Self {
        Self { trials: 100, potential: CancelPotential::Linear, threshold: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CumulantConfig {
    pub dimension: usize,
    pub max_order: usize,
    pub trials: usize,
    pub threshold: f64,
    pub decay_distance: f64,
    pub decay_epsilon: f64,
    pub decay_samples: usize,
}

impl Default for CumulantConfig {
    fn default() -> Self {
        Self {
            dimension: 5,
            max_order: 4,
            trials: 20,
            threshold: 1e-10,
            decay_distance: 1.0,
            decay_epsilon: 0.5,
            decay_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// Inverse temperature; `null` selects the vacuum.
    pub beta: Option<f64>,
    pub mass: f64,
    pub coupling: f64,
    pub rel_tol: f64,
    pub seed: u64,
    pub t_grid: Option<Grid>,
    pub switch: SwitchFunction,
    pub toy: ToyConfig,
    pub propagator: PropagatorConfig,
    pub packets: PacketConfig,
    pub probe: ProbeConfig,
    #[serde(rename = "loop")]
    pub loop_scan: LoopConfig,
    pub cancel: CancelConfig,
    pub cumulant: CumulantConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            beta: Some(1.0),
            mass: 1.0,
            coupling: 1.0,
            rel_tol: 1e-8,
            seed: 0,
            t_grid: None,
            switch: SwitchFunction::smoothstep(1.0, 3),
            toy: ToyConfig::default(),
            propagator: PropagatorConfig::default(),
            packets: PacketConfig::default(),
            probe: ProbeConfig::default(),
            loop_scan: LoopConfig::default(),
            cancel: CancelConfig::default(),
            cumulant: CumulantConfig::default(),
        }
    }
}

impl ScanConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::ConfigInvalid(e.to_string()))
    }

    /// Fills in the experiment-dependent defaults and checks ranges.
    pub fn resolve(mut self, exp: Experiment) -> Result<Self, CliError> {
        let grid = *self.t_grid.get_or_insert_with(|| exp.default_grid());
        grid.validate()?;
        if exp == Experiment::Propagator || exp == Experiment::Decay {
            let default = if exp == Experiment::Decay { PropagatorKind::DiracKmsPlus } else { PropagatorKind::ScalarKms };
            self.propagator.kind.get_or_insert(default);
        }
        let bad = |what: &str| Err(CliError::ConfigInvalid(what.to_string()));
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return bad("beta must be positive, or null for the vacuum");
            }
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return bad("mass must be positive");
        }
        if !self.coupling.is_finite() {
            return bad("coupling must be finite");
        }
        if !(self.rel_tol > 1e-14 && self.rel_tol < 1e-2) {
            return bad("rel_tol must lie in (1e-14, 1e-2)");
        }
        if !(self.switch.epsilon >= 0.0 && self.switch.epsilon.is_finite()) {
            return bad("switch epsilon must be non-negative");
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        match exp {
            Experiment::Toy if self.toy.order > 12 => return bad("toy order above 12"),
            Experiment::Toy if !(self.toy.delta_m2 > -self.mass * self.mass) => return bad("delta_m2 must exceed -m^2"),
            Experiment::SecularScalar
                if !(positive(self.packets.time_width) && positive(self.packets.space_width)) =>
            {
                return bad("packet widths must be positive")
            }
            Experiment::SecularDirac if !matches!(self.probe.order, 2 | 4 | 6) => return bad("probe order must be 2, 4 or 6"),
            Experiment::SecularLoop => {
                let l = &self.loop_scan;
                if !matches!(l.order, 3 | 4) {
                    return bad("loop order must be 3 or 4");
                }
                if l.compact_width.is_some_and(|w| !positive(w)) {
                    return bad("compact_width must be positive");
                }
                if !(positive(l.pmag_max) && l.pmag_points >= 2) {
                    return bad("momentum grid needs pmag_max > 0 and at least 2 points");
                }
                if !(l.spectral_tol > 1e-14 && l.spectral_tol < 1e-2) {
                    return bad("spectral_tol must lie in (1e-14, 1e-2)");
                }
            }
            Experiment::CancelScalar | Experiment::CancelDirac if self.cancel.trials == 0 => {
                return bad("cancel trials must be positive")
            }
            Experiment::Cumulant => {
                let c = &self.cumulant;
                if c.dimension < 2 || c.max_order == 0 || c.max_order > 6 || c.trials == 0 {
                    return bad("cumulant check needs dimension >= 2, 1 <= max_order <= 6, trials >= 1");
                }
            }
            _ => {}
        }
        Ok(self)
    }
}
