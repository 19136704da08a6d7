//! Numerical laboratory for secular growth in perturbative quantum field theory
//! on thermal and vacuum backgrounds.
//!
//! The oscillatory quadrature kernel and the fitting utilities are generic over
//! the floating point type through [`Real`]; the physics layers work in `f64`.

// `!(x > 0.0)` guards deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cumulants;
pub mod dirac_ed;
pub mod error;
pub mod loops;
pub mod propagators;
pub mod quadrature;
pub mod real;
pub mod scalar_ed;
pub mod spacetime;
pub mod spinor;
pub mod switching;
pub mod toymodel;

pub use error::{Error, Result};
pub use real::Real;
pub use propagators::{PropagatorKind, ThermalParams};
pub use spacetime::{Momentum3, SpacetimePoint};
pub use spinor::{GammaBasis, SpinorMatrix};
pub use switching::{SwitchFunction, SwitchShape, TestFunction};
pub use toymodel::{BogoliubovPair, MassQuench};

pub type Estimate64 = quadrature::Estimate<f64>;
pub type Estimate32 = quadrature::Estimate<f32>;
pub type GrowthFit64 = quadrature::GrowthFit<f64>;
pub type GrowthFit32 = quadrature::GrowthFit<f32>;
pub use quadrature::GrowthFit;
