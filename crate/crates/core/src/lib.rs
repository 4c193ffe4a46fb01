//! Monte Carlo and quadrature toolkit for the Virasoro orbital measures and
//! the Schwarzian field theory.
//!
//! Paths are sampled as exact Brownian bridges on uniform grids and pushed
//! through the Malliavin–Shavgulidze map to circle diffeomorphisms; orbital
//! measures are obtained by exponential reweighting. Every closed-form
//! identity about those measures (partition functions, change-of-variables
//! densities, the boundary-defect identity, Haar regularisation, metric
//! correlators) has a numerical check here.

pub mod bridge;
pub mod circle;
pub mod cov;
pub mod error;
pub mod hill;
pub mod mc;
pub mod metric;
pub mod mobius;
pub mod orbital;
pub mod quadrature;
pub mod schwarzian;
pub mod smooth;

pub use bridge::{bridge_mass, ms_inverse, ms_map, sample_bridge, CircleDiffeo, GridPath, NodalDiffeo};
pub use circle::{cross_ratio, CircleJet, CircleMap};
pub use error::{Error, Result};
pub use mc::{McConfig, MCEstimate};
pub use mobius::MobiusElement;
pub use orbital::OrbitalParams;
pub use smooth::{Jet, SmoothMap};
