//! Simulator and analysis toolkit for the absorbing-state phase transition
//! of a one-dimensional lattice of diffusively coupled Gauss maps.
//!
//! The lattice updates synchronously as
//! `x_i(t+1) = (1-eps) f(x_i(t)) + (eps/2) [f(x_{i+1}(t)) + f(x_{i-1}(t))]`
//! with `f(x) = exp(-nu x^2) + beta` and periodic boundaries. Cells are
//! coarse-grained to spins by comparison with the largest fixed point of f,
//! and the transition to a coarse-grained period-2 state is quantified
//! through the flip rate F(t), local persistence P(t), damage spreading and
//! the largest Lyapunov exponent, plus power-law fits and scaling collapses
//! over system size and distance from the critical point.
//!
//! All ensembles are deterministic: per-configuration RNG streams are derived
//! from (master seed, configuration index), and reductions run in
//! configuration-index order regardless of worker count.

pub mod cli;
pub mod config;
pub mod damage;
pub mod ensemble;
pub mod error;
pub mod lattice;
pub mod lyapunov;
pub mod map;
pub mod observables;
pub mod output;
pub mod scaling;

pub use config::Config;
pub use error::{Error, Result};
pub use lattice::{EnsembleSpec, LatticeState};
pub use map::MapParams;
pub use observables::{ObservableSeries, SpinField};
