//! Near-integrable symplectic twist maps: iteration, resonance analysis,
//! pendulum reduction, orbit classification, Monte Carlo surveys and a
//! numeric checker for KAM constant bookkeeping.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classifier;
pub mod cli;
pub mod config;
pub mod error;
pub mod kamcheck;
pub mod lattice;
pub mod map_engine;
pub mod output;
pub mod pendulum;
pub mod quadrature;
pub mod resonance;
pub mod spectral;
pub mod survey;
pub mod svg;
pub mod trig;

pub use error::{Error, Result};
pub use map_engine::{inverse_step, iterate, jacobian_determinant, map_step, Orbit, PhaseState};
pub use resonance::{detect_resonances, Convention, ResonanceReport, SingleResonanceGeometry};
pub use spectral::{first_order_projection, project_resonant, solve_cohomological, ResonanceModule};
pub use trig::{Harmonic, TrigSeries};
