//! Exact event-driven simulation of a nearest-neighbour random walk on the
//! one-dimensional simple symmetric exclusion process.
//!
//! The environment is realized through the interchange graphical
//! representation and materialized lazily: only agents the walker has
//! observed are stored, every other site is a fresh Bernoulli(ρ) draw. A
//! regeneration detector cuts each trajectory into i.i.d. blocks, and the
//! [`stats`] module turns blocks and replicas into estimates of the speed,
//! the diffusion constant, large-deviation decay and the Einstein relation.
//!
//! ```
//! use sepwalk_core::engine::{Engine, EngineConfig};
//! use sepwalk_core::model::ModelParams;
//! use sepwalk_core::randomness::StateDraws;
//!
//! let params = ModelParams::new(2.5, 4.0, 0.4, 0.6, 0.6).unwrap();
//! let mut engine = Engine::new(EngineConfig::new(params, 7), StateDraws::new(7, 0.6)).unwrap();
//! engine.run_until(50.0).unwrap();
//! assert!(engine.walker().x > 0);
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod environment;
pub mod experiment;
pub mod model;
pub mod randomness;
pub mod regeneration;
pub mod stats;
pub mod torus;
pub mod walker;

/// Continuous time.
pub type Time = f64;

/// Lattice site.
pub type Site = i64;

pub use engine::{Engine, EngineConfig, EngineError};
pub use model::{ModelParams, PerturbationParams};
pub use regeneration::RegenerationBlock;
