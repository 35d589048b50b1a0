//! Numerical laboratory for a two-producer Bertrand duopoly in which a major
//! urban producer (U) and a local producer (L) export a differentiated food
//! to a third market.
//!
//! The local producer carries a location-inefficiency cost and adds value to
//! its food; a local government chooses a level of administrative guidance
//! that raises the success probability of that added value and lowers its
//! extra unit cost.
//!
//! Modules, bottom-up:
//!
//! * [`model`]: primitives, policy-function families, consumer thresholds and
//!   surplus.
//! * [`demand`]: the [`demand::DemandSystem`] abstraction with the specific
//!   (preference-threshold) system and a linear system as built-ins.
//! * [`equilibrium`]: closed-form, iterative and Newton Nash solvers, the
//!   stability quantities and reaction / iso-profit curve data.
//! * [`dynamics`]: price adjustment toward best responses and Liapunov
//!   descent checks.
//! * [`statics`]: comparative statics, analytic and by re-solve.
//! * [`policy`]: the first-stage choice of guidance.
//! * [`extended`]: the variant in which the local producer also picks its
//!   added value.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demand;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod extended;
pub mod model;
pub mod numeric;
pub mod policy;
pub mod sampling;
pub mod statics;

pub use demand::{DemandSystem, LinearDemand, LinearDemandParams, SpecificDemand};
pub use equilibrium::{Equilibrium, Prices, Producer, SolveMethod};
pub use error::{Error, Result};
pub use model::{MarketPrimitives, Model, PolicyFunctions};
