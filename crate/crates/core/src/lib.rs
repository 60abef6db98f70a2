//! Convergence-rate certificates and limiting characteristics for four
//! classes of time-inhomogeneous Markovian multiserver queues.
//!
//! The pipeline: a [`model::ModelSpec`] fixes the transition law, a
//! [`dseq::DSequence`] fixes the weights of the transformed norm, the
//! [`bounds`] module turns the pair into a certificate (decay rates,
//! periodic constants, bound curves), and the [`kolmogorov`] and
//! [`simulate`] modules provide two independent numerical oracles (ODE
//! solution of the forward Kolmogorov system, Monte-Carlo thinning) that
//! the certificates are checked against.

pub mod bounds;
pub mod config;
pub mod dseq;
pub mod error;
pub mod generator;
pub mod kolmogorov;
pub mod model;
pub mod simulate;
pub mod timefn;

pub use bounds::{
    aggregate, alpha_i, bound_curves, bounds_report, chi_i, decay_parameter_bound, log_norm,
    periodic_constants, Aggregate, BoundCurves, BoundsReport, PeriodicConstants, Verdict,
};
pub use config::{DSequenceConfig, RunConfig};
pub use dseq::{norm_1d, norm_1e, DSequence, NormConstants};
pub use error::{Error, Result};
pub use model::{ModelSpec, QueueClass, StateRule, StateRules};
pub use timefn::TimeFunction;
