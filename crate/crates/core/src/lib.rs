//! Deployment toolkit for microservice architectures: synthesize
//! minimum-cost correct configurations over priced, resource-bounded
//! nodes, derive executable reconfiguration plans, and simulate runtime
//! adaptation strategies against a message-processing pipeline.
//!
//! The crate is organized around five concerns:
//!
//! - [`model`] — service/node types, configurations, and the correctness
//!   predicate.
//! - [`synthesis`] — the optimal deployment problem: constraints,
//!   branch-and-bound search, and an exhaustive oracle.
//! - [`plan`] — ordered create/deploy/bind action sequences between two
//!   configurations, validated by replay.
//! - [`pipeline`] — the built-in email-processing case study, its
//!   throughput model, and greedy scale selection.
//! - [`sim`] — a deterministic fixed-timestep simulator with local and
//!   global adaptation controllers.

pub mod model;
pub mod pipeline;
pub mod plan;
pub mod synthesis;
