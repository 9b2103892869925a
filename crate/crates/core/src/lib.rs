//! Mechanistic reaction-pathway engine.
//!
//! Elementary reaction templates are applied to the species of a reaction
//! record until the recorded products appear; the resulting network is
//! pruned to its productive pathways, serialised as a step dataset, and used
//! to evaluate step predictors with a discounted-rank or probability beam
//! search.

pub mod beam;
pub mod metrics;
pub mod molgraph;
pub mod network;
pub mod rewrite;
pub mod template;
