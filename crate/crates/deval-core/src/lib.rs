//! deval-core: a harness for measuring whether language models can *derive*
//! answers under controlled input transformations.
//!
//! The core abstraction is a derivation rule: a pair of relations `(T, R)`
//! where `T` relates a base task input to a transformed one and `R` states how
//! the ground-truth outputs of the two must relate. A model is probed with a
//! two-round dialogue (base question, then transformed question in the same
//! conversation); its pair of answers passes when `R` holds. The fraction of
//! passing pairs is the derivation-capability score (DCS).
//!
//! Module map:
//! - [`dr`]: rule metadata, case pairs, verdicts, and the DCS metric.
//! - [`tasks`]: the eight task families with generators, transforms,
//!   relations, and exact reference solvers.
//! - [`registry`]: binds rule ids to their transform/relation functions.
//! - [`gateway`]: chat-completion client plus deterministic builtin models.
//! - [`strategies`]: prompt-engineering suffixes for the second round.
//! - [`runner`]: case construction, dialogue execution, persistence.
//! - [`analysis`]: score aggregation, error attribution, rule proposal.

pub mod analysis;
mod b64;
pub mod dr;
pub mod gateway;
pub mod registry;
pub mod runner;
pub mod strategies;
pub mod tasks;
