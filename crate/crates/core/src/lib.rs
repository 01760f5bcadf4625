//! Epistemic-uncertainty gating for post-hoc explanations of tabular
//! classifiers.
//!
//! The crate trains classifiers that carry their own uncertainty estimate
//! (bootstrap logistic regression, random forest, MC-dropout MLP), explains
//! their predictions with attribution methods of different cost, measures
//! how attributions degrade under input perturbation, and gates explanation
//! effort on a per-sample epistemic score.

pub mod attribution;
pub mod data;
pub mod error;
pub mod experiments;
pub mod gating;
pub mod linalg;
pub mod models;
pub mod oracle;
pub mod perturbation;
pub mod rng;
pub mod stability;
pub mod uncertainty;

pub use error::{Error, Result};
