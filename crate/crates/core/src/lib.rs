//! Influence-guided cleaning of probabilistic training labels.
//!
//! Uncleaned samples are ranked by a label-aware influence score that also
//! proposes a replacement label, candidates are pruned across rounds with
//! perturbation bounds cached at the initial model, and the downstream
//! softmax model is refreshed by replaying its SGD trace with quasi-Newton
//! gradient corrections instead of retraining.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod dataio;
pub mod deltagrad;
pub mod error;
pub mod increm;
pub mod influence;
pub mod linalg;
pub mod model;
pub mod numerics;
pub mod par;
pub mod pipeline;
pub mod rng;

pub use error::{ChefError, Result};
