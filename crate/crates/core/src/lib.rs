//! Adversarially trained anonymizing encoders.
//!
//! An encoder maps inputs to a representation `U`; a regular branch predicts
//! the public label `Y` from `U` and a private branch predicts the hidden
//! label `Z`. Training alternates between fitting the branches and moving the
//! encoder so that `Y` stays predictable while the private cross-entropy is
//! pushed to the random-guess level. The `infotheory` module provides the
//! bounds that turn held-out cross-entropies into misclassification limits.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod eval;
pub mod infotheory;
pub mod nn;
pub mod objectives;
pub mod trainer;
pub mod validation;

pub use error::{Error, Result};
