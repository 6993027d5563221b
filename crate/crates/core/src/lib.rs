//! Bipedal spring-mass model: hybrid dynamics, the section return map,
//! viability and robust regions, gait transitions and phase analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod observables;
pub mod regions;
pub mod section;
pub mod signal;
pub mod transitions;

pub use error::{Result, SlipError};
