//! Equation discovery for dynamical systems.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod bench;
pub mod dynsys;
pub mod exec;
pub mod expr;
pub mod float_serde;
pub mod gpsr;
pub mod odeint;
pub mod sindy;
pub mod stats;
