//! Harness for testing whether people can tell real pedestrian crowds from
//! social-force simulations.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod arena;
pub mod calibration;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod noise;
pub mod render;
pub mod sim;
pub mod trajectory;

pub use error::{Error, Result};
