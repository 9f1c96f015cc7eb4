#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod authengine;
pub mod error;
pub mod kalman;
pub mod linalg;
pub mod sim;
pub mod specfun;
pub mod statespace;
pub mod threshold;

pub use error::{Error, Result};
