// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod banded;
pub mod config;
pub mod constants;
pub mod dense;
pub mod domain;
pub mod eigen;
pub mod error;
pub mod flow;
pub mod minmax;
pub mod morse;
pub mod ode;
pub mod operator;
pub mod record;
pub mod sampling;
pub mod shooting;

pub use domain::{Domain, DomainSpec, Field};
pub use error::{MassflowError, Result};
