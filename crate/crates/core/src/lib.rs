// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod flux;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod perturbation;
pub mod run;
pub mod spectral;
pub mod weights;

pub use error::{Error, Result};
