//! Label-consistent sparse dictionary learning.
//!
//! Two interchangeable sparse encoders (a strict Top-K LISTA network with
//! trainable feedback matrices, and a FISTA elastic-net solver) feed an
//! alternating scheme over the dictionary `D`, the label-consistency transform
//! `A` and the linear classifier `W`. The [`diagnostics`] module certifies the
//! sufficient-decrease and relative-error conditions of the convex pipeline at
//! run time.

pub mod error;
pub mod linalg;
pub mod model;
pub mod encoders;
pub mod updates;
pub mod diagnostics;
pub mod eval;
pub mod trainer;
pub mod io;
pub mod synthetic;

pub use error::{Error, Result};
