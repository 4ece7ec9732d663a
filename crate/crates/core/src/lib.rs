//! Numerical laboratory for collapsing Ricci-flat metrics on torus fibrations.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod gh;
pub mod grid;
pub mod hk;
pub mod io;
pub mod linalg;
pub mod ma_solver;
pub mod model;
pub mod par;
pub mod semiflat;
pub mod verify;

pub use error::{Error, Result};
