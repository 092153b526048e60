//! Dense-matrix reverse-mode autodiff: the tape, its primitives, Adam, and a
//! finite-difference gradient checker.

mod adam;
mod gradcheck;
mod mat;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use mat::Mat;
pub use tape::{Tape, Tensor, LOG_FLOOR};
