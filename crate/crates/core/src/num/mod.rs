//! Minimal dense-tensor math with reverse-mode differentiation, plus the
//! optimizer, schedules, dropout masking, named RNG streams, and a
//! finite-difference gradient checker.

pub mod blob;
pub mod dropout;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use dropout::{dropconnect, dropout_mask};
pub use gradcheck::{grad_check, DEFAULT_EPS};
pub use graph::{Graph, Var};
pub use optim::{adam_step, stlr, AdamHyper, AdamState, LrSchedule, ScheduleKind};
pub use rng::RngTree;
pub use tensor::{matmul, Scalar, Tensor};
