//! Dense linear algebra, probability primitives, seeded randomness, Adam and
//! a finite-difference gradient checker. Everything is `f64`.

mod adam;
mod gradcheck;
mod matrix;
mod prob;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use matrix::{argmax, axpy, dot, norm_sq, sub, DenseMatrix, DenseVector};
pub use prob::{entropy, kl_div, softmax, LogBase, KL_FLOOR};
pub use rng::{sample_standard_gaussian, RngState};

pub(crate) use prob::{entropy_nats, log_softmax, softmax_in_place};
