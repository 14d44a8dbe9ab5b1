//! Dense tensors, the seeded generator, and finite-difference gradient checking.

mod gradcheck;
mod rng;
mod tensor;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, ParamError};
pub use rng::{gaussian, Rng};
pub use tensor::{pairwise_sum, Tensor};
