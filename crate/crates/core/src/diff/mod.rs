//! Reverse-mode differentiation: tensors, the recording [`Graph`], parameter
//! storage, the Adam optimizer and finite-difference gradient checks.

mod adam;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{
    finite_diff_check, finite_diff_check_sampled, finite_diff_check_with, kink_distance_at, relative_error,
    relative_error_floored, FdOptions, GradCheckReport, RELATIVE_ERROR_FLOOR,
};
pub use graph::{concat_cols, concat_rows, Gradients, Graph, Var, DOMAIN_EPS};
pub use graph::{inverse_softplus, softplus};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
