//! Dense tensors, a reverse-mode tape, and a finite-difference gradient checker.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{
    grad_check, relative_error, GradCheckReport, GradParam, ParamCheck, REL_ERR_FLOOR,
};
pub use tape::{sigmoid, softmax_in_place, Gradients, Tape, Var};
pub use tensor::Tensor;
