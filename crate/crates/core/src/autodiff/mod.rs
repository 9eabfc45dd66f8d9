//! Reverse-mode automatic differentiation over dense `(n, c, h, w)` tensors.
//!
//! Operations are recorded on a [`Tape`] as they execute, so graphs whose
//! length depends on the data (an unrolled search, for instance) need no
//! special handling. Kernels are generic over [`Real`]; training runs in
//! `f32` and gradient checks in `f64`.

mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{compare_gradients, grad_check, relative_error, GradCheckReport, GRAD_FLOOR};
pub use tape::{CustomOp, Tape, Var};
pub use tensor::{Real, Shape, Tensor};
