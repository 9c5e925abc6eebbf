//! Dense tensors with tape-based reverse-mode differentiation, plus a
//! finite-difference gradient checker and the checkpoint container.
//!
//! Broadcasting is limited to adding a bias vector along the last axis.

mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use graph::{Graph, Var};
pub use params::{ParamId, ParamSet, Parameter};
pub use tensor::{log_softmax_rows, matmul, scatter_add_rows, softmax_rows, Tensor};
