//! Numeric foundation: matrices, small networks, reverse-mode
//! gradients, Adam, a finite-difference oracle, and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod params;
pub mod tape;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use matrix::DenseMatrix;
pub use mlp::{bind_mlp, mlp_forward, mlp_on_tape, Activation, LinearLayer, MlpParams};
pub use params::{TensorMut, TensorRef};
pub use tape::{Grads, NodeId, Tape};
