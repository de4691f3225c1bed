//! Reverse-mode differentiable computation over dense real-valued arrays,
//! plus the Adam optimizer and the training schedules used by the pipeline.
//!
//! The engine is tape-based: operations on [`Tensor`] handles record nodes
//! into a [`Graph`], and [`Graph::backward`] propagates gradients from a
//! scalar root to every reachable [`Param`]. Arrays are `f32` for training;
//! the whole stack is generic over [`Scalar`] so gradient checking can run
//! the identical code path at `f64`.
//!
//! Heavy kernels (matmul, convolution, row softmax, layer norm) have
//! sequential and rayon data-parallel implementations. Parallelism is only
//! over independent output rows, so both paths produce bit-identical
//! results; the `parallel` feature (default on) selects which one the
//! public ops dispatch to.

pub mod adam;
pub mod array;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod ops;
pub mod rng;
pub mod scalar;
pub mod schedule;

pub use adam::{clip_scale, global_grad_norm, Adam, AdamConfig};
pub use array::Array;
pub use error::{CoreError, Result};
pub use graph::{GradStore, Graph, Param, ParamRef, Tensor};
pub use rng::named_stream;
pub use scalar::Scalar;
pub use schedule::{LrSchedule, TemperatureSchedule};
