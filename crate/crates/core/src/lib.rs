//! Physics-informed neural networks for the single-machine infinite-bus
//! swing equation.
//!
//! * [`swing`]: the model and its adaptive Runge–Kutta reference solver.
//! * [`dataset`]: trajectory grids, training/collocation sampling, CSV I/O.
//! * [`mlp`]: tanh network with exact first/second time derivatives.
//! * [`pinn`]: physics residual, composite loss, and its gradient.
//! * [`trainer`]: forward solving and inertia/damping identification.
//! * [`eval`]: error metrics, frequency recovery, timing benchmark.
//!
//! Per-point loops run on rayon when the `parallel` feature is enabled (the
//! default); results are bit-identical either way.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod mlp;
pub mod par;
pub mod pinn;
pub mod swing;
pub mod trainer;

pub use error::{Error, Result};
