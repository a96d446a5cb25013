//! Small fully connected networks with exact reverse-mode gradients.
//!
//! Only the topology the curiosity modules, policies and critic need is
//! supported: a leaky-ReLU trunk shared by one or more affine heads, where
//! each head may concatenate extra inputs after the trunk.

pub mod adam;
pub mod checkpoint;
pub mod dd;
pub mod gradcheck;
pub mod network;

pub use adam::{AdamConfig, OptimizerState};
pub use gradcheck::{grad_check, relative_error};
pub use network::{leaky_relu, Arch, Dense, ForwardCache, Gradients, Network, NetworkSpec, ParamSet};
