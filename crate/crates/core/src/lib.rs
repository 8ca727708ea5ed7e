//! Evenly cascaded convolutional networks on a small dense-tensor engine.
//!
//! The crate is layered bottom-up:
//!
//! * [`tensor`] and [`autograd`]: 4-D tensors and a tape-based reverse-mode
//!   differentiator with a finite-difference checker.
//! * [`ops`]: the differentiable operators the network needs.
//! * [`blocks`]: the six convolution block designs.
//! * [`cascade`]: cascading layers, the scale-driven network planner, the
//!   parameter audit and feature-map export.

pub mod autograd;
pub mod blocks;
pub mod cascade;
pub mod error;
pub mod forward;
pub mod gradient_suite;
pub mod ops;
pub mod params;
pub mod published;
pub mod tensor;

pub use autograd::{gradcheck, GradcheckReport, Gradients, Graph, Var};
pub use blocks::{block_param_count, Block, BlockKind, BlockSpec, DropoutPlacement, Recurrence};
pub use cascade::{audit_params, plan_network, CascadeConfig, Ecn, NetworkPlan, Scale};
pub use error::{Error, Result};
pub use forward::{apply_stat_updates, BnSite, Forward, Mode, StatUpdate};
pub use params::{ParamId, ParamKind, ParamStore, Parameter};
pub use tensor::{Element, Precision, Shape, Tensor};
