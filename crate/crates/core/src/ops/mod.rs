//! Differentiable operators. Each one is a method on [`crate::Graph`]; the
//! backward rules live next to their forward kernels.

pub mod batchnorm;
pub mod channels;
pub mod conv;
pub mod dropout;
pub mod elementwise;
pub mod linear;
pub mod loss;
pub mod pool;
pub mod resize;

pub use batchnorm::{BatchStats, BnMode};
pub use conv::ConvGeometry;
pub use resize::{GridAlignment, ResizeGrid};
