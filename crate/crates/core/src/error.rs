use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: Shape, found: Shape },

    #[error("data length {found} does not match shape {shape} ({expected} elements)")]
    DataLength {
        shape: Shape,
        expected: usize,
        found: usize,
    },

    #[error("channel mismatch in {op}: expected {expected}, found {found}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value produced by {op} at element {index}")]
    NonFinite { op: &'static str, index: usize },

    #[error("backward requires a 1x1x1x1 loss, found {0}")]
    NonScalarLoss(Shape),

    #[error("graph is not topologically ordered at node {0}")]
    GraphOrder(usize),

    #[error("batch norm in train mode needs more than one value per channel")]
    DegenerateBatchNorm,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid scale {0:?}: expected a rational p/q strictly between 0 and 1")]
    InvalidScale(String),

    #[error("a {input}px input yields no layer at or above the {threshold}px stopping threshold")]
    EmptyPlan { input: usize, threshold: usize },

    #[error("parameter audit: {component} has {found} trainable scalars, expected {expected}")]
    AuditMismatch {
        component: String,
        expected: usize,
        found: usize,
    },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
