//! Cascading layers and the networks built from them.

mod audit;
mod model;
mod plan;
mod scale;
pub mod visualize;

pub use audit::{audit_params, AuditReport};
pub use model::{cascade_layer_forward, Ecn, FeatureMaps, FeatureState, Head};
pub use plan::{plan_network, spatial_chain, CascadeConfig, HeadPlan, LayerPlan, NetworkPlan, StemPlan};
pub use scale::Scale;
pub use visualize::{export_feature_maps, render_grid, GrayImage};
