//! Scene encoding and the learned heads that parameterize risk and cost.

mod features;
mod heads;
mod mlp;

pub(crate) use features::nearest_lane_frame;
pub use features::{extract_features, slot, SceneFeatures, FEATURE_DIM};
pub use heads::{backward_heads, forward_heads, HeadGrads, RiskHeads, RiskParams, HEAD_NAMES, RISK_CHANNELS};
pub(crate) use heads::{backward_heads_cached, forward_heads_cached};
pub use mlp::{sigmoid, softplus, softplus_inv, Activation, Layer, MlpCache, MlpHead, OutputTransform};
