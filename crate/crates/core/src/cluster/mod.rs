//! Clusterwise calibration over groups of classes.

mod distance;
mod hierarchy;
mod partition;

pub use distance::{
    clusterwise_bound, frechet_distance, ks_distance, ks_distance_cdfs, mixture_bound, quantile_matched_coverage,
    tv_distance_numeric, tv_uniform, Cdf, MixtureSpec, Quadrature,
};
pub use hierarchy::{Hierarchy, NodeSpec};
pub use partition::{
    composite_cluster, kmeans, quantile_embed, similarity_calibration, similarity_calibration_two_sided,
    size_threshold_cluster, ClusterMap, ClusterwiseCalibration, DEFAULT_EMBED_LEVELS,
};
