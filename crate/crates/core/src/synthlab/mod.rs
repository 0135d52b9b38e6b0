//! Synthetic data, controlled misspecification and score diagnostics.

pub mod diagnostics;
pub mod experiments;
pub mod generators;
pub mod misspec;

pub use diagnostics::{
    beta_coverage_band, bootstrap_quantile_test, cdf_curves, hd_quantile, inflated_level, ks_critical_one_sample,
    ks_critical_two_sample, ks_uniform, pivotality_check, write_cdf_csv, BinCheck, BootstrapTest, CdfPoint, HdWeights,
    MARGINAL_GROUP,
};
pub use generators::{Family, FeatureLaw, GeneratorSpec, Noise, Synthetic};
pub use misspec::{gaussian_interval, misspecify, Misspec, SIGMA_FLOOR};
