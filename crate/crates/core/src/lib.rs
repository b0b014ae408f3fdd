//! Shared foundations for the resilience workbench: performance-curve
//! metrics, socio-economic weighting, rank correlation, and the numerical
//! utilities (K-Means, IDW, bisection, gradient checking, seeded RNG
//! streams) the simulation and surrogate crates build on.

pub mod metrics;
pub mod numerics;
pub mod rng;

pub use metrics::{
    load_profiles, system_id_order, trapezoid_resilience, unweighted_resilience,
    weighted_resilience, MetricsError, PerformanceCurve, ResilienceScore, SystemProfile,
    VulnerabilityProfile, WeightScheme, FACTOR_COUNT,
};
pub use metrics::{spearman_rho, spearman_rho_with, SpearmanConfig};
pub use numerics::{
    bisect, finite_diff_gradcheck, idw_interpolate, kmeans, NumericsError, Point2D,
};
pub use rng::RngStream;
