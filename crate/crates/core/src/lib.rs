//! Log-centric height maps, surface knot detection and sawing-angle
//! optimization for wooden logs.
//!
//! The pipeline stages are:
//!
//! 1. **heightmap** – segmented centerline, cylindrical unwrapping and a
//!    gradient-regularized least-squares fit of radial distance over (θ, l).
//! 2. **registration** – normalization, point-to-point ICP and nearest-neighbor
//!    label transfer between two scans of the same log.
//! 3. **detection** – Laplacian-of-Gaussian knot response, connected-component
//!    extraction and mAP evaluation.
//! 4. **sawopt** – pattern function (corner Gaussians), knot function
//!    (column-summed probability) and the rotation minimizing their circular
//!    cross-correlation.
//! 5. **sawsim** – virtual sawing of a synthetic log with analytic
//!    cone/plane intersection and face/edge/arris classification.
//!
//! [`synthgen`] produces seeded synthetic logs with exact ground truth for all
//! of the above.

pub mod cloud;
pub mod detection;
pub mod error;
pub mod exec;
pub mod heightmap;
pub mod plot;
pub mod registration;
pub mod sawopt;
pub mod sawsim;
pub mod synthgen;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use exec::Execution;

/// 3-D vector in millimeters.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Wraps an angle in degrees into `[0, 360)`.
pub fn wrap_deg(theta: f64) -> f64 {
    let t = theta.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if t >= 360.0 {
        0.0
    } else {
        t
    }
}

/// Shortest angular distance between two angles in degrees, in `[0, 180]`.
pub fn circular_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}
