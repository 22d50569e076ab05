//! Contextual safety pipeline for planar robots: semantic predicate
//! grounding into probabilistic safe-set grids, signed-distance control
//! barrier functions with a closed-form QP filter, and the perception
//! certificate calculus. A scripted perception oracle stands in for the
//! vision-language model so the whole loop runs in simulation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, the type used by the simulator and CLI.

pub mod certificate;
pub mod cli;
pub mod geometry;
pub mod grounding;
pub mod safety_filter;
pub mod scalar;
pub mod sensor;
pub mod sim;
pub mod world;

pub use scalar::{wrap_angle, Scalar};

pub type Vec2 = geometry::Vec2<f64>;
pub type Pose2 = geometry::Pose2<f64>;
pub type ConvexPolygon = geometry::ConvexPolygon<f64>;
pub type Scenario = world::Scenario<f64>;
pub type CameraModel = sensor::CameraModel<f64>;
pub type Frame = sensor::Frame<f64>;
pub type DetectionModel = sensor::DetectionModel<f64>;
pub type SafetyGrid = grounding::SafetyGrid<f64>;
pub type Barrier = grounding::Barrier<f64>;
pub type ControlInput = safety_filter::ControlInput<f64>;
pub type CertificateProblem = certificate::CertificateProblem<f64>;
pub type CertificateResult = certificate::CertificateResult<f64>;

pub type Vec2f = geometry::Vec2<f32>;
pub type Pose2f = geometry::Pose2<f32>;
pub type Barrierf = grounding::Barrier<f32>;
pub type ControlInputf = safety_filter::ControlInput<f32>;
