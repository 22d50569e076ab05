//! Predicate grounding: image-space operators, projection into the
//! observation-count grid, and the signed-distance barrier over it.

mod barrier;
mod grid;
mod mask;
mod predicate;
mod project;

pub use barrier::{Barrier, SharedBarrier};
pub use grid::{GridError, SafetyGrid, TreatUnknown};
pub use mask::{
    apply_operator, class_mask, compose_image_safe_set, dilate_square, fill_convex_hull, DimensionMismatch,
    OperatorOutput, PixelMask, DEFAULT_DILATION_PX,
};
pub use predicate::{Operator, Predicate, PredicateParseError};
pub use project::{ground_event, project_and_accumulate, GroundingOutcome, GroundingParams, ProjectionStats};
