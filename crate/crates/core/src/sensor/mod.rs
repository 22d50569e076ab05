//! Synthetic RGB-D sensing and the stochastic perception oracle.

mod camera;
mod detection;
mod latency;
mod oracle;
mod render;

pub use camera::{in_band, range_gate, CameraError, CameraModel, RangeError};
pub use detection::{AssumptionReport, DetectionError, DetectionModel};
pub use latency::{LatencySchedule, ScheduleError};
pub use oracle::{oracle_predicates, table_predicates, FixedTable, PerceptionEvent};
pub use render::{ray_prism, render_frame, Frame};
