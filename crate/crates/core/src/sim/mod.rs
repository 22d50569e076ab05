//! Closed-loop episodes: waypoint controller, perception and grounding at
//! delivery instants, the filter every tick, and scoring against ground
//! truth. Suites run episodes in parallel and aggregate per mode.

mod controller;
mod episode;
mod suite;

pub use controller::{nominal_controller, ControllerGains, WaypointFollower};
pub use episode::{
    FilterField,
    classify_failure, paint_ground_truth, run_episode, write_deliveries_csv, write_trajectory_csv, Attribution,
    DeliveryRecord, EpisodeConfig, EpisodeError, EpisodeOutcome, Mode, RunMetrics, TickRecord, TrajectoryLog,
    ViolationContext, SIM_SENSING_RADIUS, TRAJECTORY_HEADER,
};
pub use suite::{episode_seed, run_suite, summarize, EpisodeSummary, ModeRow, SuiteJob, SuiteResult};
