use super::controller::{ControllerGains, WaypointFollower};
use crate::geometry::{Pose2, Vec2};
use crate::grounding::{ground_event, Barrier, GroundingParams, Predicate, SafetyGrid, SharedBarrier, TreatUnknown};
use crate::safety_filter::{
    cbf_constraint, filter_step, BarrierField, step_dynamics, ClassK, ControlInput, FilterDiagnostics, InputBounds,
};
use crate::sensor::{
    oracle_predicates, render_frame, table_predicates, CameraModel, DetectionModel, FixedTable, Frame,
    LatencySchedule, PerceptionEvent, ScheduleError,
};
use crate::world::{Scenario, TaskLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

/// Which source of safety constraints drives the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Stochastic contextual oracle, grounding and filter.
    Core,
    /// Ground-truth regions written into the grid before the first tick.
    Oracle,
    /// Fixed `NEAR` table over metric obstacles.
    NoContext,
    /// `NEAR` over every entity with height.
    Geometric,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Core, Mode::Oracle, Mode::NoContext, Mode::Geometric];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Core => "core",
            Mode::Oracle => "oracle",
            Mode::NoContext => "no_context",
            Mode::Geometric => "geometric",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| format!("unknown mode `{s}` (expected core, oracle, no_context or geometric)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    /// s
    pub frame_period: f64,
    /// s
    pub latency: f64,
    pub detection: DetectionModel<f64>,
    pub camera: CameraModel<f64>,
    pub grounding: GroundingParams<f64>,
    /// m
    pub grid_resolution: f64,
    pub tau: f64,
    pub treat_unknown: TreatUnknown,
    /// 1/s
    pub alpha: f64,
    pub bounds: InputBounds<f64>,
    /// s
    pub dt: f64,
    pub gains: ControllerGains,
    /// s
    pub horizon: f64,
    /// m
    pub start_radius: f64,
    /// m, inflation of each cell when the oracle paints ground truth.
    pub oracle_margin: f64,
    /// m, soft-min temperature of the filter's field; 0 filters on the
    /// barrier directly. See [`FilterField`].
    pub smoothing: f64,
    /// m, subtracted from the filter's field. Above half a cell the discs
    /// around boundary-cell centers overlap into a closed band.
    pub clearance: f64,
    /// Fault injection: pass the nominal command through unfiltered.
    pub filter_enabled: bool,
}

/// Sensing radius of the simulator's detector, meters: the projection
/// band's far edge plus the 1 m hazard buffer, so a hazard is reportable in
/// every frame where its buffer reaches into the band.
pub const SIM_SENSING_RADIUS: f64 = 8.0;

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            scenario: String::new(),
            mode: Mode::Core,
            seed: 0,
            frame_period: 3.0,
            latency: 3.0,
            detection: DetectionModel::linear(0.75, 1e-3, SIM_SENSING_RADIUS),
            camera: CameraModel::simulation(),
            grounding: GroundingParams::default(),
            grid_resolution: 0.2,
            tau: 0.5,
            treat_unknown: TreatUnknown::Safe,
            alpha: 0.25,
            bounds: InputBounds::default(),
            dt: 0.1,
            gains: ControllerGains::default(),
            horizon: 90.0,
            start_radius: 0.5,
            oracle_margin: 0.1,
            smoothing: 0.05,
            clearance: 0.15,
            filter_enabled: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error("invalid episode config: {0}")]
    Config(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub state: Pose2<f64>,
    pub u_nom: ControlInput<f64>,
    pub u_safe: ControlInput<f64>,
    pub h: f64,
    pub margin: f64,
    pub intervened: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryRecord {
    pub frame_id: u64,
    pub capture_time: f64,
    pub delivery_time: f64,
    pub predicates_safe: Vec<Predicate>,
    pub predicates_unsafe: Vec<Predicate>,
    pub detected: Vec<String>,
    pub grounding_failures: Vec<Predicate>,
    /// The robot's cell left the safe set at this update.
    pub assumption_violation: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub ticks: Vec<TickRecord>,
    pub deliveries: Vec<DeliveryRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribution {
    None,
    Ctx,
    Grnd,
    Enf,
}

impl fmt::Display for Attribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attribution::None => "none",
            Attribution::Ctx => "ctx",
            Attribution::Grnd => "grnd",
            Attribution::Enf => "enf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub success: bool,
    pub failure_attribution: Attribution,
    pub min_h: f64,
    pub violation: bool,
    pub goal_reached: bool,
    /// m
    pub path_length: f64,
    /// s
    pub duration: f64,
    pub violation_time: Option<f64>,
    pub violation_point: Option<[f64; 2]>,
    pub interventions: usize,
    pub assumption_violations: usize,
}

/// What the episode knew at the first violation; input to attribution.
#[derive(Debug, Clone)]
pub struct ViolationContext {
    pub point: Vec2<f64>,
    pub time: f64,
    /// Barrier in force at the violating tick.
    pub barrier: Barrier<f64>,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub log: TrajectoryLog,
    pub metrics: RunMetrics,
    pub violation: Option<ViolationContext>,
    pub start: Pose2<f64>,
    /// Final barrier, for snapshots.
    pub barrier: Barrier<f64>,
}

/// Start pose perturbed uniformly in a disc, resampled until it lands on
/// ground-truth safe ground.
fn randomized_start(scenario: &Scenario<f64>, radius: f64, rng: &mut ChaCha8Rng) -> Pose2<f64> {
    let s = scenario.start_pose;
    if radius <= 0.0 {
        return s;
    }
    for _ in 0..64 {
        let r = radius * rng.gen::<f64>().sqrt();
        let phi = std::f64::consts::TAU * rng.gen::<f64>();
        let p = Pose2::new(s.x + r * phi.cos(), s.y + r * phi.sin(), s.theta);
        if scenario.ground_truth_safe(p.position()) {
            return p;
        }
    }
    s
}

fn empty_grid(scenario: &Scenario<f64>, cfg: &EpisodeConfig) -> Result<SafetyGrid<f64>, EpisodeError> {
    let (lo, hi) = scenario.bounds();
    SafetyGrid::covering(lo, hi, 2.0 * cfg.detection.sensing_radius, cfg.grid_resolution)
        .map_err(|e| EpisodeError::Config(e.to_string()))
}

/// Marks every cell whose square, inflated by `margin`, touches ground-truth
/// unsafe space. Sampled at the corners, edge midpoints and center.
pub fn paint_ground_truth(scenario: &Scenario<f64>, grid: &mut SafetyGrid<f64>, margin: f64) {
    let half = grid.resolution() / 2.0 + margin;
    let offs = [-half, 0.0, half];
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let c = grid.cell_center(i, j);
            let bad = offs
                .iter()
                .any(|&dx| offs.iter().any(|&dy| !scenario.ground_truth_safe(Vec2::new(c.x + dx, c.y + dy))));
            if bad {
                grid.add_unsafe(i, j, 1);
            } else {
                grid.add_safe(i, j, 1);
            }
        }
    }
}

fn perceive(
    scenario: &Scenario<f64>,
    cfg: &EpisodeConfig,
    frame: &Frame<f64>,
    rng: &mut ChaCha8Rng,
    frame_id: u64,
) -> PerceptionEvent<f64> {
    match cfg.mode {
        Mode::Core => oracle_predicates(scenario, frame, &cfg.detection, rng, frame_id, cfg.latency),
        Mode::NoContext => table_predicates(scenario, frame, FixedTable::MetricObstacleNear, frame_id, cfg.latency),
        Mode::Geometric => table_predicates(scenario, frame, FixedTable::GeometricNear, frame_id, cfg.latency),
        Mode::Oracle => unreachable!("oracle mode does not render"),
    }
}

fn validate(cfg: &EpisodeConfig) -> Result<(), EpisodeError> {
    let bad = |m: &str| Err(EpisodeError::Config(m.to_string()));
    if !(cfg.horizon > 0.0) {
        return bad("horizon must be > 0 s");
    }
    if !(cfg.dt > 0.0) {
        return bad("dt must be > 0 s");
    }
    if !(cfg.tau > 0.0 && cfg.tau <= 1.0) {
        return bad("tau must be in (0, 1]");
    }
    if !(cfg.alpha > 0.0) {
        return bad("alpha must be > 0");
    }
    if !(cfg.start_radius >= 0.0) {
        return bad("start radius must be >= 0 m");
    }
    if !(cfg.smoothing >= 0.0) {
        return bad("smoothing must be >= 0 m");
    }
    if !(cfg.clearance >= 0.0) {
        return bad("clearance must be >= 0 m");
    }
    cfg.detection.validate().map_err(|e| EpisodeError::Config(e.to_string()))?;
    cfg.camera.validate().map_err(|e| EpisodeError::Config(e.to_string()))?;
    Ok(())
}

/// Runs one closed-loop episode. Deterministic in `cfg`.
pub fn run_episode(scenario: &Scenario<f64>, cfg: &EpisodeConfig) -> Result<EpisodeOutcome, EpisodeError> {
    validate(cfg)?;
    let schedule = LatencySchedule::new(cfg.frame_period, cfg.latency)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = randomized_start(scenario, cfg.start_radius, &mut rng);

    let mut barrier = Barrier::new(empty_grid(scenario, cfg)?, cfg.tau, cfg.treat_unknown);
    let mut log = TrajectoryLog::default();
    if cfg.mode == Mode::Oracle {
        paint_ground_truth(scenario, barrier.grid_mut(), cfg.oracle_margin);
        barrier.rebuild();
        // Everything a perfect reasoner would say, known at t = 0.
        let preds: Vec<Predicate> = scenario
            .ground_truth_unsafe
            .iter()
            .filter_map(|r| scenario.generating_predicate(r))
            .collect();
        log.deliveries.push(DeliveryRecord {
            frame_id: 0,
            capture_time: 0.0,
            delivery_time: 0.0,
            predicates_safe: scenario.safe_surface_predicates(),
            predicates_unsafe: preds,
            detected: scenario.entities.iter().map(|e| e.id.clone()).collect(),
            grounding_failures: Vec::new(),
            assumption_violation: !barrier.contains(start.position()),
        });
    }
    let shared = SharedBarrier::new(barrier.clone());

    let mut follower = WaypointFollower::new(scenario.waypoints.clone(), cfg.gains, cfg.bounds);
    let alpha = ClassK { slope: cfg.alpha };
    let n_ticks = (cfg.horizon / cfg.dt).round() as u64;
    let eps = cfg.dt * 1e-6;
    let mut pending: VecDeque<(Frame<f64>, PerceptionEvent<f64>)> = VecDeque::new();
    let mut next_frame: u64 = 0;
    let mut state = start;
    let mut min_h = f64::INFINITY;
    let mut path_length = 0.0;
    let mut interventions = 0;
    let mut goal_reached = false;
    let mut violation: Option<ViolationContext> = None;
    let mut t = 0.0;

    for n in 0..=n_ticks {
        t = n as f64 * cfg.dt;
        if cfg.mode != Mode::Oracle {
            while schedule.capture(next_frame) <= t + eps {
                let frame = render_frame(scenario, &state, &cfg.camera, schedule.capture(next_frame));
                let ev = perceive(scenario, cfg, &frame, &mut rng, next_frame);
                pending.push_back((frame, ev));
                next_frame += 1;
            }
        }
        let mut published = false;
        while pending.front().is_some_and(|(_, e)| e.delivery_time <= t + eps) {
            let (frame, ev) = pending.pop_front().expect("checked");
            let was_safe = barrier.contains(state.position());
            let out = ground_event(&ev, &frame, scenario, &cfg.camera, barrier.grid_mut(), &cfg.grounding);
            barrier.rebuild();
            published = true;
            log.deliveries.push(DeliveryRecord {
                frame_id: ev.frame_id,
                capture_time: ev.capture_time,
                delivery_time: ev.delivery_time,
                predicates_safe: ev.predicates_safe,
                predicates_unsafe: ev.predicates_unsafe,
                detected: ev.detected,
                grounding_failures: out.failures,
                assumption_violation: was_safe && !barrier.contains(state.position()),
            });
        }
        if published {
            shared.publish(barrier.clone());
        }

        if follower.at_goal(&state) {
            goal_reached = true;
            break;
        }
        let snap = shared.snapshot();
        let u_nom = follower.command(&state, cfg.dt);
        let field = FilterField {
            barrier: snap.as_ref(),
            smoothing: cfg.smoothing,
            clearance: cfg.clearance,
        };
        let (u_safe, mut diag) = if cfg.filter_enabled {
            filter_step(state, u_nom, &field, alpha, Some(&cfg.bounds))
        } else {
            passthrough(state, u_nom, &field, alpha)
        };
        // log the barrier itself, not the filter's field
        diag.h = snap.value(state.position());
        min_h = min_h.min(diag.h);
        if diag.intervened {
            interventions += 1;
        }
        log.ticks.push(TickRecord {
            t,
            state,
            u_nom,
            u_safe,
            h: diag.h,
            margin: diag.margin,
            intervened: diag.intervened,
        });
        let next = step_dynamics(state, u_safe, cfg.dt);
        path_length += next.position().dist(state.position());
        state = next;

        let grid = barrier.grid();
        let (ci, cj) = grid.cell_of(state.position());
        let cell = grid.cell_center(ci, cj);
        if !scenario.ground_truth_safe(cell) {
            violation = Some(ViolationContext {
                point: cell,
                time: t + cfg.dt,
                barrier: (*snap).clone(),
            });
            t += cfg.dt;
            break;
        }
    }

    let violated = violation.is_some();
    let success = match scenario.task_label {
        TaskLabel::Safe => goal_reached && !violated,
        TaskLabel::Unsafe => !violated,
    };
    let mut metrics = RunMetrics {
        success,
        failure_attribution: Attribution::None,
        min_h,
        violation: violated,
        goal_reached,
        path_length,
        duration: t,
        violation_time: violation.as_ref().map(|v| v.time),
        violation_point: violation.as_ref().map(|v| [v.point.x, v.point.y]),
        interventions,
        assumption_violations: log.deliveries.iter().filter(|d| d.assumption_violation).count(),
    };
    if !success {
        metrics.failure_attribution = classify_failure(&log, &metrics, violation.as_ref(), scenario);
    }
    Ok(EpisodeOutcome {
        log,
        metrics,
        violation,
        start,
        barrier,
    })
}

/// Field the simulator hands to the filter. The barrier is a minimum over
/// point distances, so between two boundary-cell centers its gradient flips
/// side from one tick to the next and a single-halfspace filter creeps
/// through the gap. Inside the safe set this uses a soft minimum over
/// nearby boundary centers instead, which never exceeds the barrier and has
/// a continuous gradient, shifted down by a clearance. Outside the safe set
/// it is the barrier itself.
pub struct FilterField<'a> {
    pub barrier: &'a Barrier<f64>,
    /// m, soft-min temperature
    pub smoothing: f64,
    /// m
    pub clearance: f64,
}

impl FilterField<'_> {
    fn eval(&self, p: Vec2<f64>) -> (f64, Vec2<f64>) {
        let b = self.barrier;
        if self.smoothing <= 0.0 || !b.contains(p) {
            return (b.value(p) - self.clearance, b.gradient(p));
        }
        let Some((_, d0)) = b.nearest_boundary(p) else {
            return (b.value(p) - self.clearance, b.gradient(p));
        };
        let q = b.grid().clamp_point(p);
        let mut near = Vec::new();
        // weights below e^-8 of the nearest are dropped
        b.boundary_within(q, d0 + 8.0 * self.smoothing, &mut near);
        let (mut z, mut g) = (0.0, Vec2::zero());
        for c in &near {
            let v = q - *c;
            let d = v.norm();
            let w = (-(d - d0) / self.smoothing).exp();
            z += w;
            if d > 1e-9 {
                g = g + v * (w / d);
            }
        }
        if z <= 0.0 || g.norm() < 1e-9 {
            return (b.value(p) - self.clearance, b.gradient(p));
        }
        let h = d0 - self.smoothing * z.ln();
        (h - self.clearance, g * (1.0 / g.norm()))
    }
}

impl BarrierField<f64> for FilterField<'_> {
    fn value(&self, p: Vec2<f64>) -> f64 {
        self.eval(p).0
    }
    fn gradient(&self, p: Vec2<f64>) -> Vec2<f64> {
        self.eval(p).1
    }
}

fn passthrough(
    s: Pose2<f64>,
    u: ControlInput<f64>,
    b: &impl BarrierField<f64>,
    alpha: ClassK<f64>,
) -> (ControlInput<f64>, FilterDiagnostics<f64>) {
    let h = b.value(s.position());
    let grad = b.gradient(s.position());
    let constraint = cbf_constraint(s, h, grad, alpha);
    let a = constraint.a;
    let margin = a[0] * u.vx + a[1] * u.vy + a[2] * u.omega - constraint.b;
    let diag = FilterDiagnostics {
        h,
        grad,
        constraint,
        margin,
        intervention: 0.0,
        intervened: false,
        degenerate: false,
        infeasible: false,
    };
    (u, diag)
}

/// Attributes a failed run. For each ground-truth region containing the
/// violation point: `ctx` if its generating predicate was not delivered
/// before the violation, `grnd` if it was but the violated cell was still in
/// the safe set, `enf` if the cell was already excluded. The most severe
/// verdict over the regions wins, in the order ctx, grnd, enf.
///
/// A failed safe task without a violation (goal not reached) has no region
/// to blame and is reported as `enf`: the constraints were right but the
/// closed loop did not complete.
pub fn classify_failure(
    log: &TrajectoryLog,
    metrics: &RunMetrics,
    violation: Option<&ViolationContext>,
    scenario: &Scenario<f64>,
) -> Attribution {
    assert!(!metrics.success, "classify_failure called on a successful run");
    let Some(v) = violation else {
        return Attribution::Enf;
    };
    let emitted = |p: &Predicate| {
        log.deliveries
            .iter()
            .any(|d| d.delivery_time <= v.time && d.predicates_unsafe.contains(p))
    };
    let (i, j) = v.barrier.grid().cell_of(v.point);
    let cell_in_safe_set = v.barrier.is_safe_cell(i, j);
    let mut worst = None;
    let mut any_region = false;
    for r in scenario.regions_containing(v.point) {
        any_region = true;
        let verdict = match scenario.generating_predicate(r) {
            Some(p) if emitted(&p) => {
                if cell_in_safe_set {
                    Attribution::Grnd
                } else {
                    Attribution::Enf
                }
            }
            _ => Attribution::Ctx,
        };
        worst = Some(match (worst, verdict) {
            (Some(Attribution::Ctx), _) | (_, Attribution::Ctx) => Attribution::Ctx,
            (Some(Attribution::Grnd), _) | (_, Attribution::Grnd) => Attribution::Grnd,
            _ => Attribution::Enf,
        });
    }
    if !any_region {
        // Off every navigable surface: the missing context is the safe-surface rule.
        let surface_emitted = scenario.safe_surface_predicates().iter().all(|p| {
            log.deliveries
                .iter()
                .any(|d| d.delivery_time <= v.time && d.predicates_safe.contains(p))
        });
        return match (surface_emitted, cell_in_safe_set) {
            (false, _) => Attribution::Ctx,
            (true, true) => Attribution::Grnd,
            (true, false) => Attribution::Enf,
        };
    }
    worst.unwrap_or(Attribution::Ctx)
}

pub const TRAJECTORY_HEADER: &str = "t,x,y,theta,vx_nom,vy_nom,w_nom,vx_safe,vy_safe,w_safe,h,margin,intervened";

pub fn write_trajectory_csv<W: Write>(log: &TrajectoryLog, mut w: W) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in &log.ticks {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.state.x,
            r.state.y,
            r.state.theta,
            r.u_nom.vx,
            r.u_nom.vy,
            r.u_nom.omega,
            r.u_safe.vx,
            r.u_safe.vy,
            r.u_safe.omega,
            r.h,
            r.margin,
            u8::from(r.intervened)
        )?;
    }
    Ok(())
}

/// One line per delivery: times, predicates and the assumption flag.
pub fn write_deliveries_csv<W: Write>(log: &TrajectoryLog, mut w: W) -> io::Result<()> {
    writeln!(w, "frame_id,capture_time,delivery_time,safe,unsafe,detected,grounding_failures,assumption_violation")?;
    let join = |v: &[Predicate]| v.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ");
    for d in &log.deliveries {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            d.frame_id,
            d.capture_time,
            d.delivery_time,
            join(&d.predicates_safe),
            join(&d.predicates_unsafe),
            d.detected.join(" "),
            join(&d.grounding_failures),
            u8::from(d.assumption_violation)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Safe field with a wall of unsafe cells at column `wall`.
    fn wall(wall: usize) -> Barrier<f64> {
        let mut g = SafetyGrid::new(0.2, Vec2::zero(), 30, 30).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                if i >= wall {
                    g.add_unsafe(i, j, 1);
                } else {
                    g.add_safe(i, j, 1);
                }
            }
        }
        Barrier::new(g, 0.5, TreatUnknown::Safe)
    }

    #[test]
    fn field_is_below_barrier_by_at_least_clearance() {
        let b = wall(20);
        let f = FilterField {
            barrier: &b,
            smoothing: 0.05,
            clearance: 0.15,
        };
        for k in 0..200 {
            let p = Vec2::new(0.5 + 0.019 * k as f64, 1.0 + 0.013 * k as f64);
            assert!(f.value(p) <= b.value(p) - 0.15 + 1e-12, "{p:?}");
        }
    }

    #[test]
    fn field_gradient_is_continuous_across_ridge() {
        // Between two boundary centers the raw gradient flips; the field's
        // does not.
        let b = wall(20);
        let f = FilterField {
            barrier: &b,
            smoothing: 0.05,
            clearance: 0.15,
        };
        let c = b.grid().cell_center(19, 10);
        let below = c + Vec2::new(-0.05, 0.099);
        let above = c + Vec2::new(-0.05, 0.101);
        let raw = (b.gradient(below) - b.gradient(above)).norm();
        assert!(raw > 1.5);
        let (g1, g2) = (f.gradient(below), f.gradient(above));
        assert!((g1 - g2).norm() < 0.1, "{g1:?} {g2:?}");
        assert!(g1.x < -0.9);
    }

    #[test]
    fn field_falls_back_outside_safe_set() {
        let b = wall(20);
        let f = FilterField {
            barrier: &b,
            smoothing: 0.05,
            clearance: 0.15,
        };
        let p = b.grid().cell_center(22, 10);
        assert_eq!(f.value(p), b.value(p) - 0.15);
        assert_eq!(f.gradient(p), b.gradient(p));
    }

    #[test]
    fn zero_smoothing_is_shifted_barrier() {
        let b = wall(20);
        let f = FilterField {
            barrier: &b,
            smoothing: 0.0,
            clearance: 0.0,
        };
        let p = Vec2::new(2.33, 1.71);
        assert_eq!(f.value(p), b.value(p));
        assert_eq!(f.gradient(p), b.gradient(p));
    }

    #[test]
    fn mode_round_trips() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("nonsense".parse::<Mode>().is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let s = crate::world::builtin_scenario::<f64>("open_warehouse").unwrap();
        let cfg = EpisodeConfig {
            dt: 0.0,
            ..EpisodeConfig::default()
        };
        assert!(matches!(run_episode(&s, &cfg), Err(EpisodeError::Config(_))));
    }
}
