use super::detection::DetectionModel;
use super::render::Frame;
use crate::grounding::Predicate;
use crate::scalar::Scalar;
use crate::world::{Category, Scenario};
use rand::Rng;

/// Predicates delivered by one perception round.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionEvent<T> {
    pub frame_id: u64,
    pub capture_time: T,
    pub delivery_time: T,
    pub predicates_safe: Vec<Predicate>,
    pub predicates_unsafe: Vec<Predicate>,
    /// Ids of entities whose predicates were emitted.
    pub detected: Vec<String>,
}

impl<T: Scalar> PerceptionEvent<T> {
    pub fn emits(&self, p: &Predicate) -> bool {
        self.predicates_unsafe.contains(p) || self.predicates_safe.contains(p)
    }
}

/// Fixed rule tables used by the context-free baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedTable {
    /// `NEAR(c)` for every metric-obstacle class.
    MetricObstacleNear,
    /// `NEAR(c)` for every entity with positive height.
    GeometricNear,
}

impl FixedTable {
    fn predicates<T: Scalar>(&self, e: &crate::world::Entity<T>) -> Vec<Predicate> {
        let hit = match self {
            FixedTable::MetricObstacleNear => e.category == Category::MetricObstacle,
            FixedTable::GeometricNear => e.height > T::zero(),
        };
        if hit {
            vec![Predicate::near(&e.class_label)]
        } else {
            Vec::new()
        }
    }
}

fn push_unique(v: &mut Vec<Predicate>, p: Predicate) {
    if !v.contains(&p) {
        v.push(p);
    }
}

fn event_for<T: Scalar>(scenario: &Scenario<T>, frame: &Frame<T>, frame_id: u64, latency: T) -> PerceptionEvent<T> {
    PerceptionEvent {
        frame_id,
        capture_time: frame.timestamp,
        delivery_time: frame.timestamp + latency,
        predicates_safe: scenario.safe_surface_predicates(),
        predicates_unsafe: Vec::new(),
        detected: Vec::new(),
    }
}

fn append<T: Scalar>(scenario: &Scenario<T>, ev: &mut PerceptionEvent<T>, id: &str, preds: Vec<Predicate>) {
    if preds.is_empty() {
        return;
    }
    ev.detected.push(id.to_string());
    for p in preds {
        if scenario.is_safe_predicate(&p) {
            push_unique(&mut ev.predicates_safe, p);
        } else {
            push_unique(&mut ev.predicates_unsafe, p);
        }
    }
}

/// Stochastic stand-in for the contextual reasoner. Each visible entity
/// other than a navigable surface is detected independently with
/// probability `m(r)`, `r` the planar distance from the robot to its nearest
/// footprint point. Navigable-surface predicates are always emitted.
pub fn oracle_predicates<T: Scalar, R: Rng + ?Sized>(
    scenario: &Scenario<T>,
    frame: &Frame<T>,
    model: &DetectionModel<T>,
    rng: &mut R,
    frame_id: u64,
    latency: T,
) -> PerceptionEvent<T> {
    let mut ev = event_for(scenario, frame, frame_id, latency);
    let robot = frame.camera_pose.position();
    for i in frame.visible_entities() {
        let e = &scenario.entities[i];
        if e.category == Category::NavigableSurface {
            continue;
        }
        let r = e.footprint.distance(robot);
        let p = model.probability(r).as_f64();
        let draw: f64 = rng.gen();
        if draw < p {
            let preds = scenario.scripted_predicates.get(&e.id).cloned().unwrap_or_default();
            append(scenario, &mut ev, &e.id, preds);
        }
    }
    ev
}

/// Deterministic emission from a fixed rule table for every visible entity.
pub fn table_predicates<T: Scalar>(
    scenario: &Scenario<T>,
    frame: &Frame<T>,
    table: FixedTable,
    frame_id: u64,
    latency: T,
) -> PerceptionEvent<T> {
    let mut ev = event_for(scenario, frame, frame_id, latency);
    for i in frame.visible_entities() {
        let e = &scenario.entities[i];
        append(scenario, &mut ev, &e.id, table.predicates(e));
    }
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use crate::sensor::{render_frame, CameraModel};
    use crate::world::builtin_scenario;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sign_frame(distance: f64) -> (Scenario<f64>, Frame<f64>) {
        let s: Scenario<f64> = builtin_scenario("wet_floor_sign").unwrap();
        let sign = s.entity("wet_floor_sign").unwrap().footprint.clone();
        let c = sign.centroid();
        // Stand `distance` from the sign's nearest point, facing it.
        let half = c.x - sign.bounds().0.x;
        let pose = Pose2::new(c.x - half - distance, c.y, 0.0);
        let f = render_frame(&s, &pose, &CameraModel::simulation(), 0.0);
        (s, f)
    }

    #[test]
    fn certain_detection_emits_scripted_predicates() {
        let (s, f) = sign_frame(5.0);
        let model = DetectionModel::linear(1.0, 0.0, 7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ev = oracle_predicates(&s, &f, &model, &mut rng, 0, 3.0);
        assert!(ev.predicates_unsafe.contains(&Predicate::around("wet_floor_sign")));
        assert!(!ev.predicates_safe.is_empty());
        assert_eq!(ev.delivery_time, 3.0);
    }

    #[test]
    fn beyond_radius_never_detected() {
        let (s, f) = sign_frame(5.0);
        let model = DetectionModel::linear(1.0, 0.0, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for id in 0..200 {
            let ev = oracle_predicates(&s, &f, &model, &mut rng, id, 0.0);
            assert!(!ev.detected.iter().any(|d| d == "wet_floor_sign"));
        }
    }

    #[test]
    fn miss_rate_matches_model() {
        let (s, f) = sign_frame(5.0);
        let model = DetectionModel::linear(0.75, 1e-9, 7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let misses = (0..n)
            .filter(|&i| {
                !oracle_predicates(&s, &f, &model, &mut rng, i, 0.0)
                    .predicates_unsafe
                    .contains(&Predicate::around("wet_floor_sign"))
            })
            .count() as f64;
        let rate = misses / n as f64;
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((rate - 0.25).abs() < 4.0 * sigma, "miss rate {rate}");
    }

    #[test]
    fn fixed_tables() {
        let (s, f) = sign_frame(5.0);
        let ev = table_predicates(&s, &f, FixedTable::GeometricNear, 0, 0.0);
        assert!(ev.predicates_unsafe.contains(&Predicate::near("wet_floor_sign")));
        assert!(!ev.predicates_unsafe.contains(&Predicate::around("wet_floor_sign")));
        let ev = table_predicates(&s, &f, FixedTable::MetricObstacleNear, 0, 0.0);
        assert!(!ev.predicates_unsafe.contains(&Predicate::near("wet_floor_sign")));
    }
}
