//! Scripted 2D scenarios with semantic entities and ground-truth safety
//! regions. The ground truth doubles as the scoring oracle for episodes.

use crate::geometry::{ConvexPolygon, PolygonError, Pose2, Vec2};
use crate::grounding::{Operator, Predicate};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Label used for ground not covered by any surface entity.
pub const DEFAULT_FLOOR: &str = "floor";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    MetricObstacle,
    HazardIndicator,
    SocialZone,
    SemanticBarrier,
    NavigableSurface,
    NonNavigableSurface,
}

impl Category {
    pub fn is_surface(self) -> bool {
        matches!(self, Category::NavigableSurface | Category::NonNavigableSurface)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskLabel {
    Safe,
    Unsafe,
}

/// How a ground-truth region was derived from its source entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    NearBuffer,
    AroundBuffer,
    BetweenHull,
    OffSurface,
}

impl Rule {
    /// The spatial operator whose (unsafe) emission grounds this region.
    pub fn operator(self) -> Operator {
        match self {
            Rule::NearBuffer => Operator::Near,
            Rule::AroundBuffer => Operator::Around,
            Rule::BetweenHull => Operator::Between,
            Rule::OffSurface => Operator::On,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity<T> {
    pub id: String,
    pub class_label: String,
    pub footprint: ConvexPolygon<T>,
    pub height: T,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRegion<T> {
    pub polygon: ConvexPolygon<T>,
    pub source_entity: String,
    /// Every entity that contributed; equals `[source_entity]` except for hulls.
    pub members: Vec<String>,
    pub rule: Rule,
}

/// Inflation radii for derived regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferRadii {
    #[serde(default = "default_near")]
    pub near: f64,
    #[serde(default = "default_around")]
    pub around: f64,
}

fn default_near() -> f64 {
    0.3
}
fn default_around() -> f64 {
    1.0
}

impl Default for BufferRadii {
    fn default() -> Self {
        Self {
            near: default_near(),
            around: default_around(),
        }
    }
}

/// Maps class labels to the `u16` values stored in rendered label images.
/// Index 0 is background, 1 is the default floor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    labels: Vec<String>,
}

impl ClassTable {
    pub const BACKGROUND: u16 = 0;
    pub const FLOOR: u16 = 1;

    fn build<'a>(labels: impl Iterator<Item = &'a str>) -> Self {
        let rest: BTreeSet<&str> = labels.filter(|l| *l != DEFAULT_FLOOR).collect();
        let mut out = vec!["background".to_string(), DEFAULT_FLOOR.to_string()];
        out.extend(rest.into_iter().map(str::to_string));
        Self { labels: out }
    }

    pub fn index(&self, label: &str) -> Option<u16> {
        self.labels
            .iter()
            .skip(1)
            .position(|l| l == label)
            .map(|i| (i + 1) as u16)
    }

    pub fn label(&self, index: u16) -> Option<&str> {
        self.labels.get(index as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub name: String,
    pub entities: Vec<Entity<T>>,
    pub ground_truth_unsafe: Vec<GroundTruthRegion<T>>,
    pub start_pose: Pose2<T>,
    pub waypoints: Vec<Vec2<T>>,
    pub task_label: TaskLabel,
    pub scripted_predicates: BTreeMap<String, Vec<Predicate>>,
    /// Initial clearance from every unsafe region.
    pub safe_radius: T,
    pub buffers: BufferRadii,
    classes: ClassTable,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid field `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

// ---- file schema -----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub task_label: TaskLabel,
    pub start_pose: [f64; 3],
    pub waypoints: Vec<[f64; 2]>,
    #[serde(default)]
    pub safe_radius: Option<f64>,
    #[serde(default)]
    pub buffers: Option<BufferRadii>,
    #[serde(default)]
    pub entities: Vec<EntityFile>,
    #[serde(default)]
    pub unsafe_regions: Vec<RegionFile>,
    #[serde(default)]
    pub scripted_predicates: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityFile {
    pub id: String,
    pub class_label: String,
    pub category: Category,
    pub height: f64,
    pub footprint: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionFile {
    pub source_entity: String,
    pub rule: Rule,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<String>,
    /// Inflation radius override for buffer rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer: Option<f64>,
    /// Explicit polygon; derived from the rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
}

const DEFAULT_SAFE_RADIUS: f64 = 1.0;
const ARC_SEGMENTS: usize = 8;

fn polygon_from<T: Scalar>(field: &str, pts: &[[f64; 2]]) -> Result<ConvexPolygon<T>, ScenarioError> {
    ConvexPolygon::new(pts.iter().map(|p| Vec2::new(T::lit(p[0]), T::lit(p[1]))).collect())
        .map_err(|e: PolygonError| invalid(field, e.to_string()))
}

impl<T: Scalar> Scenario<T> {
    /// Parses and validates a scenario document.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    /// Validates a parsed document. Invariant violations are rejected.
    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let buffers = file.buffers.unwrap_or_default();
        if !(buffers.near >= 0.0 && buffers.around >= 0.0) {
            return Err(invalid("buffers", "radii must be nonnegative"));
        }
        let mut entities = Vec::with_capacity(file.entities.len());
        let mut ids = BTreeSet::new();
        for (i, e) in file.entities.iter().enumerate() {
            let field = format!("entities[{i}]");
            if !ids.insert(e.id.clone()) {
                return Err(invalid(format!("{field}.id"), format!("duplicate id `{}`", e.id)));
            }
            if e.class_label.is_empty() {
                return Err(invalid(format!("{field}.class_label"), "empty class label"));
            }
            if !(e.height >= 0.0) || !e.height.is_finite() {
                return Err(invalid(format!("{field}.height"), "height must be finite and >= 0"));
            }
            if (e.height == 0.0) != e.category.is_surface() {
                return Err(invalid(
                    format!("{field}.height"),
                    "height must be 0 exactly for surface categories",
                ));
            }
            let footprint = polygon_from(&format!("{field}.footprint"), &e.footprint)?;
            entities.push(Entity {
                id: e.id.clone(),
                class_label: e.class_label.clone(),
                footprint,
                height: T::lit(e.height),
                category: e.category,
            });
        }
        let find = |id: &str| entities.iter().find(|e| e.id == id);

        let mut regions = Vec::with_capacity(file.unsafe_regions.len());
        for (i, r) in file.unsafe_regions.iter().enumerate() {
            let field = format!("unsafe_regions[{i}]");
            let source = find(&r.source_entity).ok_or_else(|| {
                invalid(
                    format!("{field}.source_entity"),
                    format!("unknown entity `{}`", r.source_entity),
                )
            })?;
            let mut members = if r.members.is_empty() {
                vec![r.source_entity.clone()]
            } else {
                r.members.clone()
            };
            if !members.contains(&r.source_entity) {
                members.insert(0, r.source_entity.clone());
            }
            for m in &members {
                if find(m).is_none() {
                    return Err(invalid(format!("{field}.members"), format!("unknown entity `{m}`")));
                }
            }
            if let Some(b) = r.buffer {
                if !(b >= 0.0) {
                    return Err(invalid(format!("{field}.buffer"), "buffer must be >= 0"));
                }
            }
            let polygon = match &r.polygon {
                Some(pts) => polygon_from(&format!("{field}.polygon"), pts)?,
                None => match r.rule {
                    Rule::NearBuffer => source
                        .footprint
                        .inflate(T::lit(r.buffer.unwrap_or(buffers.near)), ARC_SEGMENTS),
                    Rule::AroundBuffer => source
                        .footprint
                        .inflate(T::lit(r.buffer.unwrap_or(buffers.around)), ARC_SEGMENTS),
                    Rule::BetweenHull => {
                        let pts: Vec<Vec2<T>> = members
                            .iter()
                            .filter_map(|m| find(m))
                            .flat_map(|e| e.footprint.vertices().iter().copied())
                            .collect();
                        ConvexPolygon::hull(&pts).map_err(|e| invalid(format!("{field}.members"), e.to_string()))?
                    }
                    Rule::OffSurface => {
                        if source.category != Category::NonNavigableSurface {
                            return Err(invalid(
                                format!("{field}.rule"),
                                "off_surface regions must come from a non_navigable_surface",
                            ));
                        }
                        source.footprint.clone()
                    }
                },
            };
            regions.push(GroundTruthRegion {
                polygon,
                source_entity: r.source_entity.clone(),
                members,
                rule: r.rule,
            });
        }

        let mut scripted = BTreeMap::new();
        for (id, preds) in &file.scripted_predicates {
            let field = format!("scripted_predicates.{id}");
            if find(id).is_none() {
                return Err(invalid(&field, format!("unknown entity `{id}`")));
            }
            let mut parsed = Vec::with_capacity(preds.len());
            for p in preds {
                let pred: Predicate = p.parse().map_err(|e: crate::grounding::PredicateParseError| invalid(&field, e.to_string()))?;
                parsed.push(pred);
            }
            scripted.insert(id.clone(), parsed);
        }
        let surface_labels: BTreeSet<&str> = entities
            .iter()
            .filter(|e| e.category.is_surface())
            .map(|e| e.class_label.as_str())
            .chain(std::iter::once(DEFAULT_FLOOR))
            .collect();
        for (id, preds) in &scripted {
            for p in preds {
                if p.operator == Operator::On && !surface_labels.contains(p.class_label.as_str()) {
                    return Err(invalid(
                        format!("scripted_predicates.{id}"),
                        format!("{p}: ON applies only to surface classes"),
                    ));
                }
            }
        }

        let [sx, sy, st] = file.start_pose;
        if !(sx.is_finite() && sy.is_finite() && st.is_finite()) {
            return Err(invalid("start_pose", "non-finite component"));
        }
        let start_pose = Pose2::new(T::lit(sx), T::lit(sy), T::lit(st));
        if file.waypoints.is_empty() {
            return Err(invalid("waypoints", "at least one waypoint is required"));
        }
        if file.waypoints.iter().any(|w| !(w[0].is_finite() && w[1].is_finite())) {
            return Err(invalid("waypoints", "non-finite waypoint"));
        }
        let waypoints: Vec<Vec2<T>> = file
            .waypoints
            .iter()
            .map(|w| Vec2::new(T::lit(w[0]), T::lit(w[1])))
            .collect();
        let safe_radius = file.safe_radius.unwrap_or(DEFAULT_SAFE_RADIUS);
        if !(safe_radius > 0.0) {
            return Err(invalid("safe_radius", "must be > 0"));
        }
        let classes = ClassTable::build(entities.iter().map(|e| e.class_label.as_str()));
        let scenario = Scenario {
            name: file.name,
            entities,
            ground_truth_unsafe: regions,
            start_pose,
            waypoints,
            task_label: file.task_label,
            scripted_predicates: scripted,
            safe_radius: T::lit(safe_radius),
            buffers,
            classes,
        };

        let start = scenario.start_pose.position();
        for (i, r) in scenario.ground_truth_unsafe.iter().enumerate() {
            let d = r.polygon.distance(start);
            if d < scenario.safe_radius {
                return Err(invalid(
                    "start_pose",
                    format!(
                        "start is {:.3} m from unsafe_regions[{i}] ({}), closer than safe_radius {}",
                        d.as_f64(),
                        r.source_entity,
                        safe_radius
                    ),
                ));
            }
        }
        if !scenario.ground_truth_safe(start) {
            return Err(invalid("start_pose", "start is not on a navigable surface"));
        }
        let crosses = scenario.path_enters_unsafe();
        let expect = scenario.task_label == TaskLabel::Unsafe;
        if crosses != expect {
            return Err(invalid(
                "task_label",
                format!(
                    "label is {:?} but the waypoint path {} an unsafe region",
                    scenario.task_label,
                    if crosses { "crosses" } else { "avoids" }
                ),
            ));
        }
        Ok(scenario)
    }

    pub fn classes(&self) -> &ClassTable {
        &self.classes
    }

    pub fn entity(&self, id: &str) -> Option<&Entity<T>> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn has_navigable_surfaces(&self) -> bool {
        self.entities
            .iter()
            .any(|e| e.category == Category::NavigableSurface)
    }

    /// Classes whose `ON` predicate marks safe ground: the navigable
    /// surfaces, or the default floor when none are declared.
    pub fn safe_surface_classes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.entities {
            if e.category == Category::NavigableSurface && !out.contains(&e.class_label.as_str()) {
                out.push(&e.class_label);
            }
        }
        if out.is_empty() {
            out.push(DEFAULT_FLOOR);
        }
        out
    }

    pub fn safe_surface_predicates(&self) -> Vec<Predicate> {
        self.safe_surface_classes().into_iter().map(Predicate::on).collect()
    }

    /// `ON` over a safe surface class is a safe predicate; everything else
    /// describes unsafe space.
    pub fn is_safe_predicate(&self, p: &Predicate) -> bool {
        p.operator == Operator::On && self.safe_surface_classes().contains(&p.class_label.as_str())
    }

    /// Scoring oracle: outside every unsafe region and, when navigable
    /// surfaces are declared, on one of them.
    pub fn ground_truth_safe(&self, p: Vec2<T>) -> bool {
        if self.ground_truth_unsafe.iter().any(|r| r.polygon.contains(p)) {
            return false;
        }
        if self.has_navigable_surfaces() {
            return self
                .entities
                .iter()
                .filter(|e| e.category == Category::NavigableSurface)
                .any(|e| e.footprint.contains(p));
        }
        true
    }

    /// Regions containing `p`.
    pub fn regions_containing(&self, p: Vec2<T>) -> impl Iterator<Item = &GroundTruthRegion<T>> {
        self.ground_truth_unsafe.iter().filter(move |r| r.polygon.contains(p))
    }

    /// Straight-line polyline start -> waypoints.
    pub fn path(&self) -> Vec<Vec2<T>> {
        std::iter::once(self.start_pose.position())
            .chain(self.waypoints.iter().copied())
            .collect()
    }

    pub fn path_enters_unsafe(&self) -> bool {
        let path = self.path();
        path.windows(2).any(|w| {
            self.ground_truth_unsafe
                .iter()
                .any(|r| r.polygon.intersects_segment(w[0], w[1]))
        })
    }

    /// Surface label at a ground point. Later surface entities take precedence.
    pub fn surface_label_at(&self, p: Vec2<T>) -> &str {
        self.entities
            .iter()
            .rev()
            .filter(|e| e.category.is_surface())
            .find(|e| e.footprint.contains(p))
            .map(|e| e.class_label.as_str())
            .unwrap_or(DEFAULT_FLOOR)
    }

    /// Bounding box over entities, waypoints and start.
    pub fn bounds(&self) -> (Vec2<T>, Vec2<T>) {
        let mut lo = self.start_pose.position();
        let mut hi = lo;
        let mut grow = |p: Vec2<T>| {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        };
        for w in &self.waypoints {
            grow(*w);
        }
        for e in &self.entities {
            let (a, b) = e.footprint.bounds();
            grow(a);
            grow(b);
        }
        (lo, hi)
    }

    /// Unsafe predicates a perfect reasoner would emit for a region's rule.
    pub fn generating_predicate(&self, region: &GroundTruthRegion<T>) -> Option<Predicate> {
        self.entity(&region.source_entity)
            .map(|e| Predicate::new(region.rule.operator(), e.class_label.clone()))
    }
}

pub fn load_scenario<T: Scalar>(path: &Path) -> Result<Scenario<T>, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_toml_str(&text)
}

/// Scenario sources shipped with the crate, in task order 1-12.
pub const BUILTIN_SOURCES: [(&str, &str); 12] = [
    ("cones_line", include_str!("../scenarios/cones_line.toml")),
    ("forklift_buffer", include_str!("../scenarios/forklift_buffer.toml")),
    ("wet_floor_sign", include_str!("../scenarios/wet_floor_sign.toml")),
    ("person_proximity", include_str!("../scenarios/person_proximity.toml")),
    ("curb_bypass", include_str!("../scenarios/curb_bypass.toml")),
    ("grass_cut", include_str!("../scenarios/grass_cut.toml")),
    ("open_warehouse", include_str!("../scenarios/open_warehouse.toml")),
    ("constrained_aisle", include_str!("../scenarios/constrained_aisle.toml")),
    ("hospital_hallway", include_str!("../scenarios/hospital_hallway.toml")),
    ("waiting_area", include_str!("../scenarios/waiting_area.toml")),
    ("parking_lot", include_str!("../scenarios/parking_lot.toml")),
    ("sidewalk", include_str!("../scenarios/sidewalk.toml")),
];

pub fn builtin_scenarios<T: Scalar>() -> Vec<Scenario<T>> {
    BUILTIN_SOURCES
        .iter()
        .map(|(name, src)| {
            Scenario::from_toml_str(src).unwrap_or_else(|e| panic!("builtin scenario {name}: {e}"))
        })
        .collect()
}

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN_SOURCES.iter().map(|(n, _)| *n)
}

pub fn builtin_scenario<T: Scalar>(name: &str) -> Option<Scenario<T>> {
    BUILTIN_SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, src)| Scenario::from_toml_str(src).unwrap_or_else(|e| panic!("builtin scenario {n}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const OPEN_FIELD: &str = r#"
name = "open"
task_label = "safe"
start_pose = [0.0, 0.0, 0.0]
waypoints = [[10.0, 0.0]]
"#;

    #[test]
    fn empty_entity_list_is_valid() {
        let s: Scenario<f64> = Scenario::from_toml_str(OPEN_FIELD).unwrap();
        assert!(s.entities.is_empty());
        assert!(s.ground_truth_safe(Vec2::new(3.0, 4.0)));
        assert_eq!(s.classes().index("floor"), Some(ClassTable::FLOOR));
    }

    #[test]
    fn start_inside_unsafe_region_is_rejected() {
        let text = r#"
name = "bad"
task_label = "unsafe"
start_pose = [0.0, 0.0, 0.0]
waypoints = [[5.0, 0.0]]
[[entities]]
id = "sign"
class_label = "wet_floor_sign"
category = "hazard_indicator"
height = 0.6
footprint = [[0.5, -0.15], [0.8, -0.15], [0.8, 0.15], [0.5, 0.15]]
[[unsafe_regions]]
source_entity = "sign"
rule = "around_buffer"
"#;
        let err = Scenario::<f64>::from_toml_str(text).unwrap_err();
        match err {
            ScenarioError::Validation { field, .. } => assert_eq!(field, "start_pose"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn mislabeled_task_is_rejected() {
        let text = OPEN_FIELD.replace("\"safe\"", "\"unsafe\"");
        assert!(matches!(
            Scenario::<f64>::from_toml_str(&text),
            Err(ScenarioError::Validation { field, .. }) if field == "task_label"
        ));
    }

    #[test]
    fn surface_height_invariant() {
        let text = r#"
name = "x"
task_label = "safe"
start_pose = [0.0, 0.0, 0.0]
waypoints = [[1.0, 0.0]]
[[entities]]
id = "g"
class_label = "grass"
category = "non_navigable_surface"
height = 0.1
footprint = [[5.0, 5.0], [6.0, 5.0], [6.0, 6.0]]
"#;
        assert!(matches!(
            Scenario::<f64>::from_toml_str(text),
            Err(ScenarioError::Validation { field, .. }) if field == "entities[0].height"
        ));
    }

    #[test]
    fn parse_error_is_reported() {
        assert!(matches!(
            Scenario::<f64>::from_toml_str("name = 3"),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn on_requires_surface_class() {
        let text = r#"
name = "x"
task_label = "safe"
start_pose = [0.0, 0.0, 0.0]
waypoints = [[1.0, 0.0]]
[[entities]]
id = "c"
class_label = "cone"
category = "semantic_barrier"
height = 0.5
footprint = [[5.0, 5.0], [5.3, 5.0], [5.3, 5.3], [5.0, 5.3]]
[scripted_predicates]
c = ["ON(cone)"]
"#;
        assert!(Scenario::<f64>::from_toml_str(text).is_err());
    }
}
