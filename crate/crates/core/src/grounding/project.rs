use super::grid::SafetyGrid;
use super::mask::{apply_operator, class_mask, compose_image_safe_set, DimensionMismatch, PixelMask};
use super::predicate::Predicate;
use crate::scalar::Scalar;
use crate::sensor::{in_band, CameraModel, Frame, PerceptionEvent};
use crate::world::Scenario;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProjectionStats {
    pub safe_points: u64,
    pub unsafe_points: u64,
    pub no_depth: u64,
    pub gated: u64,
}

/// Unprojects masked pixels, drops them to the ground plane and adds one
/// count per pixel to the cell below. Points outside the planar range band
/// around the robot are discarded; points off the grid are discarded too.
pub fn project_and_accumulate<T: Scalar>(
    safe: &PixelMask,
    unsafe_: &PixelMask,
    frame: &Frame<T>,
    cam: &CameraModel<T>,
    grid: &mut SafetyGrid<T>,
    min_range: T,
    max_range: T,
) -> Result<ProjectionStats, DimensionMismatch> {
    safe.check_dims(frame.width, frame.height)?;
    unsafe_.check_dims(frame.width, frame.height)?;
    let pose = frame.camera_pose;
    let robot = pose.position();
    let origin = cam.origin(&pose);
    let (r, d, f) = cam.axes(&pose);
    let mut stats = ProjectionStats::default();
    let mut add = |u: usize, v: usize, is_safe: bool, stats: &mut ProjectionStats| {
        let z = frame.depth[frame.index(u, v)];
        if !z.is_finite() || z <= T::zero() {
            stats.no_depth += 1;
            return;
        }
        let x = z * (T::lit(u as f64) - cam.cx) / cam.fx;
        let y = z * (T::lit(v as f64) - cam.cy) / cam.fy;
        let w = origin + r.scale(x) + d.scale(y) + f.scale(z);
        let p = w.planar();
        if !in_band(p.dist(robot), min_range, max_range) || !grid.in_extent(p) {
            stats.gated += 1;
            return;
        }
        let (i, j) = grid.cell_of(p);
        if is_safe {
            grid.add_safe(i, j, 1);
            stats.safe_points += 1;
        } else {
            grid.add_unsafe(i, j, 1);
            stats.unsafe_points += 1;
        }
    };
    for (u, v) in safe.iter_set() {
        add(u, v, true, &mut stats);
    }
    for (u, v) in unsafe_.iter_set() {
        add(u, v, false, &mut stats);
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundingOutcome {
    /// Predicates whose class could not be grounded.
    pub failures: Vec<Predicate>,
    pub stats: ProjectionStats,
}

/// Image-space grounding parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundingParams<T> {
    pub dilation_px: usize,
    pub min_range: T,
    pub max_range: T,
}

impl<T: Scalar> Default for GroundingParams<T> {
    fn default() -> Self {
        Self {
            dilation_px: super::mask::DEFAULT_DILATION_PX,
            min_range: T::lit(3.0),
            max_range: T::lit(7.0),
        }
    }
}

/// Grounds one delivered event against the frame it was captured from and
/// accumulates the evidence into `grid`.
pub fn ground_event<T: Scalar>(
    event: &PerceptionEvent<T>,
    frame: &Frame<T>,
    scenario: &Scenario<T>,
    cam: &CameraModel<T>,
    grid: &mut SafetyGrid<T>,
    params: &GroundingParams<T>,
) -> GroundingOutcome {
    let classes = scenario.classes();
    let dims = (frame.width, frame.height);
    let mut masks: HashMap<String, PixelMask> = HashMap::new();
    for p in event.predicates_safe.iter().chain(&event.predicates_unsafe) {
        if masks.contains_key(&p.class_label) {
            continue;
        }
        if let Some(c) = classes.index(&p.class_label) {
            masks.insert(p.class_label.clone(), class_mask(&frame.labels, dims.0, dims.1, c));
        }
    }
    let mut failures = Vec::new();
    let mut run = |preds: &[Predicate]| -> Vec<PixelMask> {
        preds
            .iter()
            .map(|p| {
                let out = apply_operator(p, &masks, dims, params.dilation_px);
                if out.grounding_failure {
                    failures.push(p.clone());
                }
                out.mask
            })
            .collect()
    };
    let safe = run(&event.predicates_safe);
    let uns = run(&event.predicates_unsafe);
    let (s, u) = compose_image_safe_set(&safe, &uns, dims.0, dims.1).expect("masks built from the frame");
    let stats = project_and_accumulate(&s, &u, frame, cam, grid, params.min_range, params.max_range)
        .expect("masks built from the frame");
    GroundingOutcome { failures, stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose2, Vec2};
    use crate::sensor::render_frame;

    fn open() -> Scenario<f64> {
        Scenario::from_toml_str("name='o'\ntask_label='safe'\nstart_pose=[0.0,0.0,0.0]\nwaypoints=[[1.0,0.0]]\n")
            .unwrap()
    }

    #[test]
    fn single_pixel_single_increment() {
        let s = open();
        let cam = CameraModel::<f64>::simulation();
        let f = render_frame(&s, &Pose2::new(0.0, 0.0, 0.0), &cam, 0.0);
        let mut grid = SafetyGrid::new(0.2, Vec2::new(-10.0, -10.0), 150, 100).unwrap();
        // Pick the center column pixel whose ground point is about 5 m away.
        let v = (0..cam.height)
            .find(|&v| {
                let z = f.depth[f.index(250, v)];
                z.is_finite() && z < 5.5
            })
            .unwrap();
        let mut m = PixelMask::new(cam.width, cam.height);
        m.set(250, v, true);
        let st = project_and_accumulate(&m, &PixelMask::new(cam.width, cam.height), &f, &cam, &mut grid, 3.0, 7.0)
            .unwrap();
        assert_eq!(st.safe_points, 1);
        let mut total = 0;
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                let (a, b) = grid.counts(i, j);
                total += a + b;
            }
        }
        assert_eq!(total, 1);
    }

    #[test]
    fn many_pixels_same_cell() {
        let s = open();
        let cam = CameraModel::<f64>::simulation();
        let f = render_frame(&s, &Pose2::new(0.0, 0.0, 0.0), &cam, 0.0);
        let mut grid = SafetyGrid::new(5.0, Vec2::new(2.5, 0.0), 1, 1).unwrap();
        // Coarse single cell covering x in [0, 5], y in [-2.5, 2.5].
        let mut m = PixelMask::new(cam.width, cam.height);
        let mut placed = 0;
        'outer: for v in 0..cam.height {
            for u in 200..300 {
                let z = f.depth[f.index(u, v)];
                if z.is_finite() {
                    let p = cam.camera_to_world(&f.camera_pose, cam.pixel_to_point(u as f64, v as f64, z).unwrap());
                    let r = p.planar().norm();
                    if (3.2..4.8).contains(&r) && p.y.abs() < 2.0 {
                        m.set(u, v, true);
                        placed += 1;
                        if placed == 100 {
                            break 'outer;
                        }
                    }
                }
            }
        }
        assert_eq!(placed, 100);
        project_and_accumulate(&PixelMask::new(cam.width, cam.height), &m, &f, &cam, &mut grid, 3.0, 7.0).unwrap();
        assert_eq!(grid.counts(0, 0), (0, 100));
    }
}
