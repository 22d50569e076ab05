use super::camera::CameraModel;
use crate::geometry::{Pose2, Vec2, Vec3};
use crate::scalar::Scalar;
use crate::world::{ClassTable, Scenario, DEFAULT_FLOOR};
use std::io::{self, Write};
use std::path::Path;

/// Synthetic segmentation and depth image.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub width: usize,
    pub height: usize,
    /// Class index per pixel, row-major; 0 is background.
    pub labels: Vec<u16>,
    /// z-depth in meters; infinite where nothing was hit.
    pub depth: Vec<T>,
    /// Entity index + 1 per pixel, 0 for background and uncovered ground.
    pub instances: Vec<u16>,
    pub timestamp: T,
    /// Robot pose at capture. The camera pose follows from the mount.
    pub camera_pose: Pose2<T>,
}

impl<T: Scalar> Frame<T> {
    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// Entity indices with at least one visible pixel, ascending.
    pub fn visible_entities(&self) -> Vec<usize> {
        let mut seen = Vec::new();
        for &i in &self.instances {
            if i > 0 {
                let e = (i - 1) as usize;
                if e >= seen.len() {
                    seen.resize(e + 1, false);
                }
                seen[e] = true;
            }
        }
        seen.iter().enumerate().filter(|(_, s)| **s).map(|(i, _)| i).collect()
    }

    /// Writes `<stem>.labels.u16`, `<stem>.depth.f32` (little-endian,
    /// row-major) and `<stem>.txt` with size, intrinsics and pose.
    pub fn export(&self, dir: &Path, stem: &str, cam: &CameraModel<T>) -> io::Result<()> {
        let mut lab = Vec::with_capacity(self.labels.len() * 2);
        for l in &self.labels {
            lab.extend_from_slice(&l.to_le_bytes());
        }
        std::fs::write(dir.join(format!("{stem}.labels.u16")), lab)?;
        let mut dep = Vec::with_capacity(self.depth.len() * 4);
        for d in &self.depth {
            dep.extend_from_slice(&(d.as_f64() as f32).to_le_bytes());
        }
        std::fs::write(dir.join(format!("{stem}.depth.f32")), dep)?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}.txt")))?;
        writeln!(f, "width {}", self.width)?;
        writeln!(f, "height {}", self.height)?;
        writeln!(f, "fx {}\nfy {}\ncx {}\ncy {}", cam.fx, cam.fy, cam.cx, cam.cy)?;
        writeln!(f, "mount_height {}\npitch {}\nbody_offset {}", cam.mount_height, cam.pitch, cam.body_offset)?;
        writeln!(f, "timestamp {}", self.timestamp)?;
        writeln!(
            f,
            "pose {} {} {}",
            self.camera_pose.x, self.camera_pose.y, self.camera_pose.theta
        )?;
        Ok(())
    }
}

/// Screen-space bounding box of an extruded entity, inclusive pixel ranges.
struct Prism<T> {
    entity: usize,
    class: u16,
    height: T,
    edges: Vec<(Vec2<T>, Vec2<T>)>,
    u0: usize,
    u1: usize,
    v0: usize,
    v1: usize,
}

/// Ray-casts every pixel against the ground plane and extruded entities.
pub fn render_frame<T: Scalar>(scenario: &Scenario<T>, pose: &Pose2<T>, cam: &CameraModel<T>, timestamp: T) -> Frame<T> {
    let (w, h) = (cam.width, cam.height);
    let classes = scenario.classes();
    let floor = classes.index(DEFAULT_FLOOR).unwrap_or(ClassTable::FLOOR);
    let origin = cam.origin(pose);

    let prisms: Vec<Prism<T>> = scenario
        .entities
        .iter()
        .enumerate()
        .filter(|(_, e)| e.height > T::zero())
        .filter_map(|(i, e)| {
            let (u0, u1, v0, v1) = screen_bounds(cam, pose, e.footprint.vertices(), e.height)?;
            Some(Prism {
                entity: i,
                class: classes.index(&e.class_label).unwrap_or(ClassTable::BACKGROUND),
                height: e.height,
                edges: e.footprint.edges().collect(),
                u0,
                u1,
                v0,
                v1,
            })
        })
        .collect();
    // Later surface entities win where they overlap.
    let surfaces: Vec<(usize, u16)> = scenario
        .entities
        .iter()
        .enumerate()
        .rev()
        .filter(|(_, e)| e.category.is_surface())
        .map(|(i, e)| (i, classes.index(&e.class_label).unwrap_or(floor)))
        .collect();

    let n = w * h;
    let mut labels = vec![ClassTable::BACKGROUND; n];
    let mut depth = vec![T::infinity(); n];
    let mut instances = vec![0u16; n];
    for v in 0..h {
        let vf = T::lit(v as f64);
        for u in 0..w {
            let dir = cam.ray(pose, T::lit(u as f64), vf);
            let k = v * w + u;
            let mut best = T::infinity();
            if dir.z < T::zero() {
                let t = -origin.z / dir.z;
                if t > T::zero() && t.is_finite() {
                    best = t;
                    let hit = Vec2::new(origin.x + t * dir.x, origin.y + t * dir.y);
                    let (lab, inst) = surfaces
                        .iter()
                        .find(|(i, _)| scenario.entities[*i].footprint.contains(hit))
                        .map(|(i, c)| (*c, (*i + 1) as u16))
                        .unwrap_or((floor, 0));
                    labels[k] = lab;
                    instances[k] = inst;
                    depth[k] = t;
                }
            }
            for p in &prisms {
                if u < p.u0 || u > p.u1 || v < p.v0 || v > p.v1 {
                    continue;
                }
                if let Some(t) = ray_prism(origin, dir, &p.edges, p.height) {
                    if t < best {
                        best = t;
                        labels[k] = p.class;
                        instances[k] = (p.entity + 1) as u16;
                        depth[k] = t;
                    }
                }
            }
        }
    }
    Frame {
        width: w,
        height: h,
        labels,
        depth,
        instances,
        timestamp,
        camera_pose: *pose,
    }
}

/// Pixel bounds of the projected prism; full frame if any corner is behind
/// the camera, `None` if entirely behind it.
fn screen_bounds<T: Scalar>(
    cam: &CameraModel<T>,
    pose: &Pose2<T>,
    footprint: &[Vec2<T>],
    height: T,
) -> Option<(usize, usize, usize, usize)> {
    let full = Some((0, cam.width - 1, 0, cam.height - 1));
    let mut umin = T::infinity();
    let mut umax = T::neg_infinity();
    let mut vmin = T::infinity();
    let mut vmax = T::neg_infinity();
    let mut behind = 0;
    let corners = footprint.len() * 2;
    for p in footprint {
        for z in [T::zero(), height] {
            let c = cam.world_to_camera(pose, Vec3::new(p.x, p.y, z));
            if c.z <= T::lit(1e-3) {
                behind += 1;
                continue;
            }
            let (u, v) = cam.project(c).expect("in front");
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
    }
    if behind == corners {
        return None;
    }
    if behind > 0 {
        return full;
    }
    let clamp = |x: T, hi: usize| -> Option<usize> {
        let f = x.as_f64();
        if f < 0.0 {
            Some(0)
        } else if f > hi as f64 {
            Some(hi)
        } else {
            Some(f as usize)
        }
    };
    let (w1, h1) = (cam.width - 1, cam.height - 1);
    if umax.as_f64() < -1.0 || vmax.as_f64() < -1.0 || umin.as_f64() > w1 as f64 + 1.0 || vmin.as_f64() > h1 as f64 + 1.0 {
        return None;
    }
    Some((
        clamp(umin - T::one(), w1)?,
        clamp(umax + T::one(), w1)?,
        clamp(vmin - T::one(), h1)?,
        clamp(vmax + T::one(), h1)?,
    ))
}

/// Entry parameter of the ray into a convex polygon extruded over
/// `z in [0, height]`; `None` on a miss or when the origin is inside.
pub fn ray_prism<T: Scalar>(o: Vec3<T>, d: Vec3<T>, edges: &[(Vec2<T>, Vec2<T>)], height: T) -> Option<T> {
    let mut t0 = T::zero();
    let mut t1 = T::infinity();
    if d.z.abs() < T::lit(1e-15) {
        if o.z < T::zero() || o.z > height {
            return None;
        }
    } else {
        let a = -o.z / d.z;
        let b = (height - o.z) / d.z;
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    let (op, dp) = (o.planar(), d.planar());
    for &(p, q) in edges {
        let e = q - p;
        let n = Vec2::new(e.y, -e.x);
        let num = n.dot(op - p);
        let den = n.dot(dp);
        if den == T::zero() {
            if num > T::zero() {
                return None;
            }
            continue;
        }
        let t = -num / den;
        if den < T::zero() {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
        if t0 > t1 {
            return None;
        }
    }
    if t0 > T::zero() && t0 <= t1 {
        Some(t0)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Scenario;
    use approx::assert_abs_diff_eq;

    fn open() -> Scenario<f64> {
        Scenario::from_toml_str(
            "name='o'\ntask_label='safe'\nstart_pose=[0.0,0.0,0.0]\nwaypoints=[[1.0,0.0]]\n",
        )
        .unwrap()
    }

    fn cube_at(x: f64) -> Scenario<f64> {
        let text = format!(
            "name='c'\ntask_label='safe'\nstart_pose=[0.0,-5.0,0.0]\nwaypoints=[[1.0,-5.0]]\n\
             [[entities]]\nid='box'\nclass_label='crate'\ncategory='metric_obstacle'\nheight=1.0\n\
             footprint=[[{a},-0.5],[{b},-0.5],[{b},0.5],[{a},0.5]]\n",
            a = x - 0.5,
            b = x + 0.5
        );
        Scenario::from_toml_str(&text).unwrap()
    }

    #[test]
    fn principal_ray_depth() {
        let mut cam = CameraModel::<f64>::simulation();
        cam.pitch = 0.3;
        cam.mount_height = 1.2;
        let f = render_frame(&open(), &Pose2::new(0.0, 0.0, 0.4), &cam, 0.0);
        let k = f.index(250, 160);
        assert_abs_diff_eq!(f.depth[k], 1.2 / 0.3f64.sin(), epsilon = 1e-12);
        assert_eq!(f.labels[k], ClassTable::FLOOR);
    }

    #[test]
    fn level_camera_sees_sky_above_horizon() {
        let mut cam = CameraModel::<f64>::simulation();
        cam.pitch = 0.0;
        let f = render_frame(&open(), &Pose2::new(0.0, 0.0, 0.0), &cam, 0.0);
        for v in 0..=160 {
            for u in 0..cam.width {
                assert_eq!(f.labels[f.index(u, v)], ClassTable::BACKGROUND);
                assert!(f.depth[f.index(u, v)].is_infinite());
            }
        }
        assert_eq!(f.labels[f.index(10, 161)], ClassTable::FLOOR);
    }

    #[test]
    fn cube_on_axis_projects_to_block() {
        let mut cam = CameraModel::<f64>::simulation();
        cam.pitch = 0.0;
        cam.mount_height = 0.5;
        cam.body_offset = 0.0;
        let s = cube_at(5.0);
        let f = render_frame(&s, &Pose2::new(0.0, 0.0, 0.0), &cam, 0.0);
        let cls = s.classes().index("crate").unwrap();
        // Front face at z = 4.5 spans x in [-0.5, 0.5], y in [-0.5, 0.5].
        let u_lo = (cam.fx * -0.5 / 4.5 + cam.cx).ceil() as usize;
        let u_hi = (cam.fx * 0.5 / 4.5 + cam.cx).floor() as usize;
        let v_lo = (cam.fy * -0.5 / 4.5 + cam.cy).ceil() as usize;
        let v_hi = (cam.fy * 0.5 / 4.5 + cam.cy).floor() as usize;
        for v in v_lo..=v_hi {
            for u in u_lo..=u_hi {
                let k = f.index(u, v);
                assert_eq!(f.labels[k], cls, "pixel {u},{v}");
                assert_abs_diff_eq!(f.depth[k], 4.5, epsilon = 1e-9);
            }
        }
        // Just outside the block is not the cube (front face projection is the
        // silhouette for the lower half, top face extends it above).
        assert_ne!(f.labels[f.index(u_lo - 2, 160)], cls);
        assert_ne!(f.labels[f.index(u_hi + 2, 160)], cls);
        assert_eq!(f.visible_entities(), vec![0]);
    }

    #[test]
    fn render_round_trip_on_surfaces() {
        let s = cube_at(4.0);
        let cam = CameraModel::<f64>::simulation();
        let pose = Pose2::new(0.0, 0.3, 0.1);
        let f = render_frame(&s, &pose, &cam, 0.0);
        let e = &s.entities[0];
        for v in (0..cam.height).step_by(7) {
            for u in (0..cam.width).step_by(5) {
                let k = f.index(u, v);
                if f.labels[k] == 0 {
                    continue;
                }
                let pc = cam.pixel_to_point(u as f64, v as f64, f.depth[k]).unwrap();
                let pw = cam.camera_to_world(&pose, pc);
                if f.instances[k] == 0 {
                    assert!(pw.z.abs() < 1e-6);
                } else {
                    // on the prism surface: on a face plane or side wall
                    let on_top = (pw.z - e.height).abs() < 1e-6;
                    let on_side = e.footprint.boundary_distance(pw.planar()) < 1e-6;
                    assert!(on_top || on_side, "{pw:?}");
                }
            }
        }
    }

    #[test]
    fn prism_intersection_cases() {
        let sq = crate::geometry::ConvexPolygon::rectangle(Vec2::new(0.0, 0.0), 2.0, 2.0, 0.0).unwrap();
        let edges: Vec<_> = sq.edges().collect();
        let t = ray_prism(Vec3::new(-5.0, 0.0, 0.5), Vec3::new(1.0, 0.0, 0.0), &edges, 1.0);
        assert_eq!(t, Some(4.0));
        assert_eq!(ray_prism(Vec3::new(-5.0, 0.0, 1.5), Vec3::new(1.0, 0.0, 0.0), &edges, 1.0), None);
        let t = ray_prism(Vec3::new(0.0, 0.0, 3.0), Vec3::new(0.0, 0.0, -1.0), &edges, 1.0);
        assert_eq!(t, Some(2.0));
        assert_eq!(ray_prism(Vec3::new(0.0, 0.0, 0.5), Vec3::new(1.0, 0.0, 0.0), &edges, 1.0), None);
    }
}
