use crate::geometry::{Pose2, Vec2, Vec3};
use crate::scalar::Scalar;

/// Pinhole camera rigidly mounted on the robot. Camera frame: x right,
/// y down, z along the optical axis. Pixel `(u, v)` is used directly as the
/// image coordinate, column `u`, row `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
    /// Meters above ground.
    pub mount_height: T,
    /// Radians, downward positive.
    pub pitch: T,
    /// Meters forward of the robot center.
    pub body_offset: T,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CameraError {
    #[error("invalid camera: {0}")]
    Invalid(&'static str),
    #[error("depth must be positive, got {0}")]
    NonpositiveDepth(f64),
}

impl<T: Scalar> CameraModel<T> {
    /// Simulation intrinsics, 500x320 image.
    pub fn simulation() -> Self {
        Self {
            fx: T::lit(274.9),
            fy: T::lit(376.7),
            cx: T::lit(250.0),
            cy: T::lit(160.0),
            width: 500,
            height: 320,
            mount_height: T::lit(0.6),
            pitch: T::lit(8f64.to_radians()),
            body_offset: T::lit(0.3),
        }
    }

    /// Legged-robot hardware intrinsics, 640x480 image.
    pub fn spot() -> Self {
        Self {
            fx: T::lit(552.0),
            fy: T::lit(552.0),
            cx: T::lit(320.0),
            cy: T::lit(240.0),
            width: 640,
            height: 480,
            mount_height: T::lit(0.6),
            pitch: T::lit(8f64.to_radians()),
            body_offset: T::lit(0.3),
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(CameraError::Invalid("focal lengths must be positive"));
        }
        if !(self.cx >= T::zero() && self.cx < T::lit(self.width as f64)) {
            return Err(CameraError::Invalid("cx outside image"));
        }
        if !(self.cy >= T::zero() && self.cy < T::lit(self.height as f64)) {
            return Err(CameraError::Invalid("cy outside image"));
        }
        if !(self.mount_height > T::zero()) {
            return Err(CameraError::Invalid("mount height must be positive"));
        }
        Ok(())
    }

    /// Back-projects pixel `(u, v)` at z-depth `d` into the camera frame.
    pub fn pixel_to_point(&self, u: T, v: T, d: T) -> Result<Vec3<T>, CameraError> {
        if !(d > T::zero()) {
            return Err(CameraError::NonpositiveDepth(d.as_f64()));
        }
        Ok(Vec3::new(d * (u - self.cx) / self.fx, d * (v - self.cy) / self.fy, d))
    }

    /// Projects a camera-frame point; `None` behind the image plane.
    pub fn project(&self, p: Vec3<T>) -> Option<(T, T)> {
        if p.z <= T::zero() {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// World-frame camera center for a robot pose.
    pub fn origin(&self, pose: &Pose2<T>) -> Vec3<T> {
        let (s, c) = pose.theta.sin_cos();
        Vec3::new(pose.x + self.body_offset * c, pose.y + self.body_offset * s, self.mount_height)
    }

    /// World-frame camera axes `(right, down, forward)`.
    pub fn axes(&self, pose: &Pose2<T>) -> (Vec3<T>, Vec3<T>, Vec3<T>) {
        let (s, c) = pose.theta.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let fwd = Vec3::new(c * cp, s * cp, -sp);
        let right = Vec3::new(s, -c, T::zero());
        (right, fwd.cross(right), fwd)
    }

    pub fn camera_to_world(&self, pose: &Pose2<T>, p: Vec3<T>) -> Vec3<T> {
        let (r, d, f) = self.axes(pose);
        self.origin(pose) + r.scale(p.x) + d.scale(p.y) + f.scale(p.z)
    }

    pub fn world_to_camera(&self, pose: &Pose2<T>, p: Vec3<T>) -> Vec3<T> {
        let (r, d, f) = self.axes(pose);
        let q = p - self.origin(pose);
        Vec3::new(q.dot(r), q.dot(d), q.dot(f))
    }

    /// World-frame ray direction through a pixel, scaled so its optical-axis
    /// component is 1. The ray parameter is then the z-depth.
    pub fn ray(&self, pose: &Pose2<T>, u: T, v: T) -> Vec3<T> {
        let (r, d, f) = self.axes(pose);
        r.scale((u - self.cx) / self.fx) + d.scale((v - self.cy) / self.fy) + f
    }
}

/// Keeps points whose planar distance from `robot` lies in `[min_range, max_range]`.
pub fn range_gate<T: Scalar, L: Copy>(
    points: &[(Vec3<T>, L)],
    robot: Vec2<T>,
    min_range: T,
    max_range: T,
) -> Result<Vec<(Vec3<T>, L)>, RangeError> {
    if min_range > max_range {
        return Err(RangeError {
            min: min_range.as_f64(),
            max: max_range.as_f64(),
        });
    }
    Ok(points
        .iter()
        .copied()
        .filter(|(p, _)| in_band(p.planar().dist(robot), min_range, max_range))
        .collect())
}

#[inline]
pub fn in_band<T: Scalar>(r: T, min_range: T, max_range: T) -> bool {
    r >= min_range && r <= max_range
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("range band is empty: min {min} m > max {max} m")]
pub struct RangeError {
    pub min: f64,
    pub max: f64,
}
