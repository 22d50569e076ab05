use crate::geometry::{Pose2, Vec2};
use crate::safety_filter::{ControlInput, InputBounds};
use crate::scalar::wrap_angle;
use serde::{Deserialize, Serialize};

/// Gains of the waypoint follower. Integral and derivative terms are off by
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    /// 1/s, body-frame velocity per meter of position error.
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// 1/s, yaw rate per radian of bearing error.
    pub k_heading: f64,
    /// Meters; a waypoint counts as reached inside this radius.
    pub tolerance: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp: 0.8,
            ki: 0.0,
            kd: 0.0,
            k_heading: 1.0,
            tolerance: 0.3,
        }
    }
}

/// Proportional pursuit of `target`: translate along the body-frame error,
/// turn toward its bearing, then clip to `bounds`.
pub fn nominal_controller(s: &Pose2<f64>, target: Vec2<f64>, gains: &ControllerGains, bounds: &InputBounds<f64>) -> ControlInput<f64> {
    let e = (target - s.position()).rotate(-s.theta);
    let bearing = if e.norm() > 1e-9 { e.y.atan2(e.x) } else { 0.0 };
    bounds.project(ControlInput::new(gains.kp * e.x, gains.kp * e.y, gains.k_heading * wrap_angle(bearing)))
}

/// Stateful follower over an ordered waypoint list.
#[derive(Debug, Clone)]
pub struct WaypointFollower {
    waypoints: Vec<Vec2<f64>>,
    active: usize,
    gains: ControllerGains,
    bounds: InputBounds<f64>,
    integral: Vec2<f64>,
    prev_error: Option<Vec2<f64>>,
}

impl WaypointFollower {
    pub fn new(waypoints: Vec<Vec2<f64>>, gains: ControllerGains, bounds: InputBounds<f64>) -> Self {
        assert!(!waypoints.is_empty(), "waypoint list must be nonempty");
        Self {
            waypoints,
            active: 0,
            gains,
            bounds,
            integral: Vec2::zero(),
            prev_error: None,
        }
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn goal(&self) -> Vec2<f64> {
        *self.waypoints.last().expect("nonempty")
    }

    /// Whether the last waypoint is within tolerance of `s`.
    pub fn at_goal(&self, s: &Pose2<f64>) -> bool {
        self.active + 1 == self.waypoints.len() && s.position().dist(self.goal()) < self.gains.tolerance
    }

    /// Advances past reached waypoints and returns the command; zero at the
    /// goal.
    pub fn command(&mut self, s: &Pose2<f64>, dt: f64) -> ControlInput<f64> {
        while self.active + 1 < self.waypoints.len()
            && s.position().dist(self.waypoints[self.active]) < self.gains.tolerance
        {
            self.active += 1;
            self.integral = Vec2::zero();
            self.prev_error = None;
        }
        if self.at_goal(s) {
            return ControlInput::zero();
        }
        let target = self.waypoints[self.active];
        let mut u = nominal_controller(s, target, &self.gains, &self.bounds);
        if self.gains.ki != 0.0 || self.gains.kd != 0.0 {
            let e = (target - s.position()).rotate(-s.theta);
            self.integral = self.integral + e * dt;
            let de = self.prev_error.map_or(Vec2::zero(), |p| (e - p) * (1.0 / dt));
            self.prev_error = Some(e);
            let extra = self.integral * self.gains.ki + de * self.gains.kd;
            u = self
                .bounds
                .project(ControlInput::new(u.vx + extra.x, u.vy + extra.y, u.omega));
        }
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn follower(w: &[(f64, f64)]) -> WaypointFollower {
        WaypointFollower::new(
            w.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
            ControllerGains::default(),
            InputBounds::default(),
        )
    }

    #[test]
    fn zero_at_last_waypoint() {
        let mut f = follower(&[(1.0, 0.0)]);
        let u = f.command(&Pose2::new(0.9, 0.1, 0.3), 0.1);
        assert_eq!(u, ControlInput::zero());
    }

    #[test]
    fn straight_ahead() {
        let g = ControllerGains::default();
        let u = nominal_controller(&Pose2::new(0.0, 0.0, 0.0), Vec2::new(1.0, 0.0), &g, &InputBounds::default());
        assert!(u.vx > 0.0);
        assert_eq!(u.vy, 0.0);
        assert_eq!(u.omega, 0.0);
    }

    #[test]
    fn directly_left() {
        let g = ControllerGains::default();
        let b = InputBounds::default();
        let u = nominal_controller(&Pose2::new(2.0, 1.0, 0.0), Vec2::new(2.0, 2.0), &g, &b);
        // e = (0, 1): strafe left at kp, turn left at k_heading * pi/2 (clipped)
        assert!(u.vx.abs() < 1e-12);
        assert!((u.vy - b.v_max.min(g.kp)).abs() < 1e-12);
        assert!((u.omega - (g.k_heading * FRAC_PI_2).min(b.omega_max)).abs() < 1e-12);
    }

    #[test]
    fn advances_through_waypoints() {
        let mut f = follower(&[(0.1, 0.0), (5.0, 0.0)]);
        f.command(&Pose2::new(0.0, 0.0, 0.0), 0.1);
        assert_eq!(f.active(), 1);
    }

    #[test]
    fn speed_is_clipped() {
        let mut f = follower(&[(100.0, 50.0)]);
        let u = f.command(&Pose2::new(0.0, 0.0, 0.0), 0.1);
        assert!(u.planar_speed() <= 0.35 + 1e-12);
        assert!(u.omega.abs() <= 1.0);
    }
}
