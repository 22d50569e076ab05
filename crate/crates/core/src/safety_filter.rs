//! CBF-QP safety filter for the holonomic body-frame model
//! `x' = x + dt * R(theta) u` with `u = (vx, vy, omega)`.

use crate::geometry::{Pose2, Vec2};
use crate::scalar::{wrap_angle, Scalar};

/// Planar robot state. Heading is kept wrapped to `(-pi, pi]`.
pub type RobotState<T> = Pose2<T>;

/// Body-frame command: `vx`, `vy` in m/s, `omega` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput<T> {
    pub vx: T,
    pub vy: T,
    pub omega: T,
}

impl<T: Scalar> ControlInput<T> {
    pub fn new(vx: T, vy: T, omega: T) -> Self {
        Self { vx, vy, omega }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.vx, self.vy, self.omega]
    }

    pub fn planar_speed(self) -> T {
        self.vx.hypot(self.vy)
    }

    pub fn is_finite(self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }

    pub fn distance(self, o: Self) -> T {
        norm3(sub3(self.to_array(), o.to_array()))
    }
}

/// Input set: planar speed `<= v_max`, `|omega| <= omega_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBounds<T> {
    pub v_max: T,
    pub omega_max: T,
}

impl<T: Scalar> Default for InputBounds<T> {
    fn default() -> Self {
        Self {
            v_max: T::lit(0.35),
            omega_max: T::one(),
        }
    }
}

impl<T: Scalar> InputBounds<T> {
    pub fn contains(&self, u: ControlInput<T>, tol: T) -> bool {
        u.planar_speed() <= self.v_max + tol && u.omega.abs() <= self.omega_max + tol
    }

    /// Euclidean projection onto the input set. The set is a product of a
    /// disc and an interval, so the projection splits.
    pub fn project(&self, u: ControlInput<T>) -> ControlInput<T> {
        let s = u.planar_speed();
        let (vx, vy) = if s > self.v_max && s > T::zero() {
            let k = self.v_max / s;
            (u.vx * k, u.vy * k)
        } else {
            (u.vx, u.vy)
        };
        ControlInput::new(vx, vy, u.omega.max(-self.omega_max).min(self.omega_max))
    }

    /// `max a.u` over the set and its maximizer.
    fn support(&self, a: [T; 3]) -> (T, ControlInput<T>) {
        let ap = a[0].hypot(a[1]);
        let (vx, vy) = if ap > T::zero() {
            (self.v_max * a[0] / ap, self.v_max * a[1] / ap)
        } else {
            (T::zero(), T::zero())
        };
        let w = if a[2] > T::zero() {
            self.omega_max
        } else if a[2] < T::zero() {
            -self.omega_max
        } else {
            T::zero()
        };
        (self.v_max * ap + self.omega_max * a[2].abs(), ControlInput::new(vx, vy, w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsModel<T> {
    pub dt: T,
}

impl<T: Scalar> Default for DynamicsModel<T> {
    fn default() -> Self {
        Self { dt: T::lit(0.1) }
    }
}

impl<T: Scalar> DynamicsModel<T> {
    pub fn step(&self, s: RobotState<T>, u: ControlInput<T>) -> RobotState<T> {
        step_dynamics(s, u, self.dt)
    }
}

pub fn step_dynamics<T: Scalar>(s: RobotState<T>, u: ControlInput<T>, dt: T) -> RobotState<T> {
    let (sn, cs) = s.theta.sin_cos();
    Pose2 {
        x: s.x + dt * (cs * u.vx - sn * u.vy),
        y: s.y + dt * (sn * u.vx + cs * u.vy),
        theta: wrap_angle(s.theta + dt * u.omega),
    }
}

/// Linear class-K function `alpha(h) = slope * h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassK<T> {
    pub slope: T,
}

impl<T: Scalar> Default for ClassK<T> {
    fn default() -> Self {
        Self { slope: T::lit(0.25) }
    }
}

impl<T: Scalar> ClassK<T> {
    pub fn eval(&self, h: T) -> T {
        self.slope * h
    }
}

/// Anything that provides a barrier value and its spatial gradient.
pub trait BarrierField<T: Scalar> {
    fn value(&self, p: Vec2<T>) -> T;
    fn gradient(&self, p: Vec2<T>) -> Vec2<T>;
}

/// Halfspace `a.u >= b` over `u = (vx, vy, omega)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraint<T> {
    pub a: [T; 3],
    pub b: T,
}

/// Builds the CBF condition `<grad h, R(theta) u> >= -alpha(h)` as a halfspace.
pub fn cbf_constraint<T: Scalar>(s: RobotState<T>, h: T, grad: Vec2<T>, alpha: ClassK<T>) -> Constraint<T> {
    let (sn, cs) = s.theta.sin_cos();
    Constraint {
        a: [cs * grad.x + sn * grad.y, -sn * grad.x + cs * grad.y, T::zero()],
        b: -alpha.eval(h),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSolution<T> {
    pub u: ControlInput<T>,
    /// `|a| < 1e-9` with the nominal input violating the constraint.
    pub degenerate: bool,
    /// The bounded problem has no feasible point; `u` maximizes `a.u`.
    pub infeasible: bool,
}

const DEGENERATE_NORM: f64 = 1e-9;

/// Minimizes `|u - u_nom|^2` subject to `a.u >= b`, optionally within `bounds`.
pub fn solve_qp<T: Scalar>(
    u_nom: ControlInput<T>,
    c: &Constraint<T>,
    bounds: Option<&InputBounds<T>>,
) -> QpSolution<T> {
    let un = u_nom.to_array();
    let lhs = dot3(c.a, un);
    let ok = QpSolution {
        u: u_nom,
        degenerate: false,
        infeasible: false,
    };
    let unbounded = if lhs >= c.b {
        u_nom
    } else {
        let nn = dot3(c.a, c.a);
        if nn.sqrt() < T::lit(DEGENERATE_NORM) {
            return QpSolution {
                u: ControlInput::zero(),
                degenerate: true,
                infeasible: false,
            };
        }
        let k = (c.b - lhs) / nn;
        ControlInput::from_array(add3(un, scale3(c.a, k)))
    };
    match bounds {
        Some(bd) if !bd.contains(unbounded, T::lit(1e-12)) => solve_bounded(u_nom, c, bd),
        _ => QpSolution { u: unbounded, ..ok },
    }
}

/// Bounded case via the scalar dual: `u(l) = P(u_nom + l a)` with `l >= 0`.
/// `a.u(l)` is nondecreasing in `l` because projection onto a convex set is
/// a monotone map, so the active multiplier is found by bisection.
fn solve_bounded<T: Scalar>(u_nom: ControlInput<T>, c: &Constraint<T>, bd: &InputBounds<T>) -> QpSolution<T> {
    let un = u_nom.to_array();
    let at = |l: T| bd.project(ControlInput::from_array(add3(un, scale3(c.a, l))));
    let g = |l: T| dot3(c.a, at(l).to_array());
    let u0 = at(T::zero());
    if dot3(c.a, u0.to_array()) >= c.b {
        return QpSolution {
            u: u0,
            degenerate: false,
            infeasible: false,
        };
    }
    let (gmax, umax) = bd.support(c.a);
    if gmax < c.b {
        return QpSolution {
            u: umax,
            degenerate: false,
            infeasible: true,
        };
    }
    let mut lo = T::zero();
    let mut hi = T::one() / dot3(c.a, c.a).sqrt().max(T::lit(1e-300));
    let mut grow = 0;
    while g(hi) < c.b && grow < 200 {
        lo = hi;
        hi = hi * T::two();
        grow += 1;
    }
    for _ in 0..200 {
        let mid = T::half() * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= c.b {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    QpSolution {
        u: at(hi),
        degenerate: false,
        infeasible: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDiagnostics<T> {
    pub h: T,
    pub grad: Vec2<T>,
    pub constraint: Constraint<T>,
    /// `a.u_safe - b`; nonnegative when the constraint holds.
    pub margin: T,
    pub intervention: T,
    pub intervened: bool,
    pub degenerate: bool,
    pub infeasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyFilter<T> {
    pub alpha: ClassK<T>,
    pub bounds: Option<InputBounds<T>>,
}

impl<T: Scalar> Default for SafetyFilter<T> {
    fn default() -> Self {
        Self {
            alpha: ClassK::default(),
            bounds: Some(InputBounds::default()),
        }
    }
}

impl<T: Scalar> SafetyFilter<T> {
    pub fn step<B: BarrierField<T> + ?Sized>(
        &self,
        s: RobotState<T>,
        u_nom: ControlInput<T>,
        barrier: &B,
    ) -> (ControlInput<T>, FilterDiagnostics<T>) {
        filter_step(s, u_nom, barrier, self.alpha, self.bounds.as_ref())
    }
}

pub fn filter_step<T: Scalar, B: BarrierField<T> + ?Sized>(
    s: RobotState<T>,
    u_nom: ControlInput<T>,
    barrier: &B,
    alpha: ClassK<T>,
    bounds: Option<&InputBounds<T>>,
) -> (ControlInput<T>, FilterDiagnostics<T>) {
    let p = s.position();
    let h = barrier.value(p);
    let grad = barrier.gradient(p);
    let constraint = cbf_constraint(s, h, grad, alpha);
    let sol = solve_qp(u_nom, &constraint, bounds);
    let intervention = sol.u.distance(u_nom);
    let diag = FilterDiagnostics {
        h,
        grad,
        constraint,
        margin: dot3(constraint.a, sol.u.to_array()) - constraint.b,
        intervention,
        intervened: intervention > T::zero(),
        degenerate: sol.degenerate,
        infeasible: sol.infeasible,
    };
    (sol.u, diag)
}

fn dot3<T: Scalar>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn add3<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
fn sub3<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn scale3<T: Scalar>(a: [T; 3], k: T) -> [T; 3] {
    [a[0] * k, a[1] * k, a[2] * k]
}
fn norm3<T: Scalar>(a: [T; 3]) -> T {
    dot3(a, a).sqrt()
}
