//! Perception-uncertainty certificates: the regularized inverse distance,
//! its expectation bound after `k` measurements, the two operational forms
//! (observations per movement and maximum traversal speed), certificate
//! search and Monte Carlo validation of the beeline model.
//!
//! Problem data is generic over the scalar; quadrature and products are
//! accumulated in `f64` regardless.

mod montecarlo;
mod quadrature;
mod report;

pub use montecarlo::{clopper_pearson, monte_carlo_validate, MonteCarloResult};
pub use quadrature::simpson;
pub use report::{certify, CertifyOptions, CertifyReport};

use crate::scalar::Scalar;
use crate::sensor::DetectionModel;

/// Default cap on measurement counts.
pub const K_MAX: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertificateError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("every prior-weighted point is detected with certainty; the normalizer vanishes")]
    InvalidModel,
    #[error("quadrature did not converge (relative change {0:e})")]
    NoConvergence(f64),
}

fn invalid(m: impl Into<String>) -> CertificateError {
    CertificateError::Invalid(m.into())
}

/// `d^-1(r; c, l) = c / (r + l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseDistanceParams<T> {
    pub c: T,
    pub ell: T,
}

impl<T: Scalar> InverseDistanceParams<T> {
    pub fn new(c: T, ell: T) -> Result<Self, CertificateError> {
        if !(c > T::zero() && ell > T::zero() && c.is_finite() && ell.is_finite()) {
            return Err(invalid("c and ell must be positive and finite"));
        }
        Ok(Self { c, ell })
    }

    pub fn eval(&self, r: T) -> Result<T, CertificateError> {
        regularized_inverse_distance(r, self)
    }

    /// Value at contact with the unsafe set, `c / l`.
    pub fn contact(&self) -> T {
        self.c / self.ell
    }
}

pub fn regularized_inverse_distance<T: Scalar>(r: T, p: &InverseDistanceParams<T>) -> Result<T, CertificateError> {
    if !(r >= T::zero()) {
        return Err(invalid(format!("distance must be >= 0, got {r}")));
    }
    Ok(p.c / (r + p.ell))
}

/// Prior over the initial distance to the nearest undetected unsafe region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    /// Uniform on `[R, D]`; a point mass when `R = D`.
    #[default]
    Uniform,
    PointMassAtR,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateProblem<T> {
    pub params: InverseDistanceParams<T>,
    pub model: DetectionModel<T>,
    /// Initial safe radius `R`, meters.
    pub safe_radius: T,
    pub delta: T,
    pub gamma: T,
    pub prior: Prior,
    /// m/s
    pub speed: T,
    /// Seconds per measurement.
    pub latency: T,
}

impl<T: Scalar> CertificateProblem<T> {
    /// Sensing radius 4 m, safe radius 4 m, 0.35 m/s, 3 s per measurement,
    /// `m(r) = 0.75 - 1e-3 r / D`, `delta = 0.1`, `gamma = 0`, `c = 1`, `l = 0.1`.
    pub fn reference() -> Self {
        Self {
            params: InverseDistanceParams {
                c: T::one(),
                ell: T::lit(0.1),
            },
            model: DetectionModel::linear(T::lit(0.75), T::lit(1e-3), T::lit(4.0)),
            safe_radius: T::lit(4.0),
            delta: T::lit(0.1),
            gamma: T::zero(),
            prior: Prior::Uniform,
            speed: T::lit(0.35),
            latency: T::lit(3.0),
        }
    }

    pub fn validate(&self) -> Result<(), CertificateError> {
        InverseDistanceParams::new(self.params.c, self.params.ell)?;
        self.model.validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.gamma >= T::zero() && self.gamma < self.delta && self.delta < T::one()) {
            return Err(invalid("need 0 <= gamma < delta < 1"));
        }
        if !(self.safe_radius > T::zero() && self.safe_radius <= self.model.sensing_radius) {
            return Err(invalid("need 0 < R <= D"));
        }
        if !(self.speed > T::zero() && self.latency > T::zero()) {
            return Err(invalid("speed and latency must be positive"));
        }
        Ok(())
    }

    /// Right-hand side `c (delta - gamma) / l`.
    pub fn rhs(&self) -> T {
        self.params.c * (self.delta - self.gamma) / self.params.ell
    }

    fn sensing_radius(&self) -> f64 {
        self.model.sensing_radius.as_f64()
    }

    fn m(&self, r: f64) -> f64 {
        self.model.probability(T::lit(r)).as_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateResult<T> {
    /// Measurements per sensing-radius traversal.
    pub kappa: usize,
    pub feasible: bool,
    pub lhs: T,
    pub rhs: T,
    pub residual: T,
    /// `D / (kappa * latency)` when feasible, else zero.
    pub max_safe_speed: T,
}

impl<T: Scalar> CertificateResult<T> {
    fn new(kappa: usize, lhs: T, rhs: T, prob: &CertificateProblem<T>) -> Self {
        let residual = rhs - lhs;
        let feasible = residual >= T::zero();
        let max_safe_speed = if !feasible {
            T::zero()
        } else if kappa == 0 {
            T::infinity()
        } else {
            prob.model.sensing_radius / (T::lit(kappa as f64) * prob.latency)
        };
        Self {
            kappa,
            feasible,
            lhs,
            rhs,
            residual,
            max_safe_speed,
        }
    }
}

const SIMPSON_NODES: usize = 10_000;
const SIMPSON_RTOL: f64 = 1e-6;

/// Upper bound on `E[d^-1]` after `k` independent measurements:
/// `int c (1 - m)^k / (r + l) p0(r) dr / Z`, `Z = int (1 - m)^k p0(r) dr`.
pub fn expected_inverse_distance<T: Scalar>(k: usize, prob: &CertificateProblem<T>) -> Result<T, CertificateError> {
    let c = prob.params.c.as_f64();
    let ell = prob.params.ell.as_f64();
    let r0 = prob.safe_radius.as_f64();
    let d = prob.sensing_radius();
    let point_mass = prob.prior == Prior::PointMassAtR || r0 >= d;
    if point_mass {
        if k > 0 && prob.m(r0) >= 1.0 {
            return Err(CertificateError::InvalidModel);
        }
        return Ok(T::lit(c / (r0 + ell)));
    }
    let kf = k as f64;
    // log weights, shifted by their maximum so the normalizer cannot underflow
    let logw = |r: f64| {
        if k == 0 {
            0.0
        } else {
            // left limit at D: the detector jumps to zero exactly at the radius
            let q = 1.0 - prob.m(r.min(d * (1.0 - 1e-12)));
            if q <= 0.0 {
                f64::NEG_INFINITY
            } else {
                kf * q.ln()
            }
        }
    };
    let mut shift = f64::NEG_INFINITY;
    for i in 0..=SIMPSON_NODES * 2 {
        let r = r0 + (d - r0) * i as f64 / (SIMPSON_NODES * 2) as f64;
        shift = shift.max(logw(r));
    }
    if shift == f64::NEG_INFINITY {
        return Err(CertificateError::InvalidModel);
    }
    let ratio = |n: usize| -> f64 {
        let num = simpson(|r| (logw(r) - shift).exp() * c / (r + ell), r0, d, n);
        let den = simpson(|r| (logw(r) - shift).exp(), r0, d, n);
        num / den
    };
    let mut n = SIMPSON_NODES;
    let mut prev = ratio(n);
    loop {
        let next = ratio(n * 2);
        let rel = ((next - prev) / next).abs();
        if rel < SIMPSON_RTOL {
            return Ok(T::lit(next));
        }
        if n >= SIMPSON_NODES << 8 {
            return Err(CertificateError::NoConvergence(rel));
        }
        n *= 2;
        prev = next;
    }
}

/// Evaluates the expectation-bound condition at `k` measurements.
pub fn check_theorem_condition<T: Scalar>(
    k: usize,
    prob: &CertificateProblem<T>,
) -> Result<CertificateResult<T>, CertificateError> {
    let lhs = expected_inverse_distance(k, prob)?;
    Ok(CertificateResult::new(k, lhs, prob.rhs(), prob))
}

/// Smallest `k` in `[0, k_max]` satisfying the expectation-bound condition.
pub fn solve_nopm<T: Scalar>(prob: &CertificateProblem<T>, k_max: usize) -> Result<CertificateResult<T>, CertificateError> {
    let mut last = None;
    for k in 0..=k_max {
        let r = check_theorem_condition(k, prob)?;
        if r.feasible {
            return Ok(r);
        }
        last = Some(r);
    }
    Ok(last.expect("k_max >= 0 evaluates at least once"))
}

/// Beeline evaluation at `k` measurements per traversal: measurement `j`
/// happens at `r_j = D (k - j) / k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtsTerms {
    /// Sum over first detections at `r_1 .. r_{k-1}`.
    pub detection_sum: f64,
    /// Probability of missing every measurement.
    pub remainder: f64,
    pub lhs: f64,
}

pub fn mts_terms<T: Scalar>(k: usize, prob: &CertificateProblem<T>) -> MtsTerms {
    let c = prob.params.c.as_f64();
    let ell = prob.params.ell.as_f64();
    if k == 0 {
        return MtsTerms {
            detection_sum: 0.0,
            remainder: 1.0,
            lhs: c / ell,
        };
    }
    let d = prob.sensing_radius();
    let r = |j: usize| d * (k - j) as f64 / k as f64;
    // log of prod_{j < i} (1 - m(r_j))
    let mut log_miss = 0.0f64;
    let mut sum = 0.0;
    for i in 0..k {
        let mi = prob.m(r(i));
        if i >= 1 {
            sum += c / (ell + r(i)) * log_miss.exp() * mi;
        }
        log_miss += (1.0 - mi).ln();
    }
    let remainder = log_miss.exp();
    MtsTerms {
        detection_sum: sum,
        remainder,
        lhs: sum + remainder * c / ell,
    }
}

/// Probability of missing every one of `k` beeline measurements.
pub fn miss_probability<T: Scalar>(k: usize, model: &DetectionModel<T>) -> f64 {
    let d = model.sensing_radius.as_f64();
    (0..k)
        .map(|j| (1.0 - model.probability(T::lit(d * (k - j) as f64 / k as f64)).as_f64()).ln())
        .sum::<f64>()
        .exp()
}

pub fn check_mts<T: Scalar>(k: usize, prob: &CertificateProblem<T>) -> CertificateResult<T> {
    CertificateResult::new(k, T::lit(mts_terms(k, prob).lhs), prob.rhs(), prob)
}

/// Smallest `k` in `[1, k_max]` meeting the beeline condition; linear scan
/// since monotonicity in `k` is not guaranteed for this form.
pub fn solve_mts<T: Scalar>(prob: &CertificateProblem<T>, k_max: usize) -> CertificateResult<T> {
    let k_max = k_max.max(1);
    let mut last = check_mts(1, prob);
    for k in 1..=k_max {
        last = check_mts(k, prob);
        if last.feasible {
            return last;
        }
    }
    last
}

/// Measurements per sensing-radius traversal, `floor(D / (speed latency))`,
/// capped at `k_max`.
pub fn nondimensionalize(speed: f64, latency: f64, sensing_radius: f64, k_max: usize) -> usize {
    let ratio = sensing_radius / (speed * latency);
    if !ratio.is_finite() || ratio >= k_max as f64 {
        return k_max;
    }
    // tolerate representation error at exact integers
    (ratio + 1e-9).floor().max(0.0) as usize
}

/// One grid point of the certificate search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchPoint {
    pub c: f64,
    pub ell: f64,
    /// Smallest feasible `k <= kappa_budget`, if any.
    pub kappa: Option<usize>,
    /// `rhs - lhs` at `kappa` (or at the budget when infeasible).
    pub residual: f64,
    /// Residual in units of `delta`: `(l / c) (rhs - lhs)`.
    pub normalized_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Certified {
        best: SearchPoint,
        feasible: Vec<SearchPoint>,
    },
    /// Saturated detector: every measurement inside the radius detects, so
    /// the certificate reduces to `delta = gamma + remainder`.
    Trivial { delta: f64, remainder: f64 },
    Infeasible { best: SearchPoint },
}

impl SearchOutcome {
    pub fn is_certified(&self) -> bool {
        !matches!(self, SearchOutcome::Infeasible { .. })
    }

    /// Whether `(c, l)` is among the feasible grid points.
    pub fn feasible_at(&self, c: f64, ell: f64) -> bool {
        match self {
            SearchOutcome::Certified { feasible, .. } => feasible
                .iter()
                .any(|p| (p.c - c).abs() <= 1e-9 * c && (p.ell - ell).abs() <= 1e-9 * ell),
            SearchOutcome::Trivial { .. } => true,
            SearchOutcome::Infeasible { .. } => false,
        }
    }
}

/// Logarithmic grid with `per_decade` points per decade, endpoints included.
pub fn log_grid(lo_exp: i32, hi_exp: i32, per_decade: u32) -> Vec<f64> {
    let n = (hi_exp - lo_exp) as u32 * per_decade;
    (0..=n)
        .map(|i| {
            let num = lo_exp * per_decade as i32 + i as i32;
            if num % per_decade as i32 == 0 {
                10f64.powi(num / per_decade as i32)
            } else {
                10f64.powf(num as f64 / per_decade as f64)
            }
        })
        .collect()
}

/// Grid search over `(c, l)` in `[1e-2, 1e2] x [1e-3, 1e1]` for a beeline
/// certificate at some `k <= kappa_budget`, preferring the largest residual
/// in `delta` units.
pub fn search_certificate<T: Scalar>(
    target_delta: T,
    gamma: T,
    kappa_budget: usize,
    model: &DetectionModel<T>,
    prior: Prior,
    safe_radius: T,
) -> SearchOutcome {
    let kappa_budget = kappa_budget.max(1);
    if model.saturated() {
        let remainder = miss_probability(kappa_budget, model);
        return SearchOutcome::Trivial {
            delta: gamma.as_f64() + remainder,
            remainder,
        };
    }
    let mut feasible = Vec::new();
    let mut best_any: Option<SearchPoint> = None;
    for &c in &log_grid(-2, 2, 10) {
        for &ell in &log_grid(-3, 1, 10) {
            let prob = CertificateProblem {
                params: InverseDistanceParams { c: T::lit(c), ell: T::lit(ell) },
                model: *model,
                safe_radius,
                delta: target_delta,
                gamma,
                prior,
                speed: T::one(),
                latency: T::one(),
            };
            let mut point = None;
            let mut last = 0.0;
            for k in 1..=kappa_budget {
                let r = check_mts(k, &prob);
                last = r.residual.as_f64();
                if r.feasible {
                    point = Some((k, last));
                    break;
                }
            }
            let (kappa, residual) = match point {
                Some((k, res)) => (Some(k), res),
                None => (None, last),
            };
            let p = SearchPoint {
                c,
                ell,
                kappa,
                residual,
                normalized_residual: ell / c * residual,
            };
            if kappa.is_some() {
                feasible.push(p);
            }
            if best_any.map_or(true, |b| p.normalized_residual > b.normalized_residual) {
                best_any = Some(p);
            }
        }
    }
    let best_any = best_any.expect("grid is nonempty");
    if feasible.is_empty() {
        return SearchOutcome::Infeasible { best: best_any };
    }
    let best = *feasible
        .iter()
        .max_by(|a, b| a.normalized_residual.total_cmp(&b.normalized_residual))
        .expect("nonempty");
    SearchOutcome::Certified { best, feasible }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> CertificateProblem<f64> {
        CertificateProblem::reference()
    }

    #[test]
    fn inverse_distance_examples() {
        let p = InverseDistanceParams::new(1.0, 0.1).unwrap();
        assert_relative_eq!(p.eval(0.0).unwrap(), 10.0);
        assert_relative_eq!(p.eval(4.0).unwrap(), 1.0 / 4.1);
        assert!(p.eval(1e300).unwrap() < 1e-299);
        assert!(p.eval(-1.0).is_err());
        assert!(InverseDistanceParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn point_mass_before_measurement() {
        let mut p = reference();
        p.prior = Prior::PointMassAtR;
        p.safe_radius = 2.0;
        assert_eq!(expected_inverse_distance(0, &p).unwrap(), 1.0 / 2.1);
        assert_eq!(expected_inverse_distance(7, &p).unwrap(), 1.0 / 2.1);
    }

    #[test]
    fn blind_detector_is_k_invariant() {
        let mut p = reference();
        p.model = DetectionModel::linear(0.0, 0.0, 4.0);
        p.safe_radius = 1.0;
        let e0 = expected_inverse_distance(0, &p).unwrap();
        let e5 = expected_inverse_distance(5, &p).unwrap();
        assert_relative_eq!(e0, e5, max_relative = 1e-12);
        // Uniform prior on [1, 4]: (1/3) ln(4.1 / 1.1)
        assert_relative_eq!(e0, (4.1f64 / 1.1).ln() / 3.0, max_relative = 1e-9);
    }

    #[test]
    fn saturated_everywhere_is_invalid() {
        let mut p = reference();
        p.model = DetectionModel::linear(1.0, 0.0, 4.0);
        p.prior = Prior::PointMassAtR;
        p.safe_radius = 2.0;
        assert_eq!(expected_inverse_distance(1, &p), Err(CertificateError::InvalidModel));
    }

    #[test]
    fn nonincreasing_in_k() {
        let mut p = reference();
        p.model = DetectionModel::linear(0.75, 0.05, 4.0);
        p.safe_radius = 1.0;
        let vals: Vec<f64> = (0..=10).map(|k| expected_inverse_distance(k, &p).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{vals:?}");
        }
    }

    #[test]
    fn theorem_condition_examples() {
        let mut p = reference();
        p.prior = Prior::PointMassAtR;
        p.safe_radius = 1.0;
        // lhs = 1 / 1.1, rhs = 0.05 / 0.1
        p.delta = 0.05;
        let r = check_theorem_condition(0, &p).unwrap();
        assert!(r.lhs > r.rhs && !r.feasible);
        p.delta = 0.99;
        p.params.ell = 0.01;
        assert!(check_theorem_condition(0, &p).unwrap().feasible);
    }

    #[test]
    fn nopm_examples() {
        let mut p = reference();
        p.delta = 0.9;
        assert_eq!(solve_nopm(&p, 10).unwrap().kappa, 0);
        p.delta = 0.001;
        p.params.ell = 1.0;
        p.safe_radius = 0.5;
        let r = solve_nopm(&p, 5).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.kappa, 5);
    }

    #[test]
    fn mts_k1_is_contact_value() {
        let p = reference();
        let t = mts_terms(1, &p);
        assert_eq!(t.detection_sum, 0.0);
        assert_eq!(t.remainder, 1.0);
        assert_relative_eq!(t.lhs, 10.0);
        assert!(!check_mts(1, &p).feasible);
    }

    #[test]
    fn mts_remainder_is_miss_product() {
        let p = reference();
        let m = |r: f64| 0.75 - 1e-3 * r / 4.0;
        let expect = 1.0 * (1.0 - m(8.0 / 3.0)) * (1.0 - m(4.0 / 3.0));
        let t = mts_terms(3, &p);
        assert_relative_eq!(t.remainder, expect, max_relative = 1e-12);
        assert_relative_eq!(miss_probability(3, &p.model), expect, max_relative = 1e-12);
        // Hand-evaluated sum at k = 3.
        let s = 1.0 / (0.1 + 8.0 / 3.0) * m(8.0 / 3.0) + 1.0 / (0.1 + 4.0 / 3.0) * (1.0 - m(8.0 / 3.0)) * m(4.0 / 3.0);
        assert_relative_eq!(t.detection_sum, s, max_relative = 1e-12);
    }

    #[test]
    fn nondimensionalize_examples() {
        assert_eq!(nondimensionalize(0.35, 3.0, 4.0, K_MAX), 3);
        assert_eq!(nondimensionalize(0.35, 4.1, 4.0, K_MAX), 2);
        assert_eq!(nondimensionalize(0.0, 3.0, 4.0, K_MAX), K_MAX);
        assert_eq!(nondimensionalize(1.0, 1.0, 3.0, K_MAX), 3);
    }

    #[test]
    fn log_grid_hits_decades_exactly() {
        let g = log_grid(-3, 1, 10);
        assert_eq!(g.len(), 41);
        assert!(g.contains(&0.1));
        assert!(g.contains(&1.0));
        assert_eq!(g[0], 1e-3);
        assert_eq!(*g.last().unwrap(), 10.0);
    }

    #[test]
    fn trivial_certificate() {
        let perfect = DetectionModel::linear(1.0, 0.0, 4.0);
        match search_certificate(0.25, 0.25, 3, &perfect, Prior::Uniform, 4.0) {
            SearchOutcome::Trivial { delta, remainder } => {
                assert_eq!(remainder, 0.0);
                assert_eq!(delta, 0.25);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn below_remainder_is_infeasible() {
        let m = DetectionModel::linear(0.75, 1e-3, 4.0);
        let rem = miss_probability(3, &m);
        let out = search_certificate(rem * 0.9, 0.0, 3, &m, Prior::Uniform, 4.0);
        assert!(matches!(out, SearchOutcome::Infeasible { .. }));
    }

    #[test]
    fn feasibility_is_scale_invariant() {
        for ell in [0.05, 0.1, 0.3] {
            let base = {
                let mut p = reference();
                p.params.ell = ell;
                p
            };
            let f: Vec<bool> = [0.1, 1.0, 10.0]
                .iter()
                .map(|&c| {
                    let mut p = base;
                    p.params.c = c;
                    check_mts(3, &p).feasible
                })
                .collect();
            assert!(f.iter().all(|x| *x == f[0]));
        }
    }
}
