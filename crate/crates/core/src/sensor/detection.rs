use crate::scalar::Scalar;

/// Distance-dependent Bernoulli detection probability
/// `m(r) = max(0, p0 - epsilon * r / D)` for `r < D`, zero beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionModel<T> {
    pub p0: T,
    pub epsilon: T,
    /// Maximal sensing radius `D`, meters.
    pub sensing_radius: T,
    pub min_range: T,
    pub max_range: T,
}

impl<T: Scalar> Default for DetectionModel<T> {
    fn default() -> Self {
        Self {
            p0: T::lit(0.75),
            epsilon: T::lit(1e-3),
            sensing_radius: T::lit(4.0),
            min_range: T::lit(3.0),
            max_range: T::lit(7.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectionError {
    #[error("invalid detection model: {0}")]
    Invalid(&'static str),
}

/// Which of the bounded-radius, non-degeneracy and strict-decrease
/// assumptions a parameterization satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionReport {
    pub bounded_radius: bool,
    pub nondegenerate: bool,
    pub strictly_decreasing: bool,
}

impl AssumptionReport {
    pub fn all(&self) -> bool {
        self.bounded_radius && self.nondegenerate && self.strictly_decreasing
    }
}

impl<T: Scalar> DetectionModel<T> {
    pub fn linear(p0: T, epsilon: T, sensing_radius: T) -> Self {
        Self {
            p0,
            epsilon,
            sensing_radius,
            ..Self::default()
        }
    }

    /// Structural validity. Saturated (`p0 = 1`) and blind (`p0 = 0`)
    /// detectors are valid here; see [`Self::assumptions`].
    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(self.p0 >= T::zero() && self.p0 <= T::one()) {
            return Err(DetectionError::Invalid("p0 must lie in [0, 1]"));
        }
        if !(self.epsilon >= T::zero() && self.epsilon.is_finite()) {
            return Err(DetectionError::Invalid("epsilon must be finite and >= 0"));
        }
        if !(self.sensing_radius > T::zero() && self.sensing_radius.is_finite()) {
            return Err(DetectionError::Invalid("sensing radius must be positive"));
        }
        if !(self.min_range >= T::zero() && self.min_range <= self.max_range) {
            return Err(DetectionError::Invalid("need 0 <= min_range <= max_range"));
        }
        Ok(())
    }

    pub fn probability(&self, r: T) -> T {
        if r >= self.sensing_radius {
            return T::zero();
        }
        let r = r.max(T::zero());
        (self.p0 - self.epsilon * r / self.sensing_radius).max(T::zero())
    }

    pub fn assumptions(&self) -> AssumptionReport {
        AssumptionReport {
            // Holds by construction of `probability`.
            bounded_radius: true,
            nondegenerate: self.p0 - self.epsilon > T::zero() && self.p0 < T::one(),
            strictly_decreasing: self.epsilon > T::zero(),
        }
    }

    /// True when detection is certain at contact.
    pub fn saturated(&self) -> bool {
        self.p0 >= T::one()
    }
}
