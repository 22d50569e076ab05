use crate::scalar::Scalar;

/// Periodic perception: captures at `0, P, 2P, ...`, each delivered
/// `latency` seconds after capture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySchedule<T> {
    pub period: T,
    pub latency: T,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("frame period must be positive, got {0} s")]
    Period(f64),
    #[error("latency must be nonnegative, got {0} s")]
    Latency(f64),
}

impl<T: Scalar> LatencySchedule<T> {
    pub fn new(period: T, latency: T) -> Result<Self, ScheduleError> {
        if !(period > T::zero()) {
            return Err(ScheduleError::Period(period.as_f64()));
        }
        if !(latency >= T::zero()) {
            return Err(ScheduleError::Latency(latency.as_f64()));
        }
        Ok(Self { period, latency })
    }

    /// Capture time of frame `i`.
    pub fn capture(&self, i: u64) -> T {
        self.period * T::lit(i as f64)
    }

    pub fn delivery(&self, i: u64) -> T {
        self.capture(i) + self.latency
    }

    /// `(capture, delivery)` pairs for captures with `t <= horizon`.
    pub fn times(&self, horizon: T) -> impl Iterator<Item = (T, T)> + '_ {
        (0u64..)
            .map(|i| (self.capture(i), self.delivery(i)))
            .take_while(move |(c, _)| *c <= horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let s = LatencySchedule::new(3.0, 3.0).unwrap();
        let t: Vec<_> = s.times(10.0).collect();
        assert_eq!(t, vec![(0.0, 3.0), (3.0, 6.0), (6.0, 9.0), (9.0, 12.0)]);
        let z = LatencySchedule::new(3.0, 0.0).unwrap();
        assert!(z.times(10.0).all(|(c, d)| c == d));
        assert!(LatencySchedule::new(0.0, 1.0).is_err());
        assert!(LatencySchedule::new(1.0, -1.0).is_err());
    }
}
