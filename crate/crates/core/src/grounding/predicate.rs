use std::fmt;
use std::str::FromStr;

/// Spatial operator applied to a semantic class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    On,
    Near,
    Around,
    Between,
}

impl Operator {
    pub fn name(self) -> &'static str {
        match self {
            Operator::On => "ON",
            Operator::Near => "NEAR",
            Operator::Around => "AROUND",
            Operator::Between => "BETWEEN",
        }
    }
}

/// A contextual safety constraint: operator plus a single semantic class,
/// written `OP(class)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    pub operator: Operator,
    pub class_label: String,
}

impl Predicate {
    pub fn new(operator: Operator, class_label: impl Into<String>) -> Self {
        Self {
            operator,
            class_label: class_label.into(),
        }
    }

    pub fn on(c: &str) -> Self {
        Self::new(Operator::On, c)
    }
    pub fn near(c: &str) -> Self {
        Self::new(Operator::Near, c)
    }
    pub fn around(c: &str) -> Self {
        Self::new(Operator::Around, c)
    }
    pub fn between(c: &str) -> Self {
        Self::new(Operator::Between, c)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.operator.name(), self.class_label)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredicateParseError {
    #[error("predicate `{0}` is not of the form OP(class)")]
    Malformed(String),
    #[error("unknown spatial operator `{0}`")]
    UnknownOperator(String),
    #[error("predicate `{0}` must take exactly one class")]
    ClassCount(String),
}

impl FromStr for Predicate {
    type Err = PredicateParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| PredicateParseError::Malformed(s.to_string()))?;
        if !s.ends_with(')') {
            return Err(PredicateParseError::Malformed(s.to_string()));
        }
        let op = match s[..open].trim().to_ascii_uppercase().as_str() {
            "ON" => Operator::On,
            "NEAR" => Operator::Near,
            "AROUND" => Operator::Around,
            "BETWEEN" => Operator::Between,
            other => return Err(PredicateParseError::UnknownOperator(other.to_string())),
        };
        let arg = s[open + 1..s.len() - 1].trim();
        if arg.is_empty() || arg.contains(',') || arg.contains(char::is_whitespace) {
            return Err(PredicateParseError::ClassCount(s.to_string()));
        }
        Ok(Predicate::new(op, arg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        let p: Predicate = "AROUND(wet_floor_sign)".parse().unwrap();
        assert_eq!(p, Predicate::around("wet_floor_sign"));
        assert_eq!(p.to_string(), "AROUND(wet_floor_sign)");
        let q: Predicate = " between( cone ) ".parse().unwrap();
        assert_eq!(q, Predicate::between("cone"));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            "BETWEEN(cone, barrel)".parse::<Predicate>(),
            Err(PredicateParseError::ClassCount(_))
        ));
        assert!(matches!(
            "INSIDE(room)".parse::<Predicate>(),
            Err(PredicateParseError::UnknownOperator(_))
        ));
        assert!(matches!("NEAR cone".parse::<Predicate>(), Err(PredicateParseError::Malformed(_))));
        assert!(matches!("NEAR()".parse::<Predicate>(), Err(PredicateParseError::ClassCount(_))));
    }
}
