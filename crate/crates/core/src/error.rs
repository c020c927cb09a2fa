use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QndError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid subsystem index {index} (state has {count} subsystems)")]
    InvalidSubsystem { index: usize, count: usize },

    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),

    #[error("non-finite amplitude in state")]
    NonFinite,

    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("zero-probability branch (p = {0:.3e})")]
    ZeroProbabilityBranch(f64),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("{name} out of range [{}, {}]: {value}", trim(*.min), trim(*.max))]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("degenerate observable: zero second moment")]
    DegenerateObservable,

    #[error("empty input ensemble")]
    EmptyEnsemble,

    #[error("expected {expected} photons, found {found}")]
    PhotonNumber { expected: usize, found: usize },

    #[error("undefined weak value: pre- and post-selected states are orthogonal")]
    UndefinedWeakValue,

    #[error("estimator singular: 2γ²−1 = 0 carries no information")]
    EstimatorSingular,

    #[error("empty post-selected ensemble")]
    EmptyPostSelection,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error on `{path}`: {message}")]
    Io { path: String, message: String },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
}

impl QndError {
    pub(crate) fn out_of_range(name: &'static str, value: f64, min: f64, max: f64) -> Self {
        QndError::OutOfRange { name, value, min, max }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        QndError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Name of the offending parameter, when the error carries one.
    pub fn field(&self) -> Option<&str> {
        match self {
            QndError::OutOfRange { name, .. } => Some(name),
            QndError::Config { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// Range bounds printed with at most four decimals, trailing zeros removed.
fn trim(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

pub type Result<T> = std::result::Result<T, QndError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_message_is_compact() {
        let e = QndError::out_of_range("gamma", 0.5, std::f64::consts::FRAC_1_SQRT_2, 1.0);
        assert_eq!(e.to_string(), "gamma out of range [0.7071, 1]: 0.5");
        assert_eq!(e.field(), Some("gamma"));
    }
}
