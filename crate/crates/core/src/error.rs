use thiserror::Error;

/// Errors raised by the estimation and testing routines.
///
/// `Input` covers anything the caller can fix (bad shapes, out-of-range levels,
/// unsupported basis/constraint combinations); `Numerical` covers iterative
/// routines that failed to converge or factorizations that broke down.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NpivError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("at J = {j}: {source}")]
    AtDimension {
        j: usize,
        #[source]
        source: Box<NpivError>,
    },
}

impl NpivError {
    pub fn input(msg: impl Into<String>) -> Self {
        NpivError::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        NpivError::Numerical(msg.into())
    }

    /// Attach the sieve dimension at which a failure happened.
    pub fn at_dimension(self, j: usize) -> Self {
        match self {
            e @ NpivError::AtDimension { .. } => e,
            other => NpivError::AtDimension {
                j,
                source: Box::new(other),
            },
        }
    }

    /// True when the root cause is a caller error rather than a numerical breakdown.
    pub fn is_input(&self) -> bool {
        match self {
            NpivError::Input(_) => true,
            NpivError::Numerical(_) => false,
            NpivError::AtDimension { source, .. } => source.is_input(),
        }
    }
}

pub type Result<T, E = NpivError> = std::result::Result<T, E>;
