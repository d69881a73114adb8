use thiserror::Error;

/// Errors produced by the simulation and analysis modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A density matrix failed the physicality check (negative eigenvalue
    /// beyond tolerance) where a physical state is required.
    #[error("non-physical state: smallest eigenvalue {min_eigenvalue:.3e}")]
    NonPhysicalState { min_eigenvalue: f64 },

    /// A matrix passed as a local operation is not unitary.
    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    /// A numeric argument is outside its documented domain.
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// A switch setting does not cover every switch in the fabric.
    #[error("incomplete switch setting: missing state for switch {switch}")]
    IncompleteSetting { switch: String },

    /// The routing search found no switch setting serving the request.
    #[error("no switch setting can deliver an entangled pair to users {user_a} and {user_b}")]
    Blocked { user_a: String, user_b: String },

    /// A fabric description violates its structural invariants.
    #[error("invalid fabric: {0}")]
    InvalidFabric(String),

    /// Scenario configuration is malformed.
    #[error("configuration error: {0}")]
    Config(String),

    /// An unknown scenario name was requested.
    #[error("unknown scenario {0:?} (expected one of: table1, table2, cwdm, brightness, capacity, route, phase-lock)")]
    UnknownScenario(String),

    /// File output failed.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
