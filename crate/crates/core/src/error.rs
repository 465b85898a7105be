use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("block spaces differ: operand has N={left}, state has N={right}")]
    SpaceMismatch { left: usize, right: usize },

    #[error("integration failed at t={time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("polarization fraction {target} not crossed before t={horizon} (last f={last})")]
    NoCrossing {
        target: f64,
        horizon: f64,
        last: f64,
    },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("steady state is ambiguous: second eigenvalue magnitude {second:e} below gap {gap:e}")]
    AmbiguousSteadyState { second: f64, gap: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("squeezing parameter undefined: denominator {denominator:e} is below {threshold:e}")]
    UndefinedSqueezing { denominator: f64, threshold: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
