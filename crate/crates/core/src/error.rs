use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("integration failed for {what}: {detail}")]
    Integration { what: &'static str, detail: String },

    #[error("singular linear system at row {row} (pivot {pivot:e})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error(
        "Picard iteration did not converge after {iterations} iterations \
         (last increment {last_increment:e}, estimated contraction {ratio:.4})"
    )]
    PicardDivergence {
        iterations: usize,
        last_increment: f64,
        ratio: f64,
    },

    #[error("solver failed at step {step}, component {component}: {source}")]
    Step {
        step: usize,
        component: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True for errors raised while validating inputs, before any time stepping.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidConfig(_))
    }
}
