use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout error: {0}")]
    Layout(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Eigensolver failure. `gamma` is set when the failure happened inside a sweep.
    #[error("eigensolver failed on a {dim}x{dim} matrix{}: {detail}", gamma.map(|g| format!(" at gamma = {g}")).unwrap_or_default())]
    Spectral {
        dim: usize,
        gamma: Option<f64>,
        detail: String,
    },

    #[error("bracket [{lo}, {hi}] does not straddle the PT transition: {reason}")]
    Bracket { lo: f64, hi: f64, reason: String },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("outside the perturbative regime: {0}")]
    Regime(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("finite-difference step too large: {0}")]
    Step(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn layout(msg: impl Into<String>) -> Self {
        Error::Layout(msg.into())
    }
}
