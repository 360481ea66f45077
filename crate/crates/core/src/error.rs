use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Domain(String),

    #[error("inversion pole: cannot invert the origin")]
    InversionPole,

    #[error("kernel singularity: point lies in the closure of the target region")]
    KernelSingularity,

    #[error("quadrature did not converge: estimated error {estimate:.3e} exceeds tolerance {tol:.3e}")]
    Quadrature { estimate: f64, tol: f64 },

    #[error("degenerate ensemble: every path was killed before t (survival fraction {survival:.3e})")]
    DegenerateEnsemble { survival: f64 },

    #[error("weight collapse at time {time}")]
    WeightCollapse { time: f64 },

    #[error("increase n or eps: only {accepted} paths accepted (need {required})")]
    TooFewAccepted { accepted: usize, required: usize },

    #[error("effective sample size {ess:.1} below minimum {min}")]
    SmallSample { ess: f64, min: usize },

    #[error("path error: {0}")]
    Path(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
