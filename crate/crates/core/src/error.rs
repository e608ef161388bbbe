use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// One or more parameter invariants failed; each entry names one violation.
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParameters(Vec<String>),

    #[error("singular closed-loop system at omega = {omega:.6e} rad/s")]
    Singular { omega: f64 },

    #[error("open-loop unstable: gamma_eff = {gamma_eff:.6e} rad/s; occupation undefined")]
    Unstable { gamma_eff: f64 },

    #[error("grid under-resolves the mechanical peak: spacing {actual:.3e} rad/s, need <= {required:.3e} rad/s")]
    UnderResolved { required: f64, actual: f64 },

    #[error("grid span too small: covers [{lo:.4e}, {hi:.4e}] rad/s, need [{need_lo:.4e}, {need_hi:.4e}]")]
    GridSpan { lo: f64, hi: f64, need_lo: f64, need_hi: f64 },

    #[error("pole search did not converge: {0}")]
    PoleSearch(String),

    #[error("no stability change within gain bracket [{lo:.4e}, {hi:.4e}] rad/s")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("feedback force vanishes (interference factor D = {d:e})")]
    FeedbackVanishes { d: f64 },

    #[error("simulation diverged at t = {t:.4e} s (|x| = {x:.3e})")]
    Diverged { t: f64, x: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
