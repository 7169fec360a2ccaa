use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid, data family or experiment parameters.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grids differ: (L={left_l}, N={left_n}) vs (L={right_l}, N={right_n})")]
    GridMismatch {
        left_l: f64,
        left_n: usize,
        right_l: f64,
        right_n: usize,
    },

    #[error("multiplier `{name}` is not finite at xi = {xi}")]
    NonFiniteSymbol { name: String, xi: f64 },

    #[error("Littlewood-Paley block {j} outside [-1, {j_max}]")]
    BlockOutOfRange { j: i32, j_max: i32 },

    #[error("invalid Littlewood-Paley partition: {0}")]
    Partition(String),

    #[error(
        "bump tail reaches {tail:.3e} beyond |x| > L/2 (limit {limit:.1e}); increase the half-width L (currently {half_width})"
    )]
    TailGuard {
        tail: f64,
        limit: f64,
        half_width: f64,
    },

    #[error("non-finite solver state at t = {t}")]
    NonFinite { t: f64 },

    #[error("CFL violated at t = {t}: |dt| = {dt:.3e} exceeds {limit:.3e}; rerun with dt <= {limit:.3e}")]
    Cfl { t: f64, dt: f64, limit: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for failures of the numerical scheme itself (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::Cfl { .. } | Error::NonFiniteSymbol { .. }
        )
    }
}
