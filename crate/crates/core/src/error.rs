use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("step {upto} exceeds the total number of iterations {n_total}")]
    OutOfBounds { upto: usize, n_total: usize },

    #[error("closed-form generating function is singular at kappa = 0; use the Bernoulli form")]
    BernoulliLimit,

    #[error("closed-form generating function term 1/(2 eps) + {k} vanishes")]
    SingularTerm { k: usize },

    #[error("row {row}: price {price} is not on the tick grid {tick}")]
    OffGrid { row: usize, price: String, tick: String },

    #[error("insufficient data: need at least {required} ticks, got {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures caused by the input data rather than by arguments.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::OffGrid { .. } | Error::InsufficientData { .. } | Error::Data(_)
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::SingularTerm { .. } | Error::BernoulliLimit
        )
    }
}
