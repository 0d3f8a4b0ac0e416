use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible allocation: {0}")]
    InfeasibleAllocation(String),

    #[error("singular market: supply slope plus demand slope is zero")]
    SingularMarket,

    #[error("singular price iteration at step {step}: supply plus demand slope is zero")]
    SingularIteration { step: usize },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("config error: {0}")]
    Config(String),
}

impl MarketError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        MarketError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = MarketError> = std::result::Result<T, E>;
