use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

use overdraft_core::bench::BenchError;
use overdraft_core::confidence::ConfidenceError;
use overdraft_core::incentives::InterestError;
use overdraft_core::netfile::ParseError;
use overdraft_core::settlement::LedgerError;
use overdraft_core::sybil::SybilError;
use overdraft_core::wire::ErrorBody;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    NotFound(String),
    /// Well-formed request refused by the current ledger state.
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::Validation(_) => "validation",
            ApiError::NotFound(_) => "not_found",
            ApiError::Conflict(_) => "conflict",
            ApiError::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code().to_string(), message: self.to_string() };
        (self.status(), Json(body)).into_response()
    }
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        let msg = e.to_string();
        match e {
            LedgerError::UnknownAccount(_) | LedgerError::UnknownAgreement(_) => ApiError::NotFound(msg),
            LedgerError::InsufficientFunds { .. }
            | LedgerError::NotYetOpenable { .. }
            | LedgerError::EarlyClosure { .. }
            | LedgerError::Replay(_)
            | LedgerError::GenesisClosed
            | LedgerError::DuplicateAccount(_)
            | LedgerError::LoanedTokensExhausted { .. } => ApiError::Conflict(msg),
            _ => ApiError::Validation(msg),
        }
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {$(
        impl From<$t> for ApiError {
            fn from(e: $t) -> Self {
                ApiError::Validation(e.to_string())
            }
        }
    )*};
}

validation_from!(ParseError, InterestError, BenchError);

impl From<ConfidenceError> for ApiError {
    fn from(e: ConfidenceError) -> Self {
        match e {
            ConfidenceError::UnknownNode(_) => ApiError::NotFound(e.to_string()),
            _ => ApiError::Validation(e.to_string()),
        }
    }
}

impl From<SybilError> for ApiError {
    fn from(e: SybilError) -> Self {
        match e {
            SybilError::Ledger(inner) => inner.into(),
            SybilError::Confidence(inner) => inner.into(),
            other => ApiError::Validation(other.to_string()),
        }
    }
}
