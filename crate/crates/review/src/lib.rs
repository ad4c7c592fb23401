//! Human review of generated problems: batch sampling, a ratings ledger,
//! study statistics and the HTTP API the review UI talks to.

pub mod api;
pub mod batch;
pub mod stats;
pub mod store;

pub use api::{router, serve};
pub use batch::{create_batch, Criteria, ReviewBatch, ReviewItem, CRITERIA};
pub use stats::{cohen_kappa, fleiss_kappa, review_stats, ReviewStats};
pub use store::{LedgerEntry, Rating, RatingInput, ReviewStore, StoreConfig, Submitted, VariantType};

use probsmith_core::error::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid rating: {0}")]
    Validation(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("not assigned: {0}")]
    Unauthorized(String),
    #[error(transparent)]
    Storage(#[from] CoreError),
}

pub type Result<T, E = ReviewError> = std::result::Result<T, E>;
