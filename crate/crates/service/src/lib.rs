//! HTTP/JSON service for group configuration sessions, with a file-backed
//! document store and an offline evaluation harness.

pub mod api;
pub mod eval;
pub mod store;

pub use api::{router, serve, ApiError};
pub use eval::{eval_loo, EvalResult};
pub use store::{canonical_json, DocKind, Store, StoreError, StoredDocument};
