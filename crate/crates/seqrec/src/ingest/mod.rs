//! Transaction-log ingestion: loading, temporal and population splits,
//! item vocabulary, per-user token sequences, and binary targets.
//!
//! All operations here are pure given their inputs and deterministic given
//! the seed; downstream training never sees a performance-window row.

mod sequence;
mod split;
mod target;
mod transaction;
mod vocab;

pub use sequence::{build_sequences, UserSequence};
pub use split::{
    distinct_users, drop_popular_items, item_user_counts, split_by_analysis_date, split_users,
    DateSplit, PopularityFilter,
};
pub use target::{build_targets, RecommendableItems, TargetVector};
pub use transaction::{
    load_transactions, write_rejects_report, LoadReport, LogFormat, RejectedRow, Transaction,
};
pub use vocab::{ItemVocabulary, PAD_TOKEN, RESERVED_TOKENS, UNK_TOKEN};
