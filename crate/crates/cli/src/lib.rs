//! Command-line pipeline around `metricmap-core`: scene ingestion, QA
//! generation, scoring, map evaluation and batch model queries.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod client;
pub mod commands;
pub mod io;
