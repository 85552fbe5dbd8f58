//! Data side of the knowledge-tracing pipeline.
//!
//! The flow through this crate mirrors how the artifacts depend on each
//! other:
//!
//! ```text
//! csv -> ingest (filter/split/window) -> irt (theta, b)
//!                                     -> graphs (student-question graph)
//!        agents (relation extraction) -> graphs (concept graph)
//!        retrieval (per-instance subgraphs from both graphs)
//!        metrics (AUC / ACC), synth (planted-truth generators)
//! ```
//!
//! Everything is deterministic: iteration orders are sorted, randomness is
//! ChaCha-seeded, and all artifacts serialize to line-delimited JSON.

pub mod agents;
pub mod graphs;
pub mod ingest;
pub mod irt;
pub mod metrics;
pub mod model;
pub mod records;
pub mod retrieval;
pub mod synth;
