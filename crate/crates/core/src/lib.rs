//! Rubric-informed action quality assessment.
//!
//! The pipeline segments a sequence of per-window embeddings into the
//! elements planned on a score sheet, predicts a grade of execution for each
//! element relative to its known base value, predicts the five program
//! components from the whole sequence, and composes the final score by plain
//! addition so that every number in the output can be traced.

pub mod data;
pub mod heads;
pub mod kernel;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod rubric;
pub mod segmentation;
