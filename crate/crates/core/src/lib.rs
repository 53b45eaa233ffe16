//! Fastener detection pipeline: anchors, proposals, hard-example mining,
//! a small deterministic forward model and evaluation.

pub mod anchors;
pub mod assign;
pub mod classes;
pub mod config;
pub mod data;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod ohem;
pub mod oracle;
pub mod pipeline;
pub mod proposal;
