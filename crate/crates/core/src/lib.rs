//! Geometric evaluation of set-like text composition in embedding spaces.
//!
//! [`geometry`] holds the measures and plane projection, [`criteria`] the
//! tallies and angle profiles built on them, [`dataset`] the synthesis
//! pipeline and annotation statistics, [`embedstore`] the on-disk embedding
//! format, and [`report`] the rendered outputs.

pub mod criteria;
pub mod dataset;
pub mod embedstore;
pub mod geometry;
pub mod report;
