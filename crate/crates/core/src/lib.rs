//! Smocked fabric geometry from stitching-line patterns.
//!
//! A [`pattern::SmockingPattern`] is a flat fabric graph plus stitching lines.
//! [`graph::extract`] fuses each line into a node of the smocked graph,
//! [`embed`] places that graph in 3D and [`arap`] carries the result over to a
//! finer triangle mesh. [`design::full_pipeline`] chains the stages.

pub mod analysis;
pub mod arap;
pub mod design;
pub mod embed;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod gridfree;
pub mod io;
pub mod pattern;
pub mod solver;
pub mod triangulate;

pub use error::{Error, Result, Stage};
