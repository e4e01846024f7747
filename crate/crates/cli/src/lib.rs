//! Command-line driver, configuration documents, and file formats for the
//! dense SE(3) scene-flow estimator in `se3flow-core`.

pub mod commands;
pub mod config;
pub mod formats;
pub mod padding;
pub mod selfcheck;
pub mod weights;
