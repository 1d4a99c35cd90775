//! Waypoint-selection navigation stack: procedural 2.5D worlds, panoramic
//! rendering, labelled waypoint overlays, an episode harness, baseline
//! policies, a toy policy-optimization playground, corpus generation and
//! evaluation.

pub mod dataset;
pub mod episode;
pub mod eval;
pub mod learn;
pub mod policies;
pub mod sensors;
pub mod waypoints;
pub mod world;
