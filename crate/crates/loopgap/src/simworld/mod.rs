//! Self-contained driving microworld: routes, scripted hazards, an expert
//! planner, corruptible policies, closed-loop simulation, and study
//! generation. Everything is deterministic given a seed.

pub mod bundle;
pub mod dataset;
pub mod geometry;
pub mod planner;
pub mod policy;
pub mod rollout;
pub mod study;
pub mod track;
