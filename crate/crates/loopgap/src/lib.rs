//! Evaluation toolkit for imitation-learned driving policies.
//!
//! The crate answers one question end to end: how well do cheap offline
//! (open-loop) error metrics predict expensive online (closed-loop) driving
//! outcomes across a family of policies?
//!
//! Capabilities, one module each:
//!
//! - [`datamodel`]: prediction records (ground truth, K Monte-Carlo action
//!   samples, optional waypoint plans) and their line-oriented file format.
//! - [`offline`]: per-record loss kernels (steer/action/throttle errors,
//!   quantized-steer consistency, thresholded relative error, waypoint and
//!   displacement errors) and weighted dataset aggregation.
//! - [`uncertainty`]: per-record predictive variance from the sample spread,
//!   the uncertainty-weighted error (UWE) combination metric, and the fitting
//!   of its weights against an online target.
//! - [`online`]: episode logs, infraction penalties, route completion, the
//!   driving score, and per-policy online score sets.
//! - [`correlation`]: Pearson/Spearman correlation with seeded bootstrap
//!   confidence intervals over a policy-family metric table.
//! - [`simworld`]: a deterministic kinematic micro-simulator (tracks, hazards,
//!   a pure-pursuit expert, corrupted policy families) that generates datasets
//!   and episode logs with known ground truth.
//! - [`config`] + [`pipeline`]: the study configuration and the subcommand
//!   implementations behind the `loopgap` binary.

pub mod config;
pub mod correlation;
pub mod datamodel;
pub mod numeric;
pub mod offline;
pub mod online;
pub mod pipeline;
pub mod simworld;
pub mod uncertainty;
