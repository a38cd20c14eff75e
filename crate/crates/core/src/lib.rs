//! Trace-driven roadside perception node.
//!
//! Detections flow through [`tracker`], are checked against geometry derived
//! once by [`roi`], turned into events by [`violations`], enriched with voted
//! plates from [`plate`] and disseminated by [`v2x`]. [`pipeline`] wires the
//! stages together; [`trace`] defines the input format and a synthetic
//! scenario generator.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geom;
pub mod pipeline;
pub mod plate;
pub mod roi;
pub mod trace;
pub mod tracker;
pub mod v2x;
pub mod violations;
