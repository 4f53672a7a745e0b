//! Multiresolution beta-number analysis of polygonal Jordan arcs.
//!
//! The central quantity is the two-sided comparison between the
//! multiscale flatness sum `sum beta(Q)^2 diam(Q)` over a ball family
//! built on nested nets of the curve, and the chord-arc deficit
//! `l(Gamma) - crd(Gamma)`. The crate computes every intermediate object
//! of that comparison — nets, balls, clipped arcs, cores, deficit
//! measures, ball-family classification, Voronoi generation sums — and
//! ships an invariant suite that checks the relations between them at
//! desk scale.

pub mod beta;
pub mod classify;
pub mod cores;
pub mod curve;
pub mod geom;
pub mod invariants;
pub mod kahan;
pub mod measure;
pub mod net;
pub mod pipeline;
pub mod report;
pub mod shapes;
pub mod voronoi;

pub use curve::{Curve, CurveError, Subarc};
pub use geom::Point;
pub use net::{Ball, NetHierarchy};
