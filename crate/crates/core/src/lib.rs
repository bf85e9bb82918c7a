//! Period-two, index-four Weil–Châtelet classes for elliptic curves over Q with
//! full rational 2-torsion, and quadratic fields over which Ш[2] grows.

pub mod arith;
pub mod localfield;
pub mod brauer;
pub mod theta;
pub mod curve;
pub mod config;
pub mod obstruction;
pub mod construct;
pub mod fixture;
pub mod certificate;
