//! Pair correlation of dilated real sequences modulo one, tolerance additive
//! energy, and the numerical machinery used to verify them at desk scale.

pub mod numeric;
pub mod sequences;
pub mod circle;
pub mod kernels;
pub mod rng;
pub mod selberg;
pub mod energy;
pub mod dyadic;
pub mod variance;
pub mod verify;
pub mod runner;
