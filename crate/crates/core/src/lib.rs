//! Super-resolution MIMO radar: simulation of band-limited radar returns from
//! continuous angle-delay-Doppler scenes, l1 recovery on arbitrarily fine
//! grids, dual-certificate construction and verification, and an IAA
//! baseline with an experiment harness.

pub mod certificate;
pub mod error;
pub mod fourier;
pub mod grid;
pub mod harness;
pub mod iaa;
pub mod linalg;
pub mod physics;
pub mod radar;
pub mod solvers;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use radar::{ArraySpec, Location, MeasurementVector, ProbingSignalSet, Target, TargetScene};
