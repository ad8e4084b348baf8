//! Simulation and verification toolkit for the deterministic automaton
//! `x(i) + x(i+1)` over a finite abelian group, its noisy version, the
//! real-time couplings that make its backward filtration cosy, the envelope
//! automaton with its oriented-percolation dual, and the
//! coupling-from-the-past sampler built on top of them.

pub mod analysis;
pub mod bits;
pub mod ca;
pub mod cftp;
pub mod cli;
pub mod cosiness;
pub mod dyncosy;
pub mod envelope;
pub mod error;
pub mod group;
pub mod noise;
pub mod pca;
pub mod percolation;

pub use error::{Error, Result};
pub use group::{GroupSpec, Symbol};
pub use noise::{Field, NoiseField};
