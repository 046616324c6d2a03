//! Fortuin–Kasteleyn random-cluster toolkit on subgraphs of Z²: exact
//! enumeration, Markov chain samplers, medial-lattice interfaces, the
//! parafermionic observable and the boundary harmonic-measure solver.

pub mod experiments;
pub mod fit;
pub mod fk;
pub mod harmonic;
pub mod io;
pub mod lattice;
pub mod loops;
pub mod observable;
pub mod sampler;
pub mod suite;
pub mod unionfind;

pub use fk::{Boundary, Config, FkParams};
pub use lattice::{DobrushinDomain, Doubled, Face, MedialGraph, PrimalGraph, Site};
