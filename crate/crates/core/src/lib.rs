//! Lasserre-hierarchy relaxations for 2-CSPs and their global-correlation
//! rounding.
//!
//! The crate covers instance modelling ([`csp`]), spectra of constraint
//! graphs ([`spectral`]), local distribution families ([`pseudodist`]),
//! vector constructions ([`embeddings`]), a first-order moment-matrix
//! solver ([`sdp`]), rounding by conditioning ([`rounding`]) and
//! brute-force ground truth ([`oracle`]).

pub mod artifact;
pub mod csp;
pub mod embeddings;
pub mod error;
pub mod experiment;
pub mod generate;
pub mod oracle;
pub mod pseudodist;
pub mod rounding;
pub mod sdp;
pub mod spectral;

pub use csp::{Assignment, ConstraintGraph, Csp2Instance, Relation};
pub use error::{Error, Result};
