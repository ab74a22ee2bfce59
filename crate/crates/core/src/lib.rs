//! Executable constructions and verifiers for partially hyperbolic dynamics.
//!
//! The crate is organised by analysis:
//!
//! * [`linear_models`]: characteristic polynomials, spectra and invariant
//!   splittings of unimodular integer matrices.
//! * [`maps`]: the example maps (linear automorphisms, derived-from-Anosov
//!   deformations, Denjoy skew products, the horseshoe skew product) behind
//!   one lift-based interface.
//! * [`shadowing`]: the semiconjugacy `H` with `H∘F = A∘H` and its
//!   certified truncation bounds.
//! * [`conley`]: box transition graphs, chain classes, combinatorial
//!   Lyapunov functions, trapping certificates and basins.
//! * [`cones`]: sample-resolution cone, domination and uniformity checks.
//! * [`cocycles`]: periodic linear cocycles and the two-dimensional
//!   perturbation algorithms.
//! * [`rotation`]: rotation vectors and non-resonance.
//! * [`horseshoe_analysis`]: periodic points, heteroclinic scans and the
//!   isolation probe for the horseshoe skew product.
//! * [`cli`]: configuration-driven runs that emit deterministic artifacts.

pub mod cli;
pub mod cocycles;
pub mod cones;
pub mod conley;
pub mod error;
pub mod horseshoe_analysis;
pub mod linalg;
pub mod linear_models;
pub mod maps;
pub mod output;
pub mod rotation;
pub mod shadowing;

pub use error::{Error, Result};
