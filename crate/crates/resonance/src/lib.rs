//! Numerical study of T-periodic solutions of semilinear parabolic equations
//! u' = -Au + lambda u + eps F(t, u) at resonance: lambda sits on the spectrum
//! of the elliptic operator A and the nonlinearity F is bounded, so existence
//! hinges on averaging, topological degree, and Landesman-Lazer or
//! strong-resonance conditions rather than on plain contraction arguments.
//!
//! The pipeline: discretize A ([`elliptic`]), split the state space around the
//! resonant eigenvalue ([`spectral`]), integrate mild solutions with
//! exponential time differencing ([`evolve`]), locate fixed points of the
//! period map ([`poincare`]), compute Brouwer/Leray-Schauder degrees
//! ([`degree`]), and audit the solvability conditions ([`conditions`]).

pub mod conditions;
pub mod config;
pub mod degree;
pub mod elliptic;
pub mod error;
pub mod evolve;
pub mod experiment;
pub mod nonlinearity;
pub mod par;
pub mod poincare;
pub mod spectral;

pub use error::{Error, Result};
