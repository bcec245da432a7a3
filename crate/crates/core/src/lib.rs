//! Lorentzian conformal fields, stable Hamiltonian structures and their classification.

pub mod exterior;
pub mod field;
pub mod manifold;
pub mod spectral;
pub mod expr;
pub mod specfile;
pub mod basic;
pub mod conformal;
pub mod shs;
pub mod classify;
pub mod dynamics;
pub mod pipeline;
pub mod fixtures;
pub mod report;
pub mod selftest;
