//! Exact computations with ADE lattice vertex algebras, their W-subalgebras and
//! Coxeter-twisted Fock modules, ending in a check of the Virasoro constraints on
//! the Witten-Kontsevich tau-function.

pub mod a1_suite;
pub mod acceptance;
pub mod exact_arith;
pub mod lattice_va;
pub mod parallel;
pub mod quantization;
pub mod root_system;
pub mod twisted_fock;
