//! Resource monotones, conic solvers, and distillation bounds for channel
//! resource theories.
//!
//! Fidelities use the squared convention throughout: for a pure state
//! `F(phi, sigma) = <phi|sigma|phi>`.

pub mod qla;
pub mod conic;
pub mod stab;
pub mod channels;
pub mod theories;
pub mod measures;
pub mod bounds;
pub mod comm;
pub mod figures;
pub mod selftest;
