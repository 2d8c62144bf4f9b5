//! Variational Hamiltonians, Donsker-Varadhan control costs and resolvent
//! solvers for Hamilton-Jacobi-Bellman equations.

pub mod containment;
pub mod cost;
pub mod domain;
pub mod doubling;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod inclusion;
pub mod io;
pub mod jump;
pub mod lattice;
pub mod legendre;
pub mod models;
pub mod optim;
pub mod penalization;
pub mod report;
pub mod resolvent;
pub mod torus;
pub mod vecops;
pub mod verify;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
