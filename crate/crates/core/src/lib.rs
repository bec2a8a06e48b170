//! Contraction-based trajectory tracking for port-Hamiltonian mechanical
//! systems.
//!
//! Three closed-loop designs are provided in [`controllers`]: a
//! velocity-free design with a dynamic extension, a design robust to
//! matched constant disturbances, and their combination. [`cert`] checks
//! the contraction conditions numerically, [`sim`] integrates the coupled
//! plant and controller, and [`scenarios`] ships the ball-on-wheel and a
//! fully actuated benchmark.

pub mod cert;
pub mod controllers;
pub mod error;
pub mod io;
pub mod linalg;
pub mod numdiff;
pub mod ph;
pub mod reference;
pub mod scenarios;
pub mod sim;
pub mod table;

pub use error::{Error, Result};
