//! Quantum optimal transport through states over time.
//!
//! A state over time `Q = (rho (x) 1) * J` (Jordan product) pairs an initial
//! state with a channel given by its Jamiolkowski matrix `J`. The transport
//! cost between `rho` and `sigma` minimizes `Tr[K Q]` over channels sending
//! `rho` to `sigma`; it is computed by a built-in ADMM semidefinite solver and
//! checked against closed forms where they exist.
//!
//! Modules:
//! - [`linalg`]: dense complex matrices, partial trace/transpose, Jacobi eigensolver.
//! - [`conic`]: the ADMM solver over PSD blocks and scalar cones.
//! - [`stote`]: construction, inversion and composition of states over time.
//! - [`transport`]: cost SDPs, closed forms and property checks.
//! - [`random`]: seeded generators for states, unitaries and channels.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conic;
pub mod error;
pub mod linalg;
pub mod random;
pub mod stote;
pub mod transport;

pub use error::{Error, Result};
