//! Enumerate every fixed point of loopy belief propagation on small binary
//! graphical models.
//!
//! The BP fixed-point conditions are compiled into a sparse polynomial system
//! ([`polysys`]) which is solved by homotopy continuation ([`homotopy`]). The
//! positive real solutions are exactly the BP fixed points; [`analysis`] scores
//! them against the brute-force oracle in [`exact`].

pub mod analysis;
pub mod bp;
pub mod codes;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod homotopy;
pub mod model;
pub mod polysys;

pub use error::{Error, Result};
