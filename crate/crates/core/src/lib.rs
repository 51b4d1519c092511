//! Joint movable-antenna placement and receive beamforming for a ground
//! station tracking a Walker-Delta LEO constellation.
//!
//! The pipeline runs orbit geometry → per-slot channel snapshots → an
//! alternating optimization of beam weights (closed form) and antenna
//! positions (successive convex approximation), maximizing the average rate
//! over an observation window.

pub mod beamformer;
pub mod channel;
pub mod commands;
pub mod error;
pub mod fp_transform;
pub mod orbit;
pub mod placement;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
