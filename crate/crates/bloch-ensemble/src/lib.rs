//! Ensemble control of Bloch equations with unknown Larmor frequency.

pub mod bloch;
pub mod bracket;
pub mod cli;
pub mod compare;
pub mod error;
pub mod fourier;
pub mod halving;
pub mod linear;
pub mod quad;
pub mod reach;
pub mod so3;
pub mod verify;

pub use bloch::{simulate, ControlSchedule, EnsembleState, OmegaGrid, PulseEvent};
pub use error::{Error, Result};
pub use so3::{Mat3, Vec3};
