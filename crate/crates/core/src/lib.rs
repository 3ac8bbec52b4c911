//! Simulation-free generative flows on the rotation group SO(3) and on the
//! centered product group SE(3)^N_0.
//!
//! Three training variants share one pipeline:
//!
//! * `Base`: deterministic geodesic flow matching with independent coupling,
//! * `Ot`: the same flow with pairs drawn from an exact minibatch transport plan,
//! * `Sfm`: stochastic flow matching where the geodesic interpolant is replaced
//!   by an isotropic-Gaussian approximation of the Brownian bridge.

pub mod bridge;
pub mod config;
pub mod error;
pub mod eval;
pub mod igso3;
pub mod inference;
pub mod net;
pub mod ot;
pub mod rng;
pub mod se3;
pub mod so3;
pub mod training;

pub use error::{Error, Result};
pub use se3::{FrameSet, RigidTransform};
pub use so3::Rotation;
