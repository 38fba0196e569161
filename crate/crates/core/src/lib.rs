//! Weak-constraint 4D-Var laboratory for estimating model-error covariances
//! on a biased Lorenz-96 twin experiment.
//!
//! The crate is organized by stage of the workflow:
//!
//! * [`dynamics`]: the toy model, its tangent-linear and adjoint, and SPPT-like noise.
//! * [`covmodel`]: dense covariance algebra, tapers, PSD repair and the `WERRMAT` format.
//! * [`var4d`]: strong/weak-constraint 4D-Var in the forcing formulation.
//! * [`neuralerr`]: the model-error emulator network and its checkpoint format.
//! * [`qpipeline`]: the Q construction recipes.
//! * [`diagnostics`]: covariance and cycling diagnostics written as CSV.
//! * [`harness`]: configuration, truth/observation synthesis, cycling and run archives.

pub mod covmodel;
pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod harness;
pub mod neuralerr;
pub mod qpipeline;
pub mod util;
pub mod var4d;

pub use error::{Error, Result};
