//! Robust-control toolkit for cascaded two-port networked control systems.
//!
//! The crate provides:
//! - FDLTI system algebra (transfer functions, state space, Gang of Four,
//!   Pade delay approximants) in [`lti`],
//! - H-infinity norms and the closed-loop stability margin in [`hinf`],
//! - the nu-gap metric and delay-uncertainty estimates in [`gap`],
//! - a finite-dimensional sampling oracle for conelike neighborhoods in
//!   [`cone_geometry`],
//! - the arcsine robust-stability certificate in [`certificate`],
//! - a fixed-step nonlinear simulator for cascaded two-port NCS loops in
//!   [`sim`].

pub mod certificate;
pub mod cone_geometry;
pub mod error;
pub mod gap;
pub mod hinf;
pub mod lti;
pub mod sim;

pub use error::{Error, Result};
