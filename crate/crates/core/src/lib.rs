//! Active-RIS-aided multi-pair device-to-device links over spatially
//! correlated Rician channels with phase noise.
//!
//! The crate has three layers:
//!
//! * [`channel`] and [`numerics`] describe the statistical channel and draw
//!   realizations from it;
//! * [`closedform`] evaluates the approximate ergodic rates (plus their
//!   asymptotes) from statistical CSI only, and [`montecarlo`] estimates the
//!   same rates by simulating the received-signal model;
//! * [`gaopt`] searches transmit powers and discrete RIS phases with a
//!   genetic algorithm, and [`experiment`] sweeps whole scenarios into CSV.
//!
//! The guide under `book/` walks through the model; its code listings are
//! compiled as doctests of this crate.

pub mod channel;
pub mod closedform;
pub mod error;
pub mod experiment;
pub mod gaopt;
pub mod montecarlo;
pub mod numerics;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/phase-noise.md")]
    mod phase_noise {}
    #[doc = include_str!("../../../book/src/closed-form.md")]
    mod closed_form {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/optimization.md")]
    mod optimization {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
