//! Simulation, training, and evaluation toolkit for a full-duplex base
//! station that learns transmit/receive analog beams by actively probing
//! the downlink, uplink, and self-interference channels over a fixed number
//! of time slots.
//!
//! The crate is organized around five pieces:
//!
//! - [`channel`]: array geometry, LOS user channels, the near-field
//!   spherical-wave self-interference coupling, Rician mixing, and
//!   link-budget normalization.
//! - [`metrics`]: SNR/INR/SINR/rate formulas and the dB-domain noisy
//!   measurement model.
//! - [`learner`]: the recurrent probing policy (LSTM plus two synthesis
//!   heads) and its end-to-end training by backpropagation through the
//!   probing unroll.
//! - [`baselines`]: MRT+MRC, the full-duplex capacity bound, and a
//!   non-active random-probing control.
//! - [`harness`]: Monte Carlo experiments, CDF/sweep statistics, CSV
//!   persistence, and the `fdxbl` command-line interface.
//!
//! The `book/` directory at the repository root contains a narrative guide;
//! its code snippets are compiled and run as doctests (see the bottom of
//! this file), so the guide cannot drift out of sync with the API.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod learner;
pub mod math;
pub mod metrics;

pub use error::{Error, Result};

// Book chapters double as doctests: every fenced Rust block in the guide is
// compiled and executed by `cargo test --doc`.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(ch01_overview, "../../../book/src/overview.md");
    chapter!(ch02_system_model, "../../../book/src/system-model.md");
    chapter!(ch03_probing, "../../../book/src/probing-and-learning.md");
    chapter!(ch04_baselines, "../../../book/src/baselines.md");
    chapter!(ch05_harness, "../../../book/src/evaluation.md");
}
