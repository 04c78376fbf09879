//! Synthesis and analysis of polychromatic pulse trains.
//!
//! A polychromatic pulse train is a sequence of rectangular pulses with a
//! common Rabi frequency and duration whose carrier detunings differ from
//! pulse to pulse. Choosing the detunings shapes the excitation profile
//! `p(ε)` against a relative Rabi error `ε`: broadband (flat), narrowband
//! (peaked), passband (flat top with suppressed wings), or compensated in both
//! Rabi frequency and detuning.
//!
//! * [`su2`]: exact propagators and transition probabilities.
//! * [`deriv`]: broadband trains from vanishing derivatives of the profile.
//! * [`synthesis`]: cost-function synthesis with multistart BFGS.
//! * [`profile`]: 1D/2D sweeps and band metrics.
//! * [`noise`]: Lindblad simulation with readout error and shot noise.
//! * [`catalog`]: stored sequences and the reference fixtures.
//! * [`cli`]: the `ppt` command line.

pub mod catalog;
pub mod cli;
pub mod deriv;
pub mod error;
pub mod noise;
pub mod optim;
pub mod profile;
pub mod su2;
pub mod synthesis;

pub use error::{Error, Result};
