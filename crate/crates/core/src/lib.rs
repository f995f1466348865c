//! Controller synthesis for discrete-time linear-quadratic control: the
//! competitive-ratio-optimal controller, H2 and H-infinity baselines, the
//! clairvoyant offline optimum, plus simulation, frequency analysis and a
//! pendulum MPC harness.
#![no_std]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod model;
pub mod riccati;
pub mod factorization;
pub mod controllers;
pub mod search;
pub mod freq;
pub mod sim;
pub mod mpc;
pub mod random;
pub mod verify;

pub use error::{Error, Infeasibility, Reason, Result};
