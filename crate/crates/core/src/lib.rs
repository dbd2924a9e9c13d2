//! Collisions between a finite-dimensional quantum system and a particle
//! moving in one dimension.
//!
//! The pipeline runs from coupled-channel S-matrices ([`channel`]) and
//! particle energy states ([`particle`]) to the exact collision map
//! ([`map`]). On top of the map sit non-perturbative response spectra
//! ([`response`]), Kubo's formula for a classical drive ([`kubo`]) and
//! repeated Poisson collisions ([`qme`]). [`config`], [`output`] and
//! [`runner`] drive experiments from TOML files and write CSV.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::needless_range_loop
)]

pub mod channel;
pub mod config;
pub mod error;
pub mod interp;
pub mod kubo;
pub mod map;
pub mod ode;
pub mod operator;
pub mod output;
pub mod particle;
pub mod qme;
pub mod response;
pub mod runner;

pub use error::{Error, Result};
