//! Device-level simulator of an all-spin non-binary matrix multiplier.
//!
//! A straintronic MTJ multiplies two voltage-encoded operands, and a
//! domain-wall synapse driven by spin-orbit torque accumulates the products.
//! The crate models both devices from the magnet energy landscape up,
//! runs integer matrix products through the physical pipeline, and accounts
//! for energy, latency and footprint against an electronic crossbar.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod config;
pub mod engine;
pub mod error;
pub mod magnet;
pub mod multiplier;
pub mod readout;
pub mod rng;
pub mod sllg;
pub mod synapse;
