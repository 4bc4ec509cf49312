//! Exact tools for lossy source coding with side information at the decoder.
//!
//! The crate computes, for a finite memoryless source pair (X, Y) with a
//! per-letter distortion measure:
//!
//! - the rate-distortion trade-off through its family of supporting
//!   hyperplanes, together with a relaxed single-letter program that
//!   sandwiches each hyperplane value ([`region`]);
//! - a correct-decoding exponent for rates below the curve, built from a
//!   tilted information functional, plus the strong-converse deviation
//!   radius derived from it ([`exponent`]);
//! - exact small-blocklength simulations that enumerate encoders and
//!   decoders to cross-check the exponent bounds and the supporting
//!   information-spectrum and recursion identities ([`sim`], [`lemmas`]);
//! - a self-contained property suite used by the command-line `verify`
//!   runner ([`verify`]).
//!
//! All information quantities are in nats. Every search routine is
//! deterministic given its seed.

pub mod error;
pub mod exponent;
pub mod info;
pub mod joint;
pub mod lemmas;
pub mod optim;
pub mod region;
pub mod sim;
pub mod source;
pub mod verify;

pub use error::{Error, Result};
pub use info::{info_measures, InfoBundle};
pub use joint::JointQ;
pub use source::{load_source, SourceModel};
