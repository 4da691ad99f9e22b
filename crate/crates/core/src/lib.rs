//! Lightweight ECC-based mutual authentication and key agreement between
//! mobile users and edge servers.
//!
//! The crate covers the full lifecycle:
//!
//! - [`crypto`]: curve arithmetic, H1/H2 hashing and canonical encodings.
//! - [`registry`]: the registration center, pseudo-identity issuance and the
//!   public directory.
//! - [`handshake`]: the three-message user/server state machines.
//! - [`codec`]: the framed wire format for the handshake messages.
//! - [`netsim`]: a Dolev-Yao channel simulator and attack scenarios.
//! - [`costmodel`]: symbolic operation-count and message-size models and
//!   live operation counters.

pub mod codec;
pub mod costmodel;
pub mod crypto;
pub mod handshake;
pub mod netsim;
pub mod registry;

#[cfg(test)]
pub(crate) mod testutil;
