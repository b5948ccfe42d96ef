//! Symmetric private information retrieval on graph-replicated storage.
//!
//! Messages live on the edges of a graph (or multigraph) and servers on its
//! vertices. The crate executes the retrieval schemes over a prime field,
//! converts PIR schemes with the symmetric retrieval property into SPIR
//! schemes for both common-randomness settings, verifies reliability, user
//! privacy and database privacy exactly, and evaluates the closed-form rates
//! and capacity bounds.

pub mod analysis;
pub mod converters;
pub mod error;
pub mod field;
pub mod format;
pub mod general_scheme;
pub mod graphs;
pub mod iso;
pub mod linalg;
pub mod par;
pub mod pir_base;
pub mod protocol;
pub mod table;
pub mod verifier;

pub use error::{Error, Result};
