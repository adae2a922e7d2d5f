//! Symbolic engine for an iteration-tree calculus over abstract premice.
//!
//! The crate models premice as finite level tables over opaque ordinal
//! tokens, provides a deterministic symbolic ultrapower, builds finite
//! iteration trees under several rule sets, and implements the conversions
//! between the J-indexed and MS-style tree forms together with executable
//! checks for the invariants each construction is supposed to satisfy.

pub mod arena;
pub mod gen;
pub mod iso;
pub mod jconv;
pub mod msconv;
pub mod premouse;
pub mod tree;
pub mod ultrapower;

pub use arena::{Arena, ArenaError, Token};
