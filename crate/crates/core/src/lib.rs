//! Exact construction and topological analysis of ReLU decision regions.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod constructions;
pub mod error;
pub mod exact;
pub mod network;

pub use error::{Error, Result};
pub mod arrangement;
pub mod stability;
pub mod unionfind;
pub mod homology;
pub mod verify;
