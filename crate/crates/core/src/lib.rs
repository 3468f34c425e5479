//! Learned binary hash codes for documents, users and items, searched exactly
//! in Hamming space with multi-index hashing.

pub mod bitcode;
pub mod cfhash;
pub mod checkpoint;
pub mod cli;
pub mod codefile;
pub mod corpus;
pub mod error;
pub mod evalbench;
pub mod hashtrain;
pub mod mih;
pub mod nn;
pub mod synthetic;

pub use bitcode::HashCode;
pub use error::{Error, Result};
pub use mih::MihIndex;
