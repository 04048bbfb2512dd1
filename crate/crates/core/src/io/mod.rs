//! Binary containers and JSON documents.

mod binary;
mod docs;

pub use binary::*;
pub use docs::*;
