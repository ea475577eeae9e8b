//! Local distinguishability toolkit for multipartite orthogonal state sets.

pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod oplm;
pub mod partition;
pub mod protocol;
pub mod qset;
pub mod render;
pub mod search;
pub mod state;
pub mod upb;

pub use error::{Error, Result};
