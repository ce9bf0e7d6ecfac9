pub mod config;
pub mod corpus;
pub mod dragonnet;
pub mod error;
pub mod labeling;
pub mod matching;
pub mod pipeline;
pub mod regress;
pub mod stats;
pub mod synthgen;
pub mod visibility;

pub use error::{Error, Result};
