//! Tiny bilingual masked-language-model laboratory for comparing positional
//! encodings.

pub mod analysis;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod multieval;
pub mod numerics;
pub mod posenc;
pub mod trainer;

pub use error::{Error, Result};
