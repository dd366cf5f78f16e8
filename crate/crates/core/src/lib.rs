//! Corpus-level social bias auditing: protected-attribute detection, regard
//! annotation, co-occurrence bias scores, negative-regard mitigation and evaluation.

pub mod artifact;
pub mod backend;
pub mod detect;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod mitigate;
pub mod pipeline;
pub mod prompt;
pub mod protocol;
pub mod regard;
pub mod report;
pub mod stats;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
