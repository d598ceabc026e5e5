//! Learn a log-parsing pattern from labelled logs, model it as a hidden
//! Markov model, extract KPI values, and adapt the model to drifted logs.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod hmm;
pub mod miner;
pub mod parser;
pub mod pipeline;
pub mod preprocess;
pub mod serialization;

pub use error::{Error, Result};
pub use hmm::Hmm;
pub use parser::{KpiTable, ParsingPattern};
pub use preprocess::{EventRecord, Stopwords, TokenSequence};
