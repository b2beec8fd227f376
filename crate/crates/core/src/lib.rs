//! Question answering over a mixed store of KB triples and textual facts with
//! a key-value memory network, fact-level explanation methods (attention,
//! LIME, input perturbation), a fake-fact pointing game for evaluating them,
//! and the bookkeeping for a paired human comparison study.

pub mod error;
pub mod explain;
pub mod hybrid;
pub mod knowledge;
pub mod model;
pub mod seed;
pub mod study;

pub use error::{Error, Result};
