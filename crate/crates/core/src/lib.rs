//! Evolution-aware antibody language modelling.
//!
//! The crate covers the full desk-scale pipeline: a synthetic V(D)J
//! repertoire simulator, corpus preparation, construction of training
//! instances for masked language modelling (MLM), ancestor germline
//! prediction (AGP) and mutation position prediction (MPP), a small
//! reverse-mode autograd engine with a transformer encoder, training
//! loops, and the four-task benchmark harness with its metrics and
//! statistical tests.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod seqcore;
pub mod simgen;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
pub use seqcore::{Alphabet, AntibodyRecord, Label, Stage};
