//! Λ-Wright–Fisher processes with frequency-dependent selection, the dual
//! block-counting chain of a simple EFC process, moment-duality checks and
//! boundary classification.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod cli;
pub mod config;
pub mod duality;
pub mod efc_chain;
pub mod ensemble;
pub mod error;
pub mod flow;
pub mod measures;
pub mod quad;
pub mod rates;
pub mod special;
pub mod tables;
pub mod wf_sde;

pub use error::{Error, Result};
