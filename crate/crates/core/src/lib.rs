//! Adaptive diversity cache: a training-free, plug-in calibration layer for
//! long-tailed classifiers.
//!
//! Predictions stream into per-class feature caches that keep the samples
//! with the best mix of confidence and diversity ([`cjcs`]). Rare classes get
//! larger caches, topped up with augmented features ([`faca`]). At inference
//! a query is matched against the cached features of its predicted object and
//! the affinity-weighted votes are added to the base logits ([`retrieval`]).
//! [`harness`] drives the whole protocol over synthetic or replayed data.

pub mod cjcs;
pub mod config;
pub mod error;
pub mod exec;
pub mod faca;
pub mod harness;
pub mod numeric;
pub mod retrieval;
pub mod seed;

pub use cjcs::{CacheEntry, CacheState, ClassQueue};
pub use config::AdcConfig;
pub use error::{AdcError, Result};
pub use exec::ExecMode;
pub use faca::FrequencyTable;
pub use numeric::{ClassSpace, FeatureVector, InteractionClass, LogitVector, ProbVector};
