//! Affinity-weighted cache retrieval and logit fusion.

use ndarray::{Array1, Array2, ArrayView1};

use crate::cjcs::{CacheEntry, CacheState};
use crate::config::AdcConfig;
use crate::error::{AdcError, Result};
use crate::numeric::{l2_normalize, FeatureVector, LogitVector};

/// Cached keys (one normalised feature per row) and one-hot label values.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyValuePair {
    pub keys: Array2<f64>,
    pub values: Array2<f64>,
}

impl KeyValuePair {
    pub fn len(&self) -> usize {
        self.keys.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.nrows() == 0
    }
}

/// Every cached entry whose class involves `object_pred`.
pub fn gather_entries(state: &CacheState, object_pred: usize) -> Vec<&CacheEntry> {
    if object_pred >= state.space.n_objects {
        return Vec::new();
    }
    state.queues[state.space.classes_of_object(object_pred)]
        .iter()
        .flat_map(|q| &q.entries)
        .collect()
}

/// Like [`gather_entries`], falling back to the whole cache when the object
/// has nothing cached and `global_fallback` is set.
pub fn gather_for_query<'a>(
    state: &'a CacheState,
    object_pred: usize,
    cfg: &AdcConfig,
) -> Vec<&'a CacheEntry> {
    let entries = gather_entries(state, object_pred);
    if entries.is_empty() && cfg.global_fallback {
        return state.queues.iter().flat_map(|q| &q.entries).collect();
    }
    entries
}

/// Stacks entry features into keys and one-hot pseudo-labels into values.
/// `None` when there is nothing to retrieve.
pub fn build_key_value(entries: &[&CacheEntry], n_classes: usize) -> Option<KeyValuePair> {
    let first = entries.first()?;
    let d = first.feature.dim();
    let mut keys = Array2::zeros((entries.len(), d));
    let mut values = Array2::zeros((entries.len(), n_classes));
    for (i, e) in entries.iter().enumerate() {
        keys.row_mut(i)
            .assign(&ArrayView1::from(e.feature.as_slice()));
        values[[i, e.label()]] = 1.0;
    }
    Some(KeyValuePair { keys, values })
}

/// Dot product of the query with every key.
pub fn affinity(f_p: &FeatureVector, kv: &KeyValuePair) -> Result<Array1<f64>> {
    if f_p.dim() != kv.keys.ncols() {
        return Err(AdcError::Dimension {
            what: "query feature",
            expected: kv.keys.ncols(),
            got: f_p.dim(),
        });
    }
    Ok(kv.keys.dot(&ArrayView1::from(f_p.as_slice())))
}

/// `alpha_fuse * w^T V` with `w = exp(beta * (a - 1))`.
pub fn cache_logits(a: &Array1<f64>, kv: &KeyValuePair, alpha_fuse: f64, beta: f64) -> LogitVector {
    let w = a.mapv(|x| (beta * (x - 1.0)).exp());
    let out = kv.values.t().dot(&w) * alpha_fuse;
    LogitVector::from_vec_unchecked(out.to_vec())
}

pub fn fuse(logit_base: &LogitVector, logit_cache: &LogitVector) -> Result<LogitVector> {
    if logit_base.len() != logit_cache.len() {
        return Err(AdcError::Dimension {
            what: "cache logits",
            expected: logit_base.len(),
            got: logit_cache.len(),
        });
    }
    Ok(LogitVector::from_vec_unchecked(
        logit_base
            .as_slice()
            .iter()
            .zip(logit_cache.as_slice())
            .map(|(b, c)| b + c)
            .collect(),
    ))
}

/// Full read path: gather, build, score the normalised query, weight and fuse.
/// An empty retrieval set leaves the base logits untouched.
pub fn enhance(
    state: &CacheState,
    feature: &FeatureVector,
    logit_base: &LogitVector,
    object_pred: usize,
    cfg: &AdcConfig,
) -> Result<LogitVector> {
    if logit_base.len() != state.n_classes() {
        return Err(AdcError::Dimension {
            what: "base logits",
            expected: state.n_classes(),
            got: logit_base.len(),
        });
    }
    let entries = gather_for_query(state, object_pred, cfg);
    let Some(kv) = build_key_value(&entries, state.n_classes()) else {
        return Ok(logit_base.clone());
    };
    let query = l2_normalize(feature).feature;
    let a = affinity(&query, &kv)?;
    fuse(logit_base, &cache_logits(&a, &kv, cfg.alpha_fuse, cfg.beta))
}
