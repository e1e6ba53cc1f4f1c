//! Frequency-aware cache adaptation: inverse-frequency capacity allocation
//! and augmentation-based completion of under-filled queues.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cjcs::{self, queue_order, CacheEntry, ClassQueue};
use crate::config::{AdcConfig, FrequencySource};
use crate::error::{AdcError, Result};
use crate::numeric::{self, entropy_slice, softmax_slice, FeatureVector};
use crate::seed;

/// Observed class counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub counts: Vec<u64>,
    pub total: u64,
    pub max_count: u64,
    pub source: FrequencySource,
}

impl FrequencyTable {
    pub fn online(n_classes: usize) -> Self {
        Self {
            counts: vec![0; n_classes],
            total: 0,
            max_count: 0,
            source: FrequencySource::Online,
        }
    }

    pub fn from_counts(counts: Vec<u64>, source: FrequencySource) -> Self {
        let total = counts.iter().sum();
        let max_count = counts.iter().copied().max().unwrap_or(0);
        Self {
            counts,
            total,
            max_count,
            source,
        }
    }

    /// Records one occurrence of class `c`. Offline tables are fixed and ignore it.
    pub fn observe(&mut self, c: usize) {
        if self.source == FrequencySource::Offline {
            return;
        }
        self.counts[c] += 1;
        self.total += 1;
        self.max_count = self.max_count.max(self.counts[c]);
    }

    /// Parses `flat_class_index count` lines. Blank lines and `#` comments are
    /// skipped; classes absent from the file count zero.
    pub fn parse_offline(text: &str, n_classes: usize, path: &Path) -> Result<Self> {
        let mut counts = vec![0u64; n_classes];
        let err = |line: usize, message: String| AdcError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(i + 1, "expected `class_index count`".into()));
            };
            let class: usize = a
                .parse()
                .map_err(|e| err(i + 1, format!("bad class index {a:?}: {e}")))?;
            let count: u64 = b
                .parse()
                .map_err(|e| err(i + 1, format!("bad count {b:?}: {e}")))?;
            if class >= n_classes {
                return Err(err(
                    i + 1,
                    format!("class index {class} outside [0, {n_classes})"),
                ));
            }
            counts[class] = count;
        }
        Ok(Self::from_counts(counts, FrequencySource::Offline))
    }

    pub fn load_offline(path: &Path, n_classes: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AdcError::io(path, e))?;
        Self::parse_offline(&text, n_classes, path)
    }
}

/// Inverse-frequency scaling `((n_max + g) / (n_c + g))^a * exp(-l * n_c / n_total)`.
/// Before any observation every class scales by one.
pub fn scaling_factor(n_c: u64, freq: &FrequencyTable, cfg: &AdcConfig) -> f64 {
    if freq.total == 0 {
        return 1.0;
    }
    let n_c = n_c as f64;
    let inverse = ((freq.max_count as f64 + cfg.gamma_smooth) / (n_c + cfg.gamma_smooth))
        .powf(cfg.alpha_alloc);
    inverse * (-cfg.lambda_mod * n_c / freq.total as f64).exp()
}

/// `clip(floor(k_base * scaling), k_min, k_max)`, or plain `k_base` when
/// adaptive capacity is switched off.
pub fn capacity(class: usize, freq: &FrequencyTable, cfg: &AdcConfig) -> usize {
    if !cfg.use_adaptive_capacity {
        return cfg.k_base;
    }
    let raw = (cfg.k_base as f64 * scaling_factor(freq.counts[class], freq, cfg)).floor();
    // Compare in f64 so an enormous scaling cannot overflow the cast.
    if raw >= cfg.k_max as f64 {
        cfg.k_max
    } else {
        (raw as usize).clamp(cfg.k_min, cfg.k_max)
    }
}

/// Feature-space stand-ins for image-space geometric augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    /// Zero `ceil(0.1 * severity * d)` coordinates (crop).
    CoordinateDropout,
    /// Rotate within a random coordinate plane by up to `severity * 15` degrees.
    SubspaceRotation,
    /// Scale each coordinate by a factor in `1 +- 0.1 * severity` (scale, shear).
    CoordinateScale,
    /// Translate along a random direction by `0.05 * severity * |f|`.
    CoordinateShift,
    /// Add `N(0, (0.05 * severity)^2)` noise per coordinate.
    GaussianJitter,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 5] = [
        AugmentOp::CoordinateDropout,
        AugmentOp::SubspaceRotation,
        AugmentOp::CoordinateScale,
        AugmentOp::CoordinateShift,
        AugmentOp::GaussianJitter,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub op: AugmentOp,
    pub severity: f64,
    pub rng_seed: u64,
}

/// Number of coordinates the dropout op zeroes.
pub fn dropout_count(severity: f64, dim: usize) -> usize {
    ((0.1 * severity * dim as f64).ceil() as usize).min(dim)
}

/// Applies one stochastic perturbation and re-normalises. Zero severity is the identity.
pub fn augment_feature(f: &FeatureVector, spec: &AugmentSpec) -> FeatureVector {
    if spec.severity == 0.0 {
        return f.clone();
    }
    let mut rng = seed::rng(spec.rng_seed);
    let s = spec.severity;
    let d = f.dim();
    let mut v = f.as_slice().to_vec();
    match spec.op {
        AugmentOp::CoordinateDropout => {
            for i in index::sample(&mut rng, d, dropout_count(s, d)) {
                v[i] = 0.0;
            }
        }
        AugmentOp::SubspaceRotation => {
            if d >= 2 {
                let pair = index::sample(&mut rng, d, 2);
                let (i, j) = (pair.index(0), pair.index(1));
                let max_angle = (s * 15.0).to_radians();
                let theta = rng.random_range(-max_angle..=max_angle);
                let (sin, cos) = theta.sin_cos();
                let (a, b) = (v[i], v[j]);
                v[i] = cos * a - sin * b;
                v[j] = sin * a + cos * b;
            }
        }
        AugmentOp::CoordinateScale => {
            let spread = 0.1 * s;
            for x in v.iter_mut() {
                *x *= 1.0 + rng.random_range(-spread..=spread);
            }
        }
        AugmentOp::CoordinateShift => {
            let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let dir_norm = numeric::norm(&dir);
            if dir_norm > 0.0 {
                let step = 0.05 * s * f.norm() / dir_norm;
                v.iter_mut().zip(&dir).for_each(|(x, u)| *x += step * u);
            }
        }
        AugmentOp::GaussianJitter => {
            let std = 0.05 * s;
            for x in v.iter_mut() {
                *x += std * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let n = numeric::norm(&v);
    if n >= numeric::DEGENERATE_NORM {
        v.iter_mut().for_each(|x| *x /= n);
    }
    FeatureVector::from_vec_unchecked(v)
}

/// Entropy of `softmax(beta * cos(variant, member))` over the queue members.
/// Low values mean the variant sits decisively near part of the queue.
fn proxy_entropy(variant: &[f64], queue: &[CacheEntry], beta: f64) -> f64 {
    let sims: Vec<f64> = queue
        .iter()
        .map(|e| beta * numeric::cosine(variant, e.feature.as_slice()))
        .collect();
    entropy_slice(&softmax_slice(&sims))
}

/// Builds the augmented entries that would top `q` up to `k_final`, without
/// assigning sequence numbers. Empty when the queue is already full or has
/// nothing to augment.
///
/// Each source entry spawns `aug_count` variants with uniformly drawn ops; the
/// `aug_keep_count()` variants (at least one) with the lowest proxy entropy
/// survive; survivors are scored against `q` and the best `k_final - |q|` are
/// returned in score order. Variants inherit their source's logits.
pub fn completion_variants(
    q: &ClassQueue,
    k_final: usize,
    cfg: &AdcConfig,
    seed: u64,
) -> Vec<CacheEntry> {
    let delta = k_final.saturating_sub(q.len());
    if delta == 0 {
        return Vec::new();
    }
    if q.is_empty() {
        log::warn!(
            "cannot complete empty queue for class {:?}: nothing to augment",
            q.class
        );
        return Vec::new();
    }
    // Augment observed samples only, unless the queue holds nothing else.
    let originals: Vec<&CacheEntry> = q.entries.iter().filter(|e| !e.augmented).collect();
    let sources = if originals.is_empty() {
        q.entries.iter().collect()
    } else {
        originals
    };

    let keep = cfg.aug_keep_count().max(1);
    let mut rng = seed::rng(seed);
    let mut scored: Vec<CacheEntry> = Vec::with_capacity(sources.len() * keep);
    for src in sources {
        let mut variants: Vec<(f64, FeatureVector)> = (0..cfg.aug_count)
            .map(|_| {
                let spec = AugmentSpec {
                    op: AugmentOp::ALL[rng.random_range(0..AugmentOp::ALL.len())],
                    severity: cfg.severity,
                    rng_seed: rng.next_u64(),
                };
                let v = augment_feature(&src.feature, &spec);
                (proxy_entropy(v.as_slice(), &q.entries, cfg.beta), v)
            })
            .collect();
        variants.sort_by(|a, b| a.0.total_cmp(&b.0));
        variants.truncate(keep);
        for (_, feature) in variants {
            let (diversity, confidence, joint) =
                cjcs::score_candidate(&q.entries, feature.as_slice(), src.entropy, cfg);
            scored.push(CacheEntry {
                feature,
                logits: src.logits.clone(),
                probs: src.probs.clone(),
                entropy: src.entropy,
                diversity,
                confidence,
                joint_score: joint,
                seq: 0,
                augmented: true,
            });
        }
    }
    scored.sort_by(|a, b| b.joint_score.total_cmp(&a.joint_score));
    scored.truncate(delta);
    scored
}

/// Appends `variants` to `q`, numbering them from `next_seq`, and restores queue order.
pub(crate) fn append_variants(
    q: &mut ClassQueue,
    variants: Vec<CacheEntry>,
    k_final: usize,
    next_seq: &mut u64,
) {
    for mut v in variants {
        v.seq = *next_seq;
        *next_seq += 1;
        q.entries.push(v);
    }
    q.entries.sort_by(queue_order);
    q.capacity = k_final.max(q.len());
}

/// Tops `q` up to `k_final` entries with augmented variants. Original entries
/// are kept untouched. Returns the number of entries added.
pub fn complete_queue(
    q: &mut ClassQueue,
    k_final: usize,
    cfg: &AdcConfig,
    seed: u64,
    next_seq: &mut u64,
) -> usize {
    let variants = completion_variants(q, k_final, cfg, seed);
    let added = variants.len();
    append_variants(q, variants, k_final, next_seq);
    added
}
